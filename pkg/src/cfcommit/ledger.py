"""Append-only ledger of counterfactual commitments.

Every mutation appends an event; replaying the event log from empty
reconstructs the exact ledger state, which is what makes resolutions
independently auditable. Status transitions follow a fixed DAG:

    Outstanding -> Implemented | Expired | Void
    Implemented -> Honored | Broken | Void | Expired

Terminal statuses are immutable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .model import ScoringModel, certainty_of, predict
from .policy import Coverage, CoverageDecision
from .search import Counterfactual, counterfactual_from_dict, counterfactual_to_dict


class LedgerError(ValueError):
    """Transition, ordering, or replay violation."""


class CommitmentStatus(str, Enum):
    OUTSTANDING = "Outstanding"
    IMPLEMENTED = "Implemented"
    HONORED = "Honored"
    BROKEN = "Broken"
    VOID = "Void"
    EXPIRED = "Expired"


TERMINAL_STATUSES = frozenset(
    {
        CommitmentStatus.HONORED,
        CommitmentStatus.BROKEN,
        CommitmentStatus.VOID,
        CommitmentStatus.EXPIRED,
    }
)

ALLOWED_TRANSITIONS = {
    CommitmentStatus.OUTSTANDING: frozenset(
        {CommitmentStatus.IMPLEMENTED, CommitmentStatus.EXPIRED, CommitmentStatus.VOID}
    ),
    CommitmentStatus.IMPLEMENTED: frozenset(
        {
            CommitmentStatus.HONORED,
            CommitmentStatus.BROKEN,
            CommitmentStatus.VOID,
            CommitmentStatus.EXPIRED,
        }
    ),
}


@dataclass(eq=False)
class Commitment:
    """One promise: a counterfactual bound to a subject, a policy, and the
    t0 (issued) / t1 (implemented) / t2 (resolved) timestamps."""

    commitment_id: int
    counterfactual: Counterfactual
    policy_id: str
    issued_at: int
    implemented_at: int | None = None
    resolved_at: int | None = None
    status: CommitmentStatus = CommitmentStatus.OUTSTANDING
    resolution_reason: str | None = None

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Commitment)
            and self.commitment_id == other.commitment_id
            and self.counterfactual == other.counterfactual
            and self.policy_id == other.policy_id
            and self.issued_at == other.issued_at
            and self.implemented_at == other.implemented_at
            and self.resolved_at == other.resolved_at
            and self.status == other.status
            and self.resolution_reason == other.resolution_reason
        )

    @property
    def is_terminal(self) -> bool:
        return self.status in TERMINAL_STATUSES


class Ledger:
    """Single-writer commitment store with an append-only event log."""

    def __init__(self) -> None:
        self.commitments: list[Commitment] = []
        self.events: list[dict] = []
        self._by_id: dict[int, Commitment] = {}
        self._issued_pairs: set[tuple[int, int]] = set()

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Ledger)
            and self.commitments == other.commitments
            and self.events == other.events
        )

    def __len__(self) -> int:
        return len(self.commitments)

    def get(self, commitment_id: int) -> Commitment:
        try:
            return self._by_id[commitment_id]
        except KeyError:
            raise LedgerError(f"unknown commitment id {commitment_id}") from None

    def _append_event(self, event_type: str, commitment_id: int, step: int, payload: dict) -> None:
        self.events.append(
            {
                "event_type": event_type,
                "commitment_id": commitment_id,
                "step": step,
                "payload": payload,
            }
        )

    def _transition(self, commitment: Commitment, new_status: CommitmentStatus) -> None:
        allowed = ALLOWED_TRANSITIONS.get(commitment.status, frozenset())
        if new_status not in allowed:
            raise LedgerError(
                f"commitment {commitment.commitment_id}: illegal transition "
                f"{commitment.status.value} -> {new_status.value}"
            )
        commitment.status = new_status

    # -- lifecycle operations ------------------------------------------------

    def has_issued(self, subject_id: int, model_version: int) -> bool:
        return (subject_id, model_version) in self._issued_pairs

    def issue(self, counterfactual: Counterfactual, policy_id: str, now: int) -> Commitment:
        """Record a newly shared counterfactual as an Outstanding commitment."""
        if now < 0:
            raise LedgerError("issue time must be nonnegative")
        pair = (counterfactual.subject_id, counterfactual.model_version_at_issue)
        if pair in self._issued_pairs:
            raise LedgerError(
                f"subject {pair[0]} already holds a commitment under model version {pair[1]}"
            )
        commitment = Commitment(
            commitment_id=len(self.commitments) + 1,
            counterfactual=counterfactual,
            policy_id=policy_id,
            issued_at=now,
        )
        self.commitments.append(commitment)
        self._by_id[commitment.commitment_id] = commitment
        self._issued_pairs.add(pair)
        self._append_event(
            "issued",
            commitment.commitment_id,
            now,
            {"policy_id": policy_id, "counterfactual": counterfactual_to_dict(counterfactual)},
        )
        return commitment

    def mark_implemented(self, commitment_id: int, t1: int) -> Commitment:
        """The subject carried the scenario out at t1; t1 must lie strictly after t0."""
        commitment = self.get(commitment_id)
        if commitment.status is not CommitmentStatus.OUTSTANDING:
            raise LedgerError(
                f"commitment {commitment_id} is {commitment.status.value}, cannot implement"
            )
        if t1 <= commitment.issued_at:
            raise LedgerError(
                f"implementation time {t1} must be strictly after issuance at {commitment.issued_at}"
            )
        self._transition(commitment, CommitmentStatus.IMPLEMENTED)
        commitment.implemented_at = t1
        self._append_event("implemented", commitment_id, t1, {})
        return commitment

    def resolve(
        self,
        commitment_id: int,
        model_now: ScoringModel,
        coverage: CoverageDecision,
        t2: int,
    ) -> Commitment:
        """Ask the current model for the committed point's outcome and settle.

        Void if the policy's boundary conditions lapsed; Honored if the model
        agrees with the committed outcome; Honored with reason
        "policy_override" if it disagrees but the policy covers the promise
        (the institution overrides its own model); Broken otherwise.
        """
        commitment = self.get(commitment_id)
        if commitment.status is not CommitmentStatus.IMPLEMENTED:
            raise LedgerError(
                f"commitment {commitment_id} is {commitment.status.value}, cannot resolve"
            )
        if t2 < commitment.implemented_at:
            raise LedgerError(
                f"resolution time {t2} precedes implementation at {commitment.implemented_at}"
            )
        cf = commitment.counterfactual
        prediction = predict(model_now, cf.point)
        if coverage.outcome is Coverage.VOID_BY_BOUNDARY:
            new_status, reason = CommitmentStatus.VOID, coverage.reason
        elif prediction.label == cf.target_outcome:
            new_status, reason = CommitmentStatus.HONORED, "model_agreement"
        elif coverage.outcome is Coverage.COVERED:
            new_status, reason = CommitmentStatus.HONORED, "policy_override"
        else:
            new_status, reason = CommitmentStatus.BROKEN, coverage.reason
        self._transition(commitment, new_status)
        commitment.resolved_at = t2
        commitment.resolution_reason = reason
        self._append_event(
            "resolved",
            commitment_id,
            t2,
            {
                "status": new_status.value,
                "reason": reason,
                "coverage": coverage.outcome.value,
                "certainty": certainty_of(model_now, cf.point, cf.target_outcome),
                "model_version": model_now.version_id,
            },
        )
        return commitment

    def expire(self, commitment_id: int, t: int, reason: str = "horizon_elapsed") -> Commitment:
        """A commitment lapses without resolution (e.g. never implemented in time)."""
        commitment = self.get(commitment_id)
        self._transition(commitment, CommitmentStatus.EXPIRED)
        commitment.resolved_at = t
        commitment.resolution_reason = reason
        self._append_event("expired", commitment_id, t, {"reason": reason})
        return commitment

    def void(self, commitment_id: int, t: int, reason: str) -> Commitment:
        """Withdraw a commitment by policy before any model re-evaluation."""
        commitment = self.get(commitment_id)
        self._transition(commitment, CommitmentStatus.VOID)
        commitment.resolved_at = t
        commitment.resolution_reason = reason
        self._append_event("voided", commitment_id, t, {"reason": reason})
        return commitment

    # -- queries ---------------------------------------------------------------

    def outstanding_commitments(self, now: int | None = None) -> list[Commitment]:
        return [
            c
            for c in self.commitments
            if not c.is_terminal and (now is None or c.issued_at <= now)
        ]

    def outstanding_scenarios(self, now: int | None = None) -> list[tuple]:
        """(point, target_outcome) of every non-terminal commitment, in issuance order."""
        return [
            (c.counterfactual.point, c.counterfactual.target_outcome)
            for c in self.outstanding_commitments(now)
        ]


def replay(events: list[dict]) -> Ledger:
    """Rebuild a ledger from its event log; raises on malformed or out-of-order logs."""
    ledger = Ledger()
    for event in events:
        try:
            event_type = event["event_type"]
            commitment_id = event["commitment_id"]
            step = event["step"]
            payload = event["payload"]
        except (KeyError, TypeError) as exc:
            raise LedgerError(f"malformed event {event!r}: {exc}") from exc
        if event_type == "issued":
            cf = counterfactual_from_dict(payload["counterfactual"])
            commitment = ledger.issue(cf, payload["policy_id"], step)
            if commitment.commitment_id != commitment_id:
                raise LedgerError(
                    f"issued event id {commitment_id} does not continue the id sequence"
                )
        elif event_type == "implemented":
            ledger.mark_implemented(commitment_id, step)
        elif event_type == "resolved":
            commitment = ledger.get(commitment_id)
            if commitment.status is not CommitmentStatus.IMPLEMENTED:
                raise LedgerError(
                    f"resolve event for commitment {commitment_id} in status {commitment.status.value}"
                )
            if step < commitment.implemented_at:
                raise LedgerError(f"resolve event at {step} precedes implementation")
            status = CommitmentStatus(payload["status"])
            ledger._transition(commitment, status)
            commitment.resolved_at = step
            commitment.resolution_reason = payload["reason"]
            ledger._append_event("resolved", commitment_id, step, payload)
        elif event_type == "expired":
            ledger.expire(commitment_id, step, payload["reason"])
        elif event_type == "voided":
            ledger.void(commitment_id, step, payload["reason"])
        else:
            raise LedgerError(f"unknown event type {event_type!r}")
    return ledger


def save_event_log(ledger: Ledger, path: str | Path) -> None:
    """One JSON object per line, in append order."""
    with open(path, "w", encoding="utf-8") as fh:
        for event in ledger.events:
            fh.write(json.dumps(event) + "\n")


def load_event_log(path: str | Path) -> list[dict]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                events.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise LedgerError(f"{path}: line {line_no}: invalid JSON ({exc})") from exc
    return events
