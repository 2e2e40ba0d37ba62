"""Commitment honoring policies: boundary conditions, probabilistic guarantees,
and the combined regime-dependent schedule, driven by an economic index.

Coverage decisions are pure functions of their inputs so any resolution can be
re-derived and audited after the fact. Fraction-based guarantees never draw
lots: the cohort is ranked by certainty and the declared share is taken from
the top, ties broken by commitment id.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path


class PolicyError(ValueError):
    """Invalid policy definition or evaluation input."""


class Regime(str, Enum):
    NORMAL = "Normal"
    STRESS = "Stress"
    CRISIS = "Crisis"


@dataclass(frozen=True)
class EconomicIndexSeries:
    """Per-step index values with thresholds separating the three regimes."""

    values: tuple[float, ...]
    stress_threshold: float
    crisis_threshold: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.crisis_threshold < self.stress_threshold:
            raise PolicyError("crisis_threshold must be below stress_threshold")


def regime_at(series: EconomicIndexSeries, t: int) -> Regime:
    """Regime from the index value at step t: Normal at or above the stress
    threshold, Crisis strictly below the crisis threshold, Stress between."""
    if not 0 <= t < len(series.values):
        raise PolicyError(f"step {t} outside index series of length {len(series.values)}")
    v = series.values[t]
    if v >= series.stress_threshold:
        return Regime.NORMAL
    if v >= series.crisis_threshold:
        return Regime.STRESS
    return Regime.CRISIS


class PolicyKind(str, Enum):
    UNCONDITIONAL = "Unconditional"
    BOUNDARY = "Boundary"
    PROBABILISTIC = "Probabilistic"
    COMBINED = "Combined"


@dataclass(frozen=True)
class CommitmentPolicy:
    policy_id: str
    kind: PolicyKind
    expiry_horizon: int | None = None
    index_bounds: tuple[float, float] | None = None
    loss_cap: float | None = None
    certainty_threshold: float | None = None
    guaranteed_fraction: float | None = None
    schedule: dict[Regime, float] | None = None

    def __post_init__(self) -> None:
        if self.kind is PolicyKind.BOUNDARY:
            if self.expiry_horizon is None and self.index_bounds is None and self.loss_cap is None:
                raise PolicyError(
                    "Boundary policy needs at least one of expiry_horizon, index_bounds, loss_cap"
                )
        if self.kind is PolicyKind.PROBABILISTIC:
            given = [self.certainty_threshold is not None, self.guaranteed_fraction is not None]
            if sum(given) != 1:
                raise PolicyError(
                    "Probabilistic policy needs exactly one of certainty_threshold, guaranteed_fraction"
                )
        if self.kind is PolicyKind.COMBINED:
            if self.schedule is None or set(self.schedule) != set(Regime):
                raise PolicyError("Combined policy needs a schedule covering all three regimes")
        if self.certainty_threshold is not None and not 0 <= self.certainty_threshold <= 1:
            raise PolicyError("certainty_threshold must lie in [0, 1]")
        if self.guaranteed_fraction is not None and not 0 <= self.guaranteed_fraction <= 1:
            raise PolicyError("guaranteed_fraction must lie in [0, 1]")
        if self.schedule is not None:
            for regime, q in self.schedule.items():
                if not 0 <= q <= 1:
                    raise PolicyError(f"schedule proportion for {regime} outside [0, 1]")


class Coverage(str, Enum):
    COVERED = "Covered"
    NOT_COVERED = "NotCovered"
    VOID_BY_BOUNDARY = "VoidByBoundary"


@dataclass(frozen=True)
class CoverageDecision:
    outcome: Coverage
    reason: str
    declared_probability: float | None = None


@dataclass(frozen=True)
class Assessment:
    """Resolution-time inputs to a coverage decision.

    ``certainty`` is the current model's confidence in the committed outcome;
    ``rank_context`` is the (commitment_id, certainty) cohort resolving in the
    same step, needed by fraction-based policies; ``running_loss`` is the
    cumulative honoring cost, checked against a Boundary loss cap.
    """

    certainty: float
    rank_context: tuple[tuple[int, float], ...] | None = None
    running_loss: float = 0.0


def select_guaranteed(cohort, fraction: float) -> set[int]:
    """Deterministically pick the guaranteed ceil(fraction * n) of a cohort.

    Sorted by certainty descending, ties by commitment id ascending. The
    fraction is interpreted at decimal precision (via its shortest repr) so
    ceil(0.7 * 10) is exactly 7 regardless of binary float representation.
    """
    if not 0 <= fraction <= 1:
        raise PolicyError(f"fraction {fraction} outside [0, 1]")
    cohort = list(cohort)
    ids = [cid for cid, _ in cohort]
    if len(set(ids)) != len(ids):
        raise PolicyError("cohort commitment ids must be unique")
    k = math.ceil(Fraction(repr(float(fraction))) * len(cohort))
    ranked = sorted(cohort, key=lambda item: (-item[1], item[0]))
    return {cid for cid, _ in ranked[:k]}


def evaluate(
    policy: CommitmentPolicy,
    commitment,
    series: EconomicIndexSeries | None,
    t2: int,
    assessment: Assessment,
) -> CoverageDecision:
    """Pure coverage decision for an implemented commitment resolving at t2."""
    if getattr(commitment.status, "value", commitment.status) != "Implemented":
        raise PolicyError(
            f"commitment {commitment.commitment_id} is {commitment.status}, not Implemented"
        )
    kind = policy.kind
    if kind is PolicyKind.UNCONDITIONAL:
        return CoverageDecision(Coverage.COVERED, "unconditional")

    if kind is PolicyKind.BOUNDARY:
        if policy.expiry_horizon is not None and t2 - commitment.issued_at > policy.expiry_horizon:
            return CoverageDecision(Coverage.VOID_BY_BOUNDARY, "expired")
        if policy.index_bounds is not None:
            if series is None:
                raise PolicyError("index-conditioned policy evaluated without an index series")
            low, high = policy.index_bounds
            value = series.values[t2] if 0 <= t2 < len(series.values) else None
            if value is None:
                raise PolicyError(f"step {t2} outside index series")
            if not low <= value <= high:
                return CoverageDecision(Coverage.VOID_BY_BOUNDARY, "index_outside_bounds")
        if policy.loss_cap is not None and assessment.running_loss > policy.loss_cap:
            return CoverageDecision(Coverage.VOID_BY_BOUNDARY, "loss_cap_exceeded")
        return CoverageDecision(Coverage.COVERED, "within_boundary")

    if kind is PolicyKind.PROBABILISTIC:
        if policy.certainty_threshold is not None:
            if assessment.certainty >= policy.certainty_threshold:
                return CoverageDecision(Coverage.COVERED, "certainty_above_threshold")
            return CoverageDecision(Coverage.NOT_COVERED, "certainty_below_threshold")
        if assessment.rank_context is None:
            raise PolicyError("fraction-based policy needs the resolution cohort")
        selected = select_guaranteed(assessment.rank_context, policy.guaranteed_fraction)
        if commitment.commitment_id in selected:
            return CoverageDecision(Coverage.COVERED, "within_guaranteed_fraction")
        return CoverageDecision(Coverage.NOT_COVERED, "outside_guaranteed_fraction")

    # Combined: the regime picks the declared proportion; zero means no guarantee.
    if series is None:
        raise PolicyError("Combined policy evaluated without an index series")
    regime = regime_at(series, t2)
    declared = float(policy.schedule[regime])
    if declared == 0:
        return CoverageDecision(Coverage.VOID_BY_BOUNDARY, "no_guarantee_in_regime", declared)
    if assessment.rank_context is None:
        raise PolicyError("fraction-based policy needs the resolution cohort")
    selected = select_guaranteed(assessment.rank_context, declared)
    if commitment.commitment_id in selected:
        return CoverageDecision(Coverage.COVERED, "within_declared_proportion", declared)
    return CoverageDecision(Coverage.NOT_COVERED, "outside_declared_proportion", declared)


def policy_to_dict(policy: CommitmentPolicy) -> dict:
    return {
        "policy_id": policy.policy_id,
        "kind": policy.kind.value,
        "expiry_horizon": policy.expiry_horizon,
        "index_bounds": list(policy.index_bounds) if policy.index_bounds else None,
        "loss_cap": policy.loss_cap,
        "certainty_threshold": policy.certainty_threshold,
        "guaranteed_fraction": policy.guaranteed_fraction,
        "schedule": (
            {regime.value: q for regime, q in policy.schedule.items()}
            if policy.schedule is not None
            else None
        ),
    }


def policy_from_dict(doc: dict) -> CommitmentPolicy:
    try:
        schedule = doc.get("schedule")
        return CommitmentPolicy(
            policy_id=doc["policy_id"],
            kind=PolicyKind(doc["kind"]),
            expiry_horizon=doc.get("expiry_horizon"),
            index_bounds=tuple(doc["index_bounds"]) if doc.get("index_bounds") else None,
            loss_cap=doc.get("loss_cap"),
            certainty_threshold=doc.get("certainty_threshold"),
            guaranteed_fraction=doc.get("guaranteed_fraction"),
            schedule=(
                {Regime(name): float(q) for name, q in schedule.items()}
                if schedule is not None
                else None
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, PolicyError):
            raise
        raise PolicyError(f"malformed policy document: {exc}") from exc


def save_policy(policy: CommitmentPolicy, path: str | Path) -> None:
    Path(path).write_text(json.dumps(policy_to_dict(policy), indent=2) + "\n", encoding="utf-8")


def load_policy(path: str | Path) -> CommitmentPolicy:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PolicyError(f"policy file {path}: invalid JSON ({exc})") from exc
    return policy_from_dict(doc)
