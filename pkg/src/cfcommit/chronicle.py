"""Classification of what changed between issuance and resolution.

Each resolved commitment yields a triple: did the subject's data point change
(the scenario was implemented), did the model change (a retraining happened),
did the predicted outcome change. The eight combinations form a fixed
taxonomy; case 4 — scenario implemented, model retrained, outcome stuck — is
the unfortunate counterfactual event this whole package exists to surface.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import ScoringModel, predict


@dataclass(frozen=True)
class ChangeTriple:
    x_changed: bool
    h_changed: bool
    y_changed: bool


@dataclass(frozen=True)
class EventCase:
    case_number: int
    name: str
    is_uce: bool = False
    is_paradigmatic: bool = False
    is_impossible: bool = False


# Keyed by (x_changed, h_changed, y_changed).
_CASES: dict[tuple[bool, bool, bool], EventCase] = {
    (False, False, False): EventCase(1, "no_change"),
    (True, False, False): EventCase(2, "input_changed_outcome_stable"),
    (False, True, False): EventCase(3, "model_changed_outcome_stable"),
    (True, True, False): EventCase(4, "unfortunate_counterfactual_event", is_uce=True),
    (False, True, True): EventCase(5, "model_change_flipped_outcome"),
    (True, False, True): EventCase(6, "paradigmatic_counterfactual_event", is_paradigmatic=True),
    # A deterministic model cannot flip its outcome on an unchanged input;
    # representable so the taxonomy stays total, but flagged.
    (False, False, True): EventCase(7, "impossible_outcome_flip", is_impossible=True),
    (True, True, True): EventCase(8, "compatible_retraining"),
}


def classify(triple: ChangeTriple) -> EventCase:
    """Total, deterministic mapping from a change triple to its case."""
    return _CASES[(triple.x_changed, triple.h_changed, triple.y_changed)]


def detect(
    commitment,
    model_at_issue_version: int,
    model_at_resolution: ScoringModel,
    y0: int,
) -> tuple[ChangeTriple, EventCase]:
    """Classify a resolved commitment.

    x changed iff the scenario was implemented; h changed iff the resolving
    model's version differs from the issuing one (a retraining event counts
    even if it reproduced identical parameters); y changed iff the prediction
    at the subject's data point at resolution — the scenario point if
    implemented, the base point otherwise — differs from the original
    outcome y0. Evaluating at the subject's actual point keeps case 7
    unreachable for a deterministic model: unchanged input under an unchanged
    model cannot flip its outcome.
    """
    if not commitment.is_terminal:
        raise ValueError(
            f"commitment {commitment.commitment_id} has not reached resolution"
        )
    implemented = commitment.implemented_at is not None
    cf = commitment.counterfactual
    point = cf.point if implemented else cf.base_point.values
    triple = ChangeTriple(
        x_changed=implemented,
        h_changed=model_at_resolution.version_id != model_at_issue_version,
        y_changed=predict(model_at_resolution, point).label != y0,
    )
    return triple, classify(triple)
