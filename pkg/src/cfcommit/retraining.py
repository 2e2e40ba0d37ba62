"""Retraining with counterfactual augmentation and honoring-aware model selection.

Outstanding scenarios enter the training pool as real rows carrying their
committed outcomes, so the retrained model is pulled toward keeping the
promises already made. Class weighting compensates for the imbalance this can
introduce; a trained candidate is scored on both holdout accuracy and how well
it still honors the shared scenarios.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import ScoringModel, TrainConfig, accuracy, certainty_of, train
from .population import Instance, LabeledDataset
from .schema import SchemaError


@dataclass(frozen=True)
class AugmentationReport:
    base_size: int
    new_size: int
    scenario_count: int
    class_counts_before: tuple[int, int]
    class_counts_after: tuple[int, int]
    imbalance_delta: float


@dataclass(frozen=True)
class HonoringReport:
    """How well a model still predicts the committed outcomes.

    honoring_rate counts scenarios whose certainty reaches the threshold;
    weighted_honoring_rate weights each by its implementation probability.
    Both are 1.0 (with empty_ledger set) when there are no scenarios.
    """

    certainties: tuple[tuple[int, float], ...]
    threshold: float
    honoring_rate: float
    weighted_honoring_rate: float
    empty_ledger: bool = False


def augment(
    base: LabeledDataset,
    new_data: LabeledDataset,
    scenarios: list[tuple],
) -> tuple[LabeledDataset, AugmentationReport]:
    """Concatenate base, new rows, and scenario points labeled with their
    committed outcomes. Scenario rows are fictitious individuals and get
    negative subject ids; inputs are left untouched."""
    if new_data.schema != base.schema:
        raise SchemaError("base and new datasets use different schemas")
    instances = list(base.instances) + list(new_data.instances)
    labels = list(base.labels) + list(new_data.labels)
    before = _class_counts(labels)
    for k, (point, target) in enumerate(scenarios):
        instances.append(Instance(subject_id=-(k + 1), values=np.asarray(point, dtype=float)))
        labels.append(int(target))
    after = _class_counts(labels)
    augmented = LabeledDataset(base.schema, instances, labels)
    return augmented, AugmentationReport(
        base_size=len(base),
        new_size=len(new_data),
        scenario_count=len(scenarios),
        class_counts_before=before,
        class_counts_after=after,
        imbalance_delta=_imbalance(after) - _imbalance(before),
    )


def _class_counts(labels) -> tuple[int, int]:
    n1 = int(sum(labels))
    return len(labels) - n1, n1


def _imbalance(counts: tuple[int, int]) -> float:
    """Distance of the class-1 share from perfect balance."""
    total = counts[0] + counts[1]
    if total == 0:
        return 0.0
    return abs(counts[1] / total - 0.5)


def class_weights(dataset: LabeledDataset) -> tuple[float, float]:
    """Inverse-frequency weights (N / (2 * N_c)) for classes 0 and 1."""
    n0, n1 = dataset.class_counts()
    if n0 == 0 or n1 == 0:
        raise ValueError("class weights need both classes present")
    n = n0 + n1
    return n / (2.0 * n0), n / (2.0 * n1)


def per_sample_weights(dataset: LabeledDataset) -> np.ndarray:
    w0, w1 = class_weights(dataset)
    return np.where(dataset.labels == 1, w1, w0)


def honoring_report(
    model: ScoringModel,
    scenarios: list[tuple],
    probabilities: list[float],
    tau: float,
    ids: list[int] | None = None,
) -> HonoringReport:
    """Certainty of every committed outcome under `model`, plus the share at
    or above tau, both raw and weighted by implementation probability."""
    if len(scenarios) != len(probabilities):
        raise ValueError(
            f"{len(scenarios)} scenarios but {len(probabilities)} probabilities"
        )
    if not 0 <= tau <= 1:
        raise ValueError("tau must lie in [0, 1]")
    if ids is None:
        ids = list(range(len(scenarios)))
    elif len(ids) != len(scenarios):
        raise ValueError(f"{len(scenarios)} scenarios but {len(ids)} ids")
    if not scenarios:
        return HonoringReport(
            certainties=(),
            threshold=tau,
            honoring_rate=1.0,
            weighted_honoring_rate=1.0,
            empty_ledger=True,
        )
    certs = [
        (int(cid), certainty_of(model, point, target))
        for cid, (point, target) in zip(ids, scenarios)
    ]
    hits = np.array([c >= tau for _, c in certs], dtype=float)
    p = np.asarray(probabilities, dtype=float)
    weighted = float(np.sum(p * hits) / np.sum(p)) if np.sum(p) > 0 else float(np.mean(hits))
    return HonoringReport(
        certainties=tuple(certs),
        threshold=tau,
        honoring_rate=float(np.mean(hits)),
        weighted_honoring_rate=weighted,
    )


def retrain_and_select(
    candidates: list[TrainConfig],
    base_version: int,
    augmented: LabeledDataset,
    holdout: LabeledDataset,
    scenarios: list[tuple],
    probabilities: list[float],
    tau: float,
    alpha: float,
    trained_at: int = 0,
) -> tuple[ScoringModel, HonoringReport]:
    """Train every candidate with class weights on the augmented set and keep
    the one maximizing alpha * holdout accuracy + (1 - alpha) * weighted
    honoring rate (ties go to the earliest candidate)."""
    if not candidates:
        raise ValueError("need at least one training candidate")
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    weights = tuple(float(w) for w in per_sample_weights(augmented))
    best = None
    for idx, candidate in enumerate(candidates):
        config = replace(candidate, sample_weights=weights)
        model = train(augmented, config, prior_version=base_version, trained_at=trained_at)
        report = honoring_report(model, scenarios, probabilities, tau)
        score = alpha * accuracy(model, holdout.matrix, holdout.labels) + (
            1.0 - alpha
        ) * report.weighted_honoring_rate
        if best is None or score > best[0]:
            best = (score, idx, model, report)
    return best[2], best[3]
