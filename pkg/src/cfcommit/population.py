"""Synthetic credit-style populations with a latent ground-truth scorer and concept drift.

A linear latent score plus logistic noise stands in for the real lending
population; drift shifts the latent relationship (the economy), never the
feature distribution, so retraining effects stay isolated.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .schema import FeatureKind, FeatureSchema, SchemaError


class DatasetError(ValueError):
    """Malformed dataset file or row."""


@dataclass(eq=False)
class Instance:
    """One subject's feature vector at a point in time."""

    subject_id: int
    values: np.ndarray
    observed_at: int = 0

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Instance)
            and self.subject_id == other.subject_id
            and self.observed_at == other.observed_at
            and np.array_equal(self.values, other.values)
        )


class LabeledDataset:
    """Instances plus binary labels (1 = creditworthy) under one schema."""

    def __init__(self, schema: FeatureSchema, instances: list[Instance], labels):
        labels = np.asarray(labels, dtype=int)
        if len(instances) != len(labels):
            raise DatasetError(
                f"{len(instances)} instances but {len(labels)} labels"
            )
        self.schema = schema
        self.instances = list(instances)
        self.labels = labels

    def __len__(self) -> int:
        return len(self.instances)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, LabeledDataset)
            and self.schema == other.schema
            and np.array_equal(self.labels, other.labels)
            and self.instances == other.instances
        )

    @property
    def matrix(self) -> np.ndarray:
        """(n, d) float matrix of feature values in schema order."""
        if not self.instances:
            return np.empty((0, len(self.schema)))
        return np.stack([inst.values for inst in self.instances])

    def class_counts(self) -> tuple[int, int]:
        """(count of label 0, count of label 1)."""
        n1 = int(self.labels.sum())
        return len(self.labels) - n1, n1


@dataclass(frozen=True)
class GroundTruthScorer:
    """Latent linear score; labels are drawn from a logistic around it."""

    coefficients: tuple[float, ...]
    intercept: float
    noise_scale: float = 0.0

    def __post_init__(self) -> None:
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be nonnegative")

    @property
    def coef_array(self) -> np.ndarray:
        return np.asarray(self.coefficients, dtype=float)

    def latent(self, X: np.ndarray) -> np.ndarray:
        """Noise-free latent score for one vector or an (n, d) matrix."""
        return np.asarray(X, dtype=float) @ self.coef_array + self.intercept

    def positive_probability(self, X: np.ndarray) -> np.ndarray:
        s = self.latent(X)
        if self.noise_scale == 0:
            return (s >= 0).astype(float)
        return 1.0 / (1.0 + np.exp(-s / self.noise_scale))

    def expected_label(self, X: np.ndarray) -> np.ndarray:
        """Most likely label, i.e. sign of the noise-free latent score."""
        return (self.latent(X) >= 0).astype(int)


@dataclass(frozen=True)
class DriftEvent:
    """A shift of the latent relationship applied at a given step."""

    at_step: int
    intercept_shift: float
    coefficient_shifts: tuple[float, ...] = ()


def apply_drift(scorer: GroundTruthScorer, event: DriftEvent) -> GroundTruthScorer:
    """Return a new scorer with the event's shifts applied; the input is untouched."""
    coef = scorer.coef_array
    shifts = np.asarray(event.coefficient_shifts, dtype=float)
    if shifts.size == 0:
        shifts = np.zeros_like(coef)
    if shifts.shape != coef.shape:
        raise ValueError(
            f"coefficient_shifts has length {shifts.size}, scorer has {coef.size}"
        )
    return replace(
        scorer,
        coefficients=tuple(float(c) for c in coef + shifts),
        intercept=scorer.intercept + event.intercept_shift,
    )


def sample_features(schema: FeatureSchema, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n feature vectors: uniform over each feature's range (integer levels
    for ordinals, category indexes for categoricals)."""
    cols = []
    for spec in schema:
        if spec.kind is FeatureKind.CONTINUOUS:
            cols.append(rng.uniform(spec.low, spec.high, size=n))
        else:
            cols.append(rng.integers(int(spec.low), int(spec.high) + 1, size=n).astype(float))
    if not cols:
        return np.empty((n, 0))
    return np.column_stack(cols) if n else np.empty((0, len(schema)))


def generate_population(
    schema: FeatureSchema, scorer: GroundTruthScorer, n: int, seed: int
) -> LabeledDataset:
    """Sample a labeled population; a pure function of (schema, scorer, n, seed)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if len(scorer.coefficients) != len(schema):
        raise SchemaError(
            f"scorer has {len(scorer.coefficients)} coefficients, schema has {len(schema)} features"
        )
    rng = np.random.default_rng(seed)
    X = sample_features(schema, n, rng)
    p = scorer.positive_probability(X)
    labels = (rng.random(n) < p).astype(int)
    instances = [Instance(subject_id=i, values=X[i], observed_at=0) for i in range(n)]
    return LabeledDataset(schema, instances, labels)


def calibrate_intercept(
    schema: FeatureSchema,
    coefficients,
    noise_scale: float,
    target_positive_rate: float = 0.7,
    n: int = 200_000,
    seed: int = 20_240_101,
) -> float:
    """Find the intercept whose expected positive-label rate hits the target.

    Monte Carlo estimate over the schema's feature distribution, then
    bisection on the intercept (the rate is monotone in it).
    """
    if not 0 < target_positive_rate < 1:
        raise ValueError("target_positive_rate must be in (0, 1)")
    coef = np.asarray(coefficients, dtype=float)
    rng = np.random.default_rng(seed)
    X = sample_features(schema, n, rng)
    base = X @ coef

    def rate(b: float) -> float:
        if noise_scale == 0:
            return float(np.mean(base + b >= 0))
        return float(np.mean(1.0 / (1.0 + np.exp(-(base + b) / noise_scale))))

    lo, hi = -1.0, 1.0
    while rate(lo) > target_positive_rate:
        lo *= 2
    while rate(hi) < target_positive_rate:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if rate(mid) < target_positive_rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def default_scorer_for(
    schema: FeatureSchema,
    positive_rate: float = 0.7,
    noise_scale: float = 0.5,
) -> GroundTruthScorer:
    """Documented default ground truth for a schema.

    Each non-categorical feature contributes +2 over its full range (more of
    anything is better for creditworthiness in the reference schema);
    categoricals carry no weight. The intercept is calibrated so the
    not-creditworthy class sits at 1 - positive_rate, mirroring the skew of
    real credit data.
    """
    coef = np.array(
        [0.0 if f.kind is FeatureKind.CATEGORICAL else 2.0 / f.width for f in schema]
    )
    intercept = calibrate_intercept(schema, coef, noise_scale, positive_rate)
    return GroundTruthScorer(
        coefficients=tuple(float(c) for c in coef),
        intercept=intercept,
        noise_scale=noise_scale,
    )


_REFERENCE_SCORER: GroundTruthScorer | None = None


def reference_scorer(schema: FeatureSchema | None = None) -> GroundTruthScorer:
    """Default scorer for the reference schema; cached, the calibration is a
    deterministic Monte Carlo."""
    from .schema import reference_schema

    global _REFERENCE_SCORER
    if schema is not None and schema != reference_schema():
        return default_scorer_for(schema)
    if _REFERENCE_SCORER is None:
        _REFERENCE_SCORER = default_scorer_for(reference_schema())
    return _REFERENCE_SCORER


def save_dataset(dataset: LabeledDataset, path: str | Path) -> None:
    """Write CSV: feature-name header plus a final 'label' column, full float precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(dataset.schema.names + ["label"])
        for inst, label in zip(dataset.instances, dataset.labels):
            writer.writerow([repr(float(v)) for v in inst.values] + [int(label)])


def load_dataset(path: str | Path, schema: FeatureSchema) -> LabeledDataset:
    """Read a dataset CSV back; header and every value are validated against the schema."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        if header != schema.names + ["label"]:
            raise DatasetError(
                f"{path}: header {header!r} does not match schema columns "
                f"{schema.names + ['label']!r}"
            )
        instances: list[Instance] = []
        labels: list[int] = []
        for row_idx, row in enumerate(reader):
            if len(row) != len(schema) + 1:
                raise DatasetError(f"{path}: row {row_idx} has {len(row)} fields")
            try:
                values = np.array([float(v) for v in row[:-1]])
                label = int(row[-1])
            except ValueError as exc:
                raise DatasetError(f"{path}: row {row_idx}: {exc}") from exc
            if label not in (0, 1):
                raise DatasetError(f"{path}: row {row_idx}: label must be 0 or 1")
            for spec, v in zip(schema, values):
                if not spec.contains(float(v)):
                    raise DatasetError(
                        f"{path}: row {row_idx}: feature {spec.name!r} value {v!r} out of range"
                    )
            instances.append(Instance(subject_id=row_idx, values=values, observed_at=0))
            labels.append(label)
    return LabeledDataset(schema, instances, labels)
