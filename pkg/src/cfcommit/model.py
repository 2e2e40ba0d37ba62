"""Versioned logistic scoring model: deterministic full-batch training,
predictions with a degree of certainty, and analytic input gradients."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .population import LabeledDataset


class DegenerateTrainingError(ValueError):
    """Training would be ill-posed (empty data, or one class with no weighting)."""


class ModelFileError(ValueError):
    """Model file is malformed."""


def _sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True, eq=False)
class ScoringModel:
    """Immutable logistic classifier; version_id increases across retrainings."""

    weights: np.ndarray
    bias: float
    version_id: int
    trained_at: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ScoringModel)
            and np.array_equal(self.weights, other.weights)
            and self.bias == other.bias
            and self.version_id == other.version_id
            and self.trained_at == other.trained_at
        )


@dataclass(frozen=True)
class Prediction:
    label: int
    score: float
    certainty_of_label: float


@dataclass(frozen=True)
class TrainConfig:
    """Gradient-descent settings.

    With ``standardize`` set, descent runs on zero-mean/unit-variance features
    (statistics fitted on the training set) and the affine transform is folded
    back into raw-space weights afterwards; predictions still read
    logistic(weights . x + bias) on raw features either way. Raw-space descent
    is the default and what every documented example uses.
    """

    learning_rate: float = 0.5
    epochs: int = 300
    l2_penalty: float = 0.0
    init_seed: int = 0
    sample_weights: tuple[float, ...] | None = None
    standardize: bool = False

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be nonnegative")


def _values_of(x) -> np.ndarray:
    values = getattr(x, "values", x)
    return np.asarray(values, dtype=float)


def scores(model: ScoringModel, X: np.ndarray) -> np.ndarray:
    """Positive-class probabilities for an (n, d) matrix."""
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != model.weights.shape[0]:
        raise ValueError(
            f"input has {X.shape[-1]} features, model has {model.weights.shape[0]}"
        )
    return _sigmoid(X @ model.weights + model.bias)


def predict(model: ScoringModel, x) -> Prediction:
    """Score one instance (or raw vector). Label is positive iff score >= 0.5."""
    score = float(scores(model, _values_of(x)))
    label = int(score >= 0.5)
    return Prediction(label=label, score=score, certainty_of_label=max(score, 1.0 - score))


def certainty_of(model: ScoringModel, x, outcome: int) -> float:
    """Model confidence that `x` receives `outcome`: score if positive, else 1 - score."""
    score = float(scores(model, _values_of(x)))
    return score if outcome == 1 else 1.0 - score


def input_gradient(model: ScoringModel, x) -> np.ndarray:
    """d(score)/dx = score * (1 - score) * weights."""
    score = float(scores(model, _values_of(x)))
    return score * (1.0 - score) * model.weights


def training_loss(
    model: ScoringModel,
    X: np.ndarray,
    y: np.ndarray,
    sample_weights: np.ndarray | None = None,
    l2_penalty: float = 0.0,
) -> float:
    """Weighted mean cross-entropy plus the L2 term, as minimized by train()."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    s = np.ones_like(y) if sample_weights is None else np.asarray(sample_weights, dtype=float)
    p = np.clip(scores(model, X), 1e-12, 1.0 - 1e-12)
    ce = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    return float(np.mean(s * ce) + 0.5 * l2_penalty * np.dot(model.weights, model.weights))


def train(
    dataset: LabeledDataset,
    config: TrainConfig,
    prior_version: int,
    trained_at: int = 0,
) -> ScoringModel:
    """Full-batch gradient descent on weighted cross-entropy + L2 for exactly
    `config.epochs` steps from a seeded small-random initialization.

    Deterministic per config. Raises DegenerateTrainingError on an empty
    dataset, or when only one class is present and no sample weights were
    supplied to take responsibility for the imbalance.
    """
    n = len(dataset)
    if n == 0:
        raise DegenerateTrainingError("cannot train on an empty dataset")
    X = dataset.matrix
    y = dataset.labels.astype(float)
    if config.sample_weights is not None:
        s = np.asarray(config.sample_weights, dtype=float)
        if s.shape != (n,):
            raise ValueError(f"sample_weights has length {s.size}, dataset has {n} rows")
        if np.any(s < 0):
            raise ValueError("sample_weights must be nonnegative")
        if not np.any(s > 0):
            raise ValueError("sample_weights must not be all zero")
    else:
        if len(set(dataset.labels.tolist())) < 2:
            raise DegenerateTrainingError(
                "dataset contains a single class and no sample weights were given"
            )
        s = np.ones(n)

    mean = np.zeros(X.shape[1])
    sd = np.ones(X.shape[1])
    if config.standardize:
        mean = X.mean(axis=0)
        sd = X.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        X = (X - mean) / sd

    d = X.shape[1]
    rng = np.random.default_rng(config.init_seed)
    w = 0.01 * rng.standard_normal(d)
    b = 0.01 * float(rng.standard_normal())
    lr = config.learning_rate
    for _ in range(config.epochs):
        p = _sigmoid(X @ w + b)
        r = s * (p - y)
        grad_w = X.T @ r / n + config.l2_penalty * w
        grad_b = float(r.sum()) / n
        w = w - lr * grad_w
        b = b - lr * grad_b

    if config.standardize:
        w = w / sd
        b = b - float(np.dot(w, mean))
    return ScoringModel(weights=w, bias=b, version_id=prior_version + 1, trained_at=trained_at)


def accuracy(model: ScoringModel, X: np.ndarray, y: np.ndarray) -> float:
    y = np.asarray(y, dtype=int)
    if y.size == 0:
        return 1.0
    labels = (scores(model, X) >= 0.5).astype(int)
    return float(np.mean(labels == y))


def save_model(model: ScoringModel, path: str | Path) -> None:
    """Write the model as JSON; numbers carry 17 significant digits (exact round trip)."""
    weights = ", ".join(f"{w:.17g}" for w in model.weights)
    text = (
        "{\n"
        f'  "weights": [{weights}],\n'
        f'  "bias": {model.bias:.17g},\n'
        f'  "version_id": {model.version_id},\n'
        f'  "trained_at": {model.trained_at}\n'
        "}\n"
    )
    Path(path).write_text(text, encoding="utf-8")


def load_model(path: str | Path) -> ScoringModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return ScoringModel(
            weights=np.array([float(w) for w in doc["weights"]]),
            bias=float(doc["bias"]),
            version_id=int(doc["version_id"]),
            trained_at=int(doc["trained_at"]),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"model file {path}: {exc}") from exc
