"""Feature schema: per-feature kind, range, mutability, monotonicity and change-rate metadata.

The schema is the declared causal model. Everything downstream (population
generation, counterfactual search, feasibility filtering, actionability
costing) reads its constraints from here; nothing is ever inferred from data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np


class FeatureKind(str, Enum):
    CONTINUOUS = "continuous"
    ORDINAL = "ordinal"
    CATEGORICAL = "categorical"


class Mutability(str, Enum):
    IMMUTABLE = "immutable"
    ACTIONABLE = "actionable"
    MUTABLE_NOT_ACTIONABLE = "mutable_not_actionable"


class MonotoneDirection(str, Enum):
    INCREASE_ONLY = "increase_only"
    DECREASE_ONLY = "decrease_only"
    FREE = "free"


class ChangeRate(str, Enum):
    CONSTANT = "constant"
    SLOW = "slow"
    SELDOM = "seldom"
    FAST = "fast"


class SchemaError(ValueError):
    """Invalid schema definition or schema/data mismatch."""


@dataclass(frozen=True)
class FeatureSpec:
    """One feature's declared metadata.

    ``range`` is a ``(low, high)`` interval for continuous/ordinal features
    and a tuple of category labels for categorical ones (values are then
    encoded as the index into that tuple). ``couples_with`` names a feature
    that must increase whenever this one increases (e.g. education -> age).
    """

    name: str
    kind: FeatureKind
    range: tuple
    mutability: Mutability
    monotone_direction: MonotoneDirection = MonotoneDirection.FREE
    change_rate: ChangeRate = ChangeRate.FAST
    effort_weight: float = 1.0
    couples_with: str | None = None

    def __post_init__(self) -> None:
        if len(self.range) == 0:
            raise SchemaError(f"feature {self.name!r}: empty range")
        if self.kind is FeatureKind.CATEGORICAL:
            if len(set(self.range)) != len(self.range):
                raise SchemaError(f"feature {self.name!r}: duplicate categories")
        else:
            if len(self.range) != 2:
                raise SchemaError(
                    f"feature {self.name!r}: interval range must be (low, high)"
                )
            low, high = self.range
            if not low <= high:
                raise SchemaError(f"feature {self.name!r}: range lower > upper")
        if self.effort_weight < 0:
            raise SchemaError(f"feature {self.name!r}: negative effort_weight")
        if self.change_rate is ChangeRate.CONSTANT and self.mutability is not Mutability.IMMUTABLE:
            raise SchemaError(
                f"feature {self.name!r}: change_rate 'constant' requires immutability"
            )

    @property
    def low(self) -> float:
        if self.kind is FeatureKind.CATEGORICAL:
            return 0.0
        return float(self.range[0])

    @property
    def high(self) -> float:
        if self.kind is FeatureKind.CATEGORICAL:
            return float(len(self.range) - 1)
        return float(self.range[1])

    @property
    def width(self) -> float:
        return self.high - self.low

    def contains(self, value: float) -> bool:
        """Whether an encoded value lies in the feature's range.

        Ordinal and categorical values must additionally sit on an integer
        level / category index.
        """
        if not self.low <= value <= self.high:
            return False
        if self.kind in (FeatureKind.ORDINAL, FeatureKind.CATEGORICAL):
            return float(value).is_integer()
        return True


class FeatureSchema:
    """Ordered collection of FeatureSpec; the instance vector follows its order."""

    def __init__(self, features: list[FeatureSpec] | tuple[FeatureSpec, ...]):
        self.features: tuple[FeatureSpec, ...] = tuple(features)
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate feature names")
        self._index = {name: i for i, name in enumerate(names)}
        for f in self.features:
            if f.couples_with is not None:
                if f.couples_with not in self._index:
                    raise SchemaError(
                        f"feature {f.name!r}: couples_with unknown feature {f.couples_with!r}"
                    )
                if f.couples_with == f.name:
                    raise SchemaError(f"feature {f.name!r}: couples_with itself")

    def __len__(self) -> int:
        return len(self.features)

    def __iter__(self):
        return iter(self.features)

    def __getitem__(self, key: int | str) -> FeatureSpec:
        if isinstance(key, str):
            return self.features[self._index[key]]
        return self.features[key]

    def __eq__(self, other) -> bool:
        return isinstance(other, FeatureSchema) and self.features == other.features

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def index_of(self, name: str) -> int:
        return self._index[name]

    # Array views consumed by the numeric code paths.

    @property
    def lows(self) -> np.ndarray:
        return np.array([f.low for f in self.features], dtype=float)

    @property
    def highs(self) -> np.ndarray:
        return np.array([f.high for f in self.features], dtype=float)

    @property
    def categorical_mask(self) -> np.ndarray:
        return np.array(
            [f.kind is FeatureKind.CATEGORICAL for f in self.features], dtype=bool
        )

    @property
    def ordinal_mask(self) -> np.ndarray:
        return np.array([f.kind is FeatureKind.ORDINAL for f in self.features], dtype=bool)

    @property
    def immutable_mask(self) -> np.ndarray:
        return np.array(
            [f.mutability is Mutability.IMMUTABLE for f in self.features], dtype=bool
        )

    @property
    def effort_weights(self) -> np.ndarray:
        return np.array([f.effort_weight for f in self.features], dtype=float)

    def validate_values(self, values: np.ndarray) -> None:
        """Raise SchemaError if a value vector violates any feature range."""
        values = np.asarray(values, dtype=float)
        if values.shape != (len(self),):
            raise SchemaError(
                f"value vector has length {values.shape}, schema has {len(self)} features"
            )
        for spec, v in zip(self.features, values):
            if not spec.contains(float(v)):
                raise SchemaError(f"feature {spec.name!r}: value {v!r} out of range")


def reference_schema() -> FeatureSchema:
    """The documented 6-feature credit-style schema.

    Monetary features are expressed in units of 10,000 so a one-unit income
    change reads as "+10k". Age and employment can only grow; education is
    ordinal, can only grow, and requires age to grow with it; nationality is
    immutable.
    """
    return FeatureSchema(
        [
            FeatureSpec(
                name="age",
                kind=FeatureKind.CONTINUOUS,
                range=(18.0, 75.0),
                mutability=Mutability.MUTABLE_NOT_ACTIONABLE,
                monotone_direction=MonotoneDirection.INCREASE_ONLY,
                change_rate=ChangeRate.SLOW,
                effort_weight=2.0,
            ),
            FeatureSpec(
                name="income",
                kind=FeatureKind.CONTINUOUS,
                range=(0.0, 20.0),
                mutability=Mutability.ACTIONABLE,
                monotone_direction=MonotoneDirection.FREE,
                change_rate=ChangeRate.FAST,
                effort_weight=1.0,
            ),
            FeatureSpec(
                name="savings",
                kind=FeatureKind.CONTINUOUS,
                range=(0.0, 50.0),
                mutability=Mutability.ACTIONABLE,
                monotone_direction=MonotoneDirection.FREE,
                change_rate=ChangeRate.FAST,
                effort_weight=0.5,
            ),
            FeatureSpec(
                name="education_level",
                kind=FeatureKind.ORDINAL,
                range=(0.0, 4.0),
                mutability=Mutability.ACTIONABLE,
                monotone_direction=MonotoneDirection.INCREASE_ONLY,
                change_rate=ChangeRate.SLOW,
                effort_weight=1.5,
                couples_with="age",
            ),
            FeatureSpec(
                name="employment_years",
                kind=FeatureKind.CONTINUOUS,
                range=(0.0, 40.0),
                mutability=Mutability.ACTIONABLE,
                monotone_direction=MonotoneDirection.INCREASE_ONLY,
                change_rate=ChangeRate.SLOW,
                effort_weight=1.5,
            ),
            FeatureSpec(
                name="nationality",
                kind=FeatureKind.CATEGORICAL,
                range=("A", "B", "C"),
                mutability=Mutability.IMMUTABLE,
                change_rate=ChangeRate.SELDOM,
                effort_weight=0.0,
            ),
        ]
    )


def schema_to_dict(schema: FeatureSchema) -> dict:
    return {
        "features": [
            {
                "name": f.name,
                "kind": f.kind.value,
                "range": list(f.range),
                "mutability": f.mutability.value,
                "monotone_direction": f.monotone_direction.value,
                "change_rate": f.change_rate.value,
                "effort_weight": f.effort_weight,
                "couples_with": f.couples_with,
            }
            for f in schema.features
        ]
    }


def schema_from_dict(doc: dict) -> FeatureSchema:
    try:
        raw = doc["features"]
    except (KeyError, TypeError):
        raise SchemaError("schema document must have a 'features' list")
    features = []
    for entry in raw:
        try:
            features.append(
                FeatureSpec(
                    name=entry["name"],
                    kind=FeatureKind(entry["kind"]),
                    range=tuple(entry["range"]),
                    mutability=Mutability(entry["mutability"]),
                    monotone_direction=MonotoneDirection(
                        entry.get("monotone_direction", "free")
                    ),
                    change_rate=ChangeRate(entry.get("change_rate", "fast")),
                    effort_weight=float(entry.get("effort_weight", 1.0)),
                    couples_with=entry.get("couples_with"),
                )
            )
        except (KeyError, ValueError, TypeError) as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(f"malformed feature entry {entry!r}: {exc}") from exc
    return FeatureSchema(features)


def save_schema(schema: FeatureSchema, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(schema_to_dict(schema), indent=2) + "\n", encoding="utf-8"
    )


def load_schema(path: str | Path) -> FeatureSchema:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"schema file {path}: invalid JSON ({exc})") from exc
    return schema_from_dict(doc)
