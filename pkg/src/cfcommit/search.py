"""Nearest-counterfactual search under declared feasibility constraints.

The search minimizes a squared score loss (score - target)^2 plus a weighted
L1 distance to the base point. The closeness weight starts at ``lambda_max``
(distance pressure so strong the minimizer stays put) and decays by
``lambda_decay`` per level; the first level whose minimizer crosses the
decision boundary yields a candidate, which is then refined against the
unit-weight objective inside the flipped region, sparsified by greedy
restoration, and feasibility-checked.

Immutable and zero-distance-weight features are frozen at their base values
during the search; monotone-constrained features are clamped to their allowed
side; a feature coupled to a partner (education -> age) drags the partner up
by one unit when it increases. Categorical features are never optimized by
gradient: single-category substitutions are enumerated and combined with the
continuous optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ScoringModel, certainty_of, predict
from .population import Instance, LabeledDataset
from .schema import FeatureSchema, MonotoneDirection

# Features coupled to a partner drag it up by this many units when they increase.
COUPLING_BUMP = 1.0

# Annealing relaxes the closeness weight until it falls below this floor.
LAMBDA_FLOOR = 1e-6


@dataclass(frozen=True)
class DistanceWeights:
    """Per-feature nonnegative weights for the L1 distance; categorical features
    contribute a 0/1 mismatch instead of an absolute difference."""

    values: np.ndarray
    categorical_mask: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(
            self, "categorical_mask", np.asarray(self.categorical_mask, dtype=bool)
        )
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("distance weights must be finite and nonnegative")


@dataclass(frozen=True)
class SearchConfig:
    lambda_max: float = 10.0
    lambda_decay: float = 0.7
    restarts: int = 2
    step_size: float = 0.25
    max_iters_per_lambda: int = 80
    convergence_tol: float = 1e-7
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.lambda_max <= 0:
            raise ValueError("lambda_max must be positive")
        if not 0 < self.lambda_decay < 1:
            raise ValueError("lambda_decay must lie strictly inside (0, 1)")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.step_size <= 0 or self.convergence_tol <= 0:
            raise ValueError("step_size and convergence_tol must be positive")


@dataclass(eq=False)
class Counterfactual:
    """A generated scenario: change these features and the model's outcome flips."""

    subject_id: int
    base_point: Instance
    point: np.ndarray
    target_outcome: int
    distance: float
    changed_features: tuple[str, ...]
    certainty_at_issue: float
    actionability_cost: float
    implementation_probability: float
    model_version_at_issue: int

    def __post_init__(self) -> None:
        self.point = np.asarray(self.point, dtype=float)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Counterfactual)
            and self.subject_id == other.subject_id
            and self.base_point == other.base_point
            and np.array_equal(self.point, other.point)
            and self.target_outcome == other.target_outcome
            and self.distance == other.distance
            and self.changed_features == other.changed_features
            and self.certainty_at_issue == other.certainty_at_issue
            and self.actionability_cost == other.actionability_cost
            and self.implementation_probability == other.implementation_probability
            and self.model_version_at_issue == other.model_version_at_issue
        )


def mad_weights(dataset: LabeledDataset) -> DistanceWeights:
    """Inverse median-absolute-deviation weights per feature.

    Zero MAD falls back to 1/range-width; zero width freezes the feature
    (weight 0). Categorical features get weight 1 when they have more than one
    category (the 0/1 mismatch is already scale-free), else 0.
    """
    if len(dataset) == 0:
        raise ValueError("cannot derive distance weights from an empty dataset")
    X = dataset.matrix
    values = []
    for j, spec in enumerate(dataset.schema):
        if bool(dataset.schema.categorical_mask[j]):
            values.append(1.0 if len(spec.range) > 1 else 0.0)
            continue
        col = X[:, j]
        mad = float(np.median(np.abs(col - np.median(col))))
        if mad > 0:
            values.append(1.0 / mad)
        elif spec.width > 0:
            values.append(1.0 / spec.width)
        else:
            values.append(0.0)
    return DistanceWeights(np.array(values), dataset.schema.categorical_mask)


def distance(x, c, w: DistanceWeights) -> float:
    """Weighted L1 distance; categorical coordinates count a 0/1 mismatch."""
    x = np.asarray(getattr(x, "values", x), dtype=float)
    c = np.asarray(c, dtype=float)
    if x.shape != c.shape or x.shape != w.values.shape:
        raise ValueError(
            f"dimension mismatch: x {x.shape}, c {c.shape}, weights {w.values.shape}"
        )
    cat = w.categorical_mask
    cont = np.sum(w.values[~cat] * np.abs(x[~cat] - c[~cat]))
    catd = np.sum(w.values[cat] * (x[cat] != c[cat]))
    return float(cont + catd)


def feasibility_violations(candidate, base, schema: FeatureSchema) -> list[str]:
    """All constraint violations of a candidate with respect to its base point.

    Empty list means the candidate is feasible. Checks: immutable features
    unchanged, monotone directions respected, every value in range (integer
    levels for ordinals/categoricals), and coupled features only increased
    together with their partner.
    """
    c = np.asarray(candidate, dtype=float)
    b = np.asarray(getattr(base, "values", base), dtype=float)
    if c.shape != b.shape or c.shape != (len(schema),):
        raise ValueError("candidate/base dimensions do not match the schema")
    violations = []
    for j, spec in enumerate(schema):
        cj, bj = float(c[j]), float(b[j])
        if spec.mutability.value == "immutable" and cj != bj:
            violations.append(f"immutable feature {spec.name!r} changed")
        if spec.monotone_direction is MonotoneDirection.INCREASE_ONLY and cj < bj:
            violations.append(f"feature {spec.name!r} decreased but is increase-only")
        if spec.monotone_direction is MonotoneDirection.DECREASE_ONLY and cj > bj:
            violations.append(f"feature {spec.name!r} increased but is decrease-only")
        if not spec.contains(cj):
            violations.append(f"feature {spec.name!r} value {cj!r} out of range")
    for j, spec in enumerate(schema):
        if spec.couples_with is None:
            continue
        p = schema.index_of(spec.couples_with)
        if float(c[j]) > float(b[j]) and float(c[p]) <= float(b[p]):
            violations.append(
                f"feature {spec.name!r} increased but coupled partner "
                f"{spec.couples_with!r} did not"
            )
    return violations


def actionability_cost(base, c, schema: FeatureSchema) -> float:
    """Effort-weighted size of the recommended change (0/1 mismatch for categoricals)."""
    b = np.asarray(getattr(base, "values", base), dtype=float)
    c = np.asarray(c, dtype=float)
    violations = feasibility_violations(c, b, schema)
    if violations:
        raise ValueError(f"infeasible candidate: {violations}")
    cat = schema.categorical_mask
    effort = schema.effort_weights
    cont = np.sum(effort[~cat] * np.abs(c[~cat] - b[~cat]))
    catd = np.sum(effort[cat] * (c[cat] != b[cat]))
    return float(cont + catd)


def implementation_probability(cost: float, scale: float) -> float:
    """exp(-cost/scale): the chance a subject actually carries the scenario out."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    if cost < 0:
        raise ValueError("cost must be nonnegative")
    return float(math.exp(-cost / scale))


def sparsify(
    model: ScoringModel,
    base,
    candidate,
    target: int,
    w: DistanceWeights,
    schema: FeatureSchema | None = None,
) -> np.ndarray:
    """Greedily restore changed features to their base values while the
    prediction stays at the target.

    Features are visited in descending order of their weighted distance
    contribution (ties by feature index). When a schema is given, a restore is
    also skipped if it would break feasibility (e.g. restoring the coupled
    partner of a still-increased feature).
    """
    b = np.asarray(getattr(base, "values", base), dtype=float)
    c = np.asarray(candidate, dtype=float).copy()
    if predict(model, c).label != target:
        raise ValueError("candidate does not reach the target outcome")
    contributions = []
    for j in range(len(c)):
        if c[j] == b[j]:
            continue
        if w.categorical_mask[j]:
            contributions.append((float(w.values[j]), j))
        else:
            contributions.append((float(w.values[j] * abs(c[j] - b[j])), j))
    contributions.sort(key=lambda item: (-item[0], item[1]))
    for _, j in contributions:
        trial = c.copy()
        trial[j] = b[j]
        if predict(model, trial).label != target:
            continue
        if schema is not None and feasibility_violations(trial, b, schema):
            continue
        c = trial
    return c


class _Search:
    """Precomputed state for one generate() call (one model, base point, target)."""

    def __init__(self, model, base, target, schema, w, cfg):
        self.model = model
        self.base = np.asarray(base, dtype=float)
        self.target = int(target)
        self.schema = schema
        self.w = w
        self.cfg = cfg
        self.wm = model.weights
        self.bias = model.bias
        self.cat = schema.categorical_mask
        frozen = schema.immutable_mask | (w.values == 0)
        self.grad_mask = ~(frozen | self.cat)
        lows, highs = schema.lows, schema.highs
        inc = np.array(
            [f.monotone_direction is MonotoneDirection.INCREASE_ONLY for f in schema]
        )
        dec = np.array(
            [f.monotone_direction is MonotoneDirection.DECREASE_ONLY for f in schema]
        )
        self.eff_lo = np.where(frozen | inc, self.base, lows)
        self.eff_hi = np.where(frozen | dec, self.base, highs)
        self.couples = [
            (j, schema.index_of(f.couples_with))
            for j, f in enumerate(schema)
            if f.couples_with is not None
        ]
        # Gradient steps are scaled per feature by half the range so one
        # step_size works across differently scaled features.
        self.step_scale = np.maximum((highs - lows) / 2.0, 1e-12)
        scale = 1.0 + abs(self.bias) + float(
            np.sum(np.abs(self.wm) * np.maximum(np.abs(lows), np.abs(highs)))
        )
        self.margin = 1e-9 * scale
        self.z_proj = self.margin if self.target == 1 else -self.margin
        self.ordinal = schema.ordinal_mask
        self.wm_free = self.wm * self.grad_mask
        self.wm_free_sq = float(np.dot(self.wm_free, self.wm_free))
        self._noncat_idx = np.flatnonzero(~self.cat)
        self._cat_idx = np.flatnonzero(self.cat)
        self._wd_noncat = w.values[self._noncat_idx]
        self._wd_cat = w.values[self._cat_idx]
        self._base_noncat = self.base[self._noncat_idx]
        self._base_cat = self.base[self._cat_idx]

    # -- objective pieces -------------------------------------------------

    def z(self, c: np.ndarray) -> float:
        return float(self.wm @ c + self.bias)

    def flipped(self, c: np.ndarray) -> bool:
        z = self.z(c)
        return z >= 0 if self.target == 1 else z < 0

    def loss(self, c: np.ndarray) -> float:
        score = 1.0 / (1.0 + math.exp(-max(min(self.z(c), 500.0), -500.0)))
        return (score - self.target) ** 2

    def dist(self, c: np.ndarray) -> float:
        d = float(np.sum(self._wd_noncat * np.abs(c[self._noncat_idx] - self._base_noncat)))
        if self._cat_idx.size:
            d += float(np.sum(self._wd_cat * (c[self._cat_idx] != self._base_cat)))
        return d

    def objective(self, c: np.ndarray) -> float:
        return self.loss(c) + self.dist(c)

    # -- feasible projection ----------------------------------------------

    def project(self, c: np.ndarray, assignment: np.ndarray) -> np.ndarray:
        c = np.minimum(np.maximum(c, self.eff_lo), self.eff_hi)
        if self._cat_idx.size:
            c[self._cat_idx] = assignment[self._cat_idx]
        for j, p in self.couples:
            if c[j] > self.base[j] and c[p] <= self.base[p]:
                bumped = min(self.base[p] + COUPLING_BUMP, self.eff_hi[p])
                if bumped > self.base[p]:
                    c[p] = bumped
                else:
                    c[j] = self.base[j]
        return c

    def _loss_grad(self, c: np.ndarray) -> np.ndarray:
        z = max(min(self.z(c), 500.0), -500.0)
        score = 1.0 / (1.0 + math.exp(-z))
        return 2.0 * (score - self.target) * score * (1.0 - score) * self.wm

    def descend(self, c: np.ndarray, mu: float, assignment: np.ndarray,
                iters: int, step: float) -> np.ndarray:
        """Proximal gradient descent on loss + mu * distance: gradient step on
        the smooth loss, then soft-threshold toward the base point (the exact
        proximal map of the weighted L1 term), then project."""
        sv = step * self.step_scale
        threshold = sv * mu * self.w.values
        for _ in range(iters):
            half = c - sv * self._loss_grad(c)
            u = half - self.base
            shrunk = self.base + np.sign(u) * np.maximum(np.abs(u) - threshold, 0.0)
            new = self.project(np.where(self.grad_mask, shrunk, c), assignment)
            if float(np.max(np.abs(new - c))) < self.cfg.convergence_tol:
                return new
            c = new
        return c

    def anneal(self, c: np.ndarray, assignment: np.ndarray) -> np.ndarray | None:
        """Relax the closeness weight from lambda_max until a level's minimizer
        flips the label; None when even the loosest level cannot flip."""
        mu = self.cfg.lambda_max
        c = self.project(c, assignment)
        if self.flipped(c):
            return c
        while mu > LAMBDA_FLOOR:
            c = self.descend(c, mu, assignment, self.cfg.max_iters_per_lambda,
                             self.cfg.step_size)
            if self.flipped(c):
                return c
            mu *= self.cfg.lambda_decay
        return None

    # -- refinement inside the flipped region -------------------------------

    def _halfspace_fix(self, c: np.ndarray, assignment: np.ndarray) -> np.ndarray:
        if self.wm_free_sq == 0:
            return c
        for _ in range(3):
            if self.flipped(c):
                return c
            shift = (self.z_proj - self.z(c)) / self.wm_free_sq
            c = self.project(c + shift * self.wm_free, assignment)
        return c

    def polish(self, c: np.ndarray, assignment: np.ndarray) -> np.ndarray:
        """Gradient descent on the unit-weight objective, projected back into
        the flipped halfspace whenever a step crosses the boundary."""
        best, best_f = c.copy(), self.objective(c)
        step = self.cfg.step_size
        for _ in range(4):
            cur = best.copy()
            sv = step * self.step_scale
            threshold = sv * self.w.values
            for _ in range(self.cfg.max_iters_per_lambda):
                half = cur - sv * self._loss_grad(cur)
                u = half - self.base
                shrunk = self.base + np.sign(u) * np.maximum(np.abs(u) - threshold, 0.0)
                new = self.project(np.where(self.grad_mask, shrunk, cur), assignment)
                new = self._halfspace_fix(new, assignment)
                if self.flipped(new):
                    f = self.objective(new)
                    if f < best_f:
                        best, best_f = new.copy(), f
                if float(np.max(np.abs(new - cur))) < self.cfg.convergence_tol:
                    break
                cur = new
            step /= 5.0
        return best

    def boundary_snaps(self, c: np.ndarray, assignment: np.ndarray) -> np.ndarray:
        """Try moving each free coordinate exactly onto the decision boundary;
        keep any improvement. Lands on sharp optima PGD only approaches."""
        best, best_f = c.copy(), self.objective(c)
        for _ in range(2):
            improved = False
            for j in np.flatnonzero(self.grad_mask):
                if self.wm[j] == 0:
                    continue
                trial = best.copy()
                partial = self.z(trial) - self.wm[j] * trial[j]
                trial[j] = (self.z_proj - partial) / self.wm[j]
                trial[j] = min(max(trial[j], self.eff_lo[j]), self.eff_hi[j])
                trial = self.project(trial, assignment)
                if self.flipped(trial):
                    f = self.objective(trial)
                    if f < best_f:
                        best, best_f = trial, f
                        improved = True
            if not improved:
                break
        return best

    def segment_candidate(self, c_flip: np.ndarray, assignment: np.ndarray
                          ) -> np.ndarray | None:
        """Bisect along the straight segment from the base point to a flipped
        point for the earliest flip; the flip set is an interval because the
        score is linear in the interpolation parameter."""
        start = self.base.copy()
        start[self.cat] = assignment[self.cat]
        start = self.project(start, assignment)
        if not self.flipped(c_flip):
            return None
        lo, hi = 0.0, 1.0
        delta = c_flip - start
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            if self.flipped(start + mid * delta):
                hi = mid
            else:
                lo = mid
        cand = start + hi * delta
        return cand if self.flipped(cand) else None

    # -- candidate finalization ---------------------------------------------

    def _fix_ordinal_flip(self, c: np.ndarray, assignment: np.ndarray
                          ) -> np.ndarray | None:
        direction = 1.0 if self.target == 1 else -1.0
        for _ in range(32):
            if self.flipped(c):
                return c
            options = []
            for j in np.flatnonzero(self.ordinal & self.grad_mask):
                stepj = direction * np.sign(self.wm[j]) if self.wm[j] != 0 else 0.0
                if stepj == 0:
                    continue
                new_v = c[j] + stepj
                if self.eff_lo[j] <= new_v <= self.eff_hi[j]:
                    options.append((abs(self.wm[j]), j, new_v))
            if not options:
                return None
            _, j, new_v = max(options)
            c = c.copy()
            c[j] = new_v
            c = self.project(c, assignment)
        return c if self.flipped(c) else None

    def finalize(self, c: np.ndarray, assignment: np.ndarray) -> np.ndarray | None:
        """Round ordinals, re-check the flip, sparsify, and verify feasibility."""
        c = self.project(c.copy(), assignment)
        if np.any(self.ordinal):
            c[self.ordinal] = np.floor(c[self.ordinal] + 0.5)
            c = self.project(c, assignment)
            if not self.flipped(c):
                fixed = self._fix_ordinal_flip(c, assignment)
                if fixed is None:
                    return None
                c = fixed
        if not self.flipped(c):
            return None
        c = sparsify(self.model, self.base, c, self.target, self.w, self.schema)
        if feasibility_violations(c, self.base, self.schema):
            return None
        return c


def generate(
    model: ScoringModel,
    x: Instance,
    target: int,
    schema: FeatureSchema,
    w: DistanceWeights,
    cfg: SearchConfig,
    probability_scale: float = 1.0,
) -> Counterfactual | None:
    """Search for the nearest feasible counterfactual reaching `target`.

    Returns None when no restart can flip the label under the declared
    constraints (recourse is infeasible for this subject).
    """
    if len(x.values) != len(schema) or model.weights.shape[0] != len(schema):
        raise ValueError("instance, model and schema dimensions do not agree")
    base = np.asarray(x.values, dtype=float)
    if predict(model, base).label == target:
        return _package(model, x, base.copy(), target, schema, w, probability_scale)

    search = _Search(model, base, target, schema, w, cfg)

    assignments = [base.copy()]
    for j in np.flatnonzero(schema.categorical_mask):
        spec = schema[int(j)]
        if bool(schema.immutable_mask[j]) or w.values[j] == 0:
            continue
        for v in range(len(spec.range)):
            if float(v) != base[j]:
                variant = base.copy()
                variant[j] = float(v)
                assignments.append(variant)

    best_point: np.ndarray | None = None
    best_key: tuple[float, int] | None = None
    for ai, assignment in enumerate(assignments):
        for r in range(cfg.restarts):
            if r == 0:
                start = base.copy()
            else:
                rng = np.random.default_rng([cfg.rng_seed, ai, r])
                start = rng.uniform(search.eff_lo, search.eff_hi)
            start[schema.categorical_mask] = assignment[schema.categorical_mask]
            c_flip = search.anneal(start, assignment)
            if c_flip is None:
                continue
            pool = [search.boundary_snaps(search.polish(c_flip, assignment), assignment)]
            seg = search.segment_candidate(c_flip, assignment)
            if seg is not None:
                pool.append(search.boundary_snaps(seg, assignment))
            for cand in pool:
                final = search.finalize(cand, assignment)
                if final is None:
                    continue
                key = (search.objective(final), r)
                if best_key is None or key < best_key:
                    best_key, best_point = key, final
    if best_point is None:
        return None
    return _package(model, x, best_point, target, schema, w, probability_scale)


def _package(
    model: ScoringModel,
    x: Instance,
    point: np.ndarray,
    target: int,
    schema: FeatureSchema,
    w: DistanceWeights,
    probability_scale: float,
) -> Counterfactual:
    base = np.asarray(x.values, dtype=float)
    changed = tuple(
        schema.names[j] for j in range(len(schema)) if point[j] != base[j]
    )
    cost = actionability_cost(base, point, schema)
    return Counterfactual(
        subject_id=x.subject_id,
        base_point=x,
        point=point,
        target_outcome=int(target),
        distance=distance(base, point, w),
        changed_features=changed,
        certainty_at_issue=certainty_of(model, point, target),
        actionability_cost=cost,
        implementation_probability=implementation_probability(cost, probability_scale),
        model_version_at_issue=model.version_id,
    )


def counterfactual_to_dict(cf: Counterfactual) -> dict:
    return {
        "subject_id": cf.subject_id,
        "base_point": {
            "subject_id": cf.base_point.subject_id,
            "values": [float(v) for v in cf.base_point.values],
            "observed_at": cf.base_point.observed_at,
        },
        "point": [float(v) for v in cf.point],
        "target_outcome": cf.target_outcome,
        "distance": cf.distance,
        "changed_features": list(cf.changed_features),
        "certainty_at_issue": cf.certainty_at_issue,
        "actionability_cost": cf.actionability_cost,
        "implementation_probability": cf.implementation_probability,
        "model_version_at_issue": cf.model_version_at_issue,
    }


def counterfactual_from_dict(doc: dict) -> Counterfactual:
    bp = doc["base_point"]
    return Counterfactual(
        subject_id=doc["subject_id"],
        base_point=Instance(
            subject_id=bp["subject_id"],
            values=np.array([float(v) for v in bp["values"]]),
            observed_at=int(bp["observed_at"]),
        ),
        point=np.array([float(v) for v in doc["point"]]),
        target_outcome=int(doc["target_outcome"]),
        distance=float(doc["distance"]),
        changed_features=tuple(doc["changed_features"]),
        certainty_at_issue=float(doc["certainty_at_issue"]),
        actionability_cost=float(doc["actionability_cost"]),
        implementation_probability=float(doc["implementation_probability"]),
        model_version_at_issue=int(doc["model_version_at_issue"]),
    )
