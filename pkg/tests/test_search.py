import math

import numpy as np
import pytest

from cfcommit.model import ScoringModel, certainty_of, predict
from cfcommit.population import Instance, LabeledDataset, generate_population, reference_scorer
from cfcommit.schema import (
    FeatureKind,
    FeatureSchema,
    FeatureSpec,
    MonotoneDirection,
    Mutability,
    reference_schema,
)
from cfcommit.search import (
    DistanceWeights,
    SearchConfig,
    actionability_cost,
    distance,
    feasibility_violations,
    generate,
    implementation_probability,
    mad_weights,
    sparsify,
)

from conftest import make_instance, make_model


def dataset_with_columns(schema, columns):
    X = np.column_stack(columns)
    instances = [Instance(i, X[i]) for i in range(X.shape[0])]
    return LabeledDataset(schema, instances, np.zeros(X.shape[0], dtype=int))


def grid_oracle(model, x, target, weights, lo=0.0, hi=2.0, resolution=0.01):
    """Exhaustive minimum of squared loss + weighted L1 over flipped grid points."""
    axis = np.arange(lo, hi + resolution / 2, resolution)
    g1, g2 = np.meshgrid(axis, axis, indexing="ij")
    P = np.column_stack([g1.ravel(), g2.ravel()])
    score = 1.0 / (1.0 + np.exp(-(P @ model.weights + model.bias)))
    flipped = (score >= 0.5).astype(int) == target
    if not flipped.any():
        return None
    objective = (score - target) ** 2 + np.abs(P - x) @ weights.values
    return float(objective[flipped].min())


def final_objective(model, x, cf, weights):
    loss = (predict(model, cf.point).score - cf.target_outcome) ** 2
    return loss + distance(x, cf.point, weights)


class TestMadWeights:
    def test_values_one_two_three_give_unit_weight(self):
        schema = FeatureSchema(
            [FeatureSpec("v", FeatureKind.CONTINUOUS, (0.0, 10.0), Mutability.ACTIONABLE)]
        )
        data = dataset_with_columns(schema, [np.array([1.0, 2.0, 3.0])])
        assert mad_weights(data).values[0] == 1.0

    def test_constant_feature_falls_back_to_range(self):
        schema = FeatureSchema(
            [FeatureSpec("v", FeatureKind.CONTINUOUS, (0.0, 10.0), Mutability.ACTIONABLE)]
        )
        data = dataset_with_columns(schema, [np.array([4.0, 4.0, 4.0])])
        assert mad_weights(data).values[0] == pytest.approx(0.1)

    def test_zero_width_range_freezes_feature(self):
        schema = FeatureSchema(
            [FeatureSpec("v", FeatureKind.CONTINUOUS, (4.0, 4.0), Mutability.ACTIONABLE)]
        )
        data = dataset_with_columns(schema, [np.array([4.0, 4.0, 4.0])])
        assert mad_weights(data).values[0] == 0.0

    def test_categorical_weight_is_one(self):
        schema = FeatureSchema(
            [
                FeatureSpec("v", FeatureKind.CONTINUOUS, (0.0, 10.0), Mutability.ACTIONABLE),
                FeatureSpec("c", FeatureKind.CATEGORICAL, ("A", "B"), Mutability.ACTIONABLE),
            ]
        )
        data = dataset_with_columns(
            schema, [np.array([1.0, 2.0, 3.0]), np.array([0.0, 1.0, 0.0])]
        )
        assert mad_weights(data).values[1] == 1.0

    def test_empty_dataset_rejected(self):
        schema = FeatureSchema(
            [FeatureSpec("v", FeatureKind.CONTINUOUS, (0.0, 1.0), Mutability.ACTIONABLE)]
        )
        with pytest.raises(ValueError):
            mad_weights(LabeledDataset(schema, [], []))


class TestDistance:
    def test_identity(self, unit_weights):
        x = np.array([0.3, 1.7])
        assert distance(x, x, unit_weights) == 0.0

    def test_hand_computed(self, unit_weights):
        assert distance(np.array([1.0, 2.0]), np.array([2.0, 4.0]), unit_weights) == 3.0

    def test_linear_in_weights(self, box_schema):
        w1 = DistanceWeights(np.array([1.0, 2.0]), box_schema.categorical_mask)
        w2 = DistanceWeights(np.array([2.0, 4.0]), box_schema.categorical_mask)
        x, c = np.array([0.0, 0.0]), np.array([1.5, 0.25])
        assert distance(x, c, w2) == pytest.approx(2 * distance(x, c, w1))

    def test_categorical_mismatch_is_zero_one(self):
        schema = FeatureSchema(
            [FeatureSpec("c", FeatureKind.CATEGORICAL, ("A", "B", "C"), Mutability.ACTIONABLE)]
        )
        w = DistanceWeights(np.array([2.0]), schema.categorical_mask)
        assert distance(np.array([0.0]), np.array([2.0]), w) == 2.0
        assert distance(np.array([1.0]), np.array([1.0]), w) == 0.0

    def test_dimension_mismatch(self, unit_weights):
        with pytest.raises(ValueError):
            distance(np.array([1.0]), np.array([1.0, 2.0]), unit_weights)


class TestFeasibility:
    def test_lowering_age_is_rejected(self, ref_schema):
        base = make_instance([40.0, 5.0, 10.0, 2.0, 8.0, 1.0])
        candidate = base.values.copy()
        candidate[0] = 35.0
        violations = feasibility_violations(candidate, base, ref_schema)
        assert any("age" in v for v in violations)

    def test_raising_education_without_age_violates_coupling(self, ref_schema):
        base = make_instance([40.0, 5.0, 10.0, 2.0, 8.0, 1.0])
        candidate = base.values.copy()
        candidate[3] = 3.0
        violations = feasibility_violations(candidate, base, ref_schema)
        assert any("education_level" in v and "age" in v for v in violations)
        # raising age alongside satisfies the coupling
        candidate[0] = 41.0
        assert feasibility_violations(candidate, base, ref_schema) == []

    def test_income_only_change_is_accepted(self, ref_schema):
        base = make_instance([40.0, 5.0, 10.0, 2.0, 8.0, 1.0])
        candidate = base.values.copy()
        candidate[1] = 9.0
        assert feasibility_violations(candidate, base, ref_schema) == []

    def test_immutable_change_rejected(self, ref_schema):
        base = make_instance([40.0, 5.0, 10.0, 2.0, 8.0, 1.0])
        candidate = base.values.copy()
        candidate[5] = 2.0
        assert any("nationality" in v for v in feasibility_violations(candidate, base, ref_schema))

    def test_out_of_range_rejected(self, ref_schema):
        base = make_instance([40.0, 5.0, 10.0, 2.0, 8.0, 1.0])
        candidate = base.values.copy()
        candidate[1] = 25.0
        assert any("income" in v for v in feasibility_violations(candidate, base, ref_schema))

    def test_non_integer_ordinal_rejected(self, ref_schema):
        base = make_instance([40.0, 5.0, 10.0, 2.0, 8.0, 1.0])
        candidate = base.values.copy()
        candidate[3] = 2.5
        candidate[0] = 42.0
        assert any("education_level" in v for v in feasibility_violations(candidate, base, ref_schema))

    def test_decrease_only_direction(self):
        schema = FeatureSchema(
            [
                FeatureSpec(
                    "debt",
                    FeatureKind.CONTINUOUS,
                    (0.0, 10.0),
                    Mutability.ACTIONABLE,
                    monotone_direction=MonotoneDirection.DECREASE_ONLY,
                )
            ]
        )
        assert feasibility_violations(np.array([7.0]), np.array([5.0]), schema)
        assert feasibility_violations(np.array([3.0]), np.array([5.0]), schema) == []


class TestActionability:
    def test_no_change_no_cost(self, ref_schema):
        base = make_instance([40.0, 5.0, 10.0, 2.0, 8.0, 1.0])
        assert actionability_cost(base, base.values, ref_schema) == 0.0

    def test_unit_income_raise_costs_its_effort_weight(self, ref_schema):
        # the canonical higher-income scenario: +1 unit at effort weight 1.0
        base = make_instance([40.0, 5.0, 10.0, 2.0, 8.0, 1.0])
        candidate = base.values.copy()
        candidate[1] += 1.0
        assert actionability_cost(base, candidate, ref_schema) == pytest.approx(1.0)

    def test_strictly_increasing_per_coordinate(self, ref_schema):
        base = make_instance([40.0, 5.0, 10.0, 2.0, 8.0, 1.0])
        small, large = base.values.copy(), base.values.copy()
        small[2] += 1.0
        large[2] += 2.0
        assert actionability_cost(base, large, ref_schema) > actionability_cost(
            base, small, ref_schema
        )

    def test_infeasible_input_rejected(self, ref_schema):
        base = make_instance([40.0, 5.0, 10.0, 2.0, 8.0, 1.0])
        candidate = base.values.copy()
        candidate[0] = 30.0
        with pytest.raises(ValueError):
            actionability_cost(base, candidate, ref_schema)


class TestImplementationProbability:
    def test_zero_cost_certain(self):
        assert implementation_probability(0.0, 2.0) == 1.0

    def test_cost_equal_to_scale(self):
        assert implementation_probability(3.0, 3.0) == pytest.approx(
            0.36787944117144233, abs=1e-6
        )

    def test_strictly_decreasing(self):
        assert implementation_probability(1.0, 2.0) > implementation_probability(1.5, 2.0)

    def test_nonpositive_scale_rejected(self):
        with pytest.raises(ValueError):
            implementation_probability(1.0, 0.0)


class TestSparsify:
    def test_zero_weight_model_feature_restored(self, box_schema, unit_weights):
        model = make_model([1.0, 0.0], -1.0)
        base = make_instance([0.0, 0.0])
        candidate = np.array([1.5, 1.2])  # f2 changed but carries no model weight
        assert predict(model, candidate).label == 1
        out = sparsify(model, base, candidate, 1, unit_weights)
        assert out[1] == 0.0
        assert predict(model, out).label == 1

    def test_already_at_target_stays_unchanged(self, box_schema, unit_weights):
        model = make_model([1.0, 0.0], 1.0)
        base = make_instance([0.0, 0.0])
        out = sparsify(model, base, base.values.copy(), 1, unit_weights)
        assert np.array_equal(out, base.values)

    def test_precondition_enforced(self, box_schema, unit_weights):
        model = make_model([1.0, 0.0], -1.0)
        base = make_instance([0.0, 0.0])
        with pytest.raises(ValueError):
            sparsify(model, base, np.array([0.1, 0.0]), 1, unit_weights)

    def test_never_grows_change_set_or_distance_or_flips(self, box_schema, unit_weights):
        rng = np.random.default_rng(21)
        for _ in range(300):
            model = make_model(rng.uniform(-3, 3, 2), float(rng.uniform(-2, 2)))
            base = make_instance(rng.uniform(0, 2, 2))
            candidate = rng.uniform(0, 2, 2)
            target = predict(model, candidate).label
            out = sparsify(model, base, candidate, target, unit_weights)
            changed_before = int(np.sum(candidate != base.values))
            changed_after = int(np.sum(out != base.values))
            assert changed_after <= changed_before
            assert distance(base.values, out, unit_weights) <= distance(
                base.values, candidate, unit_weights
            )
            assert predict(model, out).label == target


class TestGenerate:
    def test_already_at_target_returns_base(self, box_schema, unit_weights):
        model = make_model([1.0, 0.0], 1.0)
        x = make_instance([0.0, 0.0])
        cf = generate(model, x, 1, box_schema, unit_weights, SearchConfig(rng_seed=1))
        assert np.array_equal(cf.point, x.values)
        assert cf.distance == 0.0
        assert cf.changed_features == ()
        assert cf.implementation_probability == 1.0

    def test_matches_grid_oracle_on_the_worked_example(self, box_schema, unit_weights):
        model = make_model([1.0, 0.0], -1.0)
        x = make_instance([0.0, 0.0])
        cf = generate(model, x, 1, box_schema, unit_weights, SearchConfig(rng_seed=1))
        assert cf is not None
        assert cf.distance == pytest.approx(1.0, abs=1e-3)
        assert abs(cf.point[1]) < 1e-9
        oracle = grid_oracle(model, x.values, 1, unit_weights)
        assert final_objective(model, x.values, cf, unit_weights) <= oracle + 1e-3

    def test_only_influential_feature_immutable_gives_not_found(self, unit_weights):
        schema = FeatureSchema(
            [
                FeatureSpec("f1", FeatureKind.CONTINUOUS, (0.0, 2.0), Mutability.ACTIONABLE),
                FeatureSpec("f2", FeatureKind.CONTINUOUS, (0.0, 2.0), Mutability.IMMUTABLE),
            ]
        )
        model = make_model([0.0, 1.0], -1.0)
        x = make_instance([0.0, 0.0])
        assert generate(model, x, 1, schema, unit_weights, SearchConfig(rng_seed=1)) is None

    def test_stored_certainty_matches_certainty_of(self, box_schema, unit_weights):
        model = make_model([2.0, -1.0], -1.5)
        x = make_instance([0.2, 1.0])
        cf = generate(model, x, 1, box_schema, unit_weights, SearchConfig(rng_seed=3))
        assert cf is not None
        assert cf.certainty_at_issue == certainty_of(model, cf.point, cf.target_outcome)
        assert predict(model, cf.point).label == cf.target_outcome

    def test_changed_features_reflect_actual_changes(self, box_schema, unit_weights):
        model = make_model([1.0, 0.0], -1.0)
        x = make_instance([0.0, 1.3])
        cf = generate(model, x, 1, box_schema, unit_weights, SearchConfig(rng_seed=2))
        assert cf.changed_features == ("f1",)

    def test_deterministic_per_seed(self, box_schema, unit_weights):
        model = make_model([2.2, -0.7], -2.0)
        x = make_instance([0.1, 0.9])
        cfg = SearchConfig(rng_seed=123, restarts=3)
        a = generate(model, x, 1, box_schema, unit_weights, cfg)
        b = generate(model, x, 1, box_schema, unit_weights, cfg)
        assert np.array_equal(a.point, b.point)

    def test_categorical_substitution_can_flip(self):
        schema = FeatureSchema(
            [
                FeatureSpec("v", FeatureKind.CONTINUOUS, (0.0, 1.0), Mutability.ACTIONABLE),
                FeatureSpec("c", FeatureKind.CATEGORICAL, ("A", "B", "C"), Mutability.ACTIONABLE),
            ]
        )
        w = DistanceWeights(np.array([1.0, 1.0]), schema.categorical_mask)
        # only the category index carries weight; the flip needs category 2
        model = make_model([0.5, 2.0], -3.5)
        x = make_instance([0.0, 0.0])
        cf = generate(model, x, 1, schema, w, SearchConfig(rng_seed=4))
        assert cf is not None
        assert cf.point[1] == 2.0
        assert predict(model, cf.point).label == 1

    def test_ordinal_result_is_integer_level(self):
        schema = FeatureSchema(
            [
                FeatureSpec("level", FeatureKind.ORDINAL, (0.0, 6.0), Mutability.ACTIONABLE),
                FeatureSpec("v", FeatureKind.CONTINUOUS, (0.0, 1.0), Mutability.ACTIONABLE),
            ]
        )
        w = DistanceWeights(np.array([1.0, 1.0]), schema.categorical_mask)
        model = make_model([1.0, 0.2], -3.3)
        x = make_instance([0.0, 0.0])
        cf = generate(model, x, 1, schema, w, SearchConfig(rng_seed=5))
        assert cf is not None
        assert float(cf.point[0]).is_integer()
        assert predict(model, cf.point).label == 1

    def test_coupled_feature_drags_its_partner(self, ref_schema):
        data = generate_population(ref_schema, reference_scorer(ref_schema), 300, seed=8)
        w = mad_weights(data)
        # model that only rewards education: any flip must raise education, hence age
        model = make_model([0.0, 0.0, 0.0, 4.0, 0.0, 0.0], -9.0)
        x = make_instance([40.0, 5.0, 10.0, 1.0, 8.0, 1.0])
        assert predict(model, x).label == 0
        cf = generate(model, x, 1, ref_schema, w, SearchConfig(rng_seed=6))
        assert cf is not None
        edu, age = ref_schema.index_of("education_level"), ref_schema.index_of("age")
        assert cf.point[edu] > x.values[edu]
        assert cf.point[age] > x.values[age]
        assert feasibility_violations(cf.point, x, ref_schema) == []

    def test_oracle_equivalence_on_seeded_problems(self, box_schema, unit_weights):
        found = 0
        for seed in range(12):
            rng = np.random.default_rng(3000 + seed)
            model = make_model(rng.uniform(-3, 3, 2), float(rng.uniform(-3, 3)))
            x = make_instance(rng.uniform(0, 2, 2))
            wd = DistanceWeights(rng.uniform(0.8, 1.5, 2), box_schema.categorical_mask)
            target = 1 - predict(model, x).label
            oracle = grid_oracle(model, x.values, target, wd)
            cf = generate(model, x, target, box_schema, wd, SearchConfig(rng_seed=seed))
            if oracle is None:
                assert cf is None
                continue
            found += 1
            assert final_objective(model, x.values, cf, wd) <= oracle + 1e-3
        assert found >= 4


class TestFeasibilityOfGeneratedCounterfactuals:
    def test_randomized_reference_schema_trials(self, ref_schema):
        data = generate_population(ref_schema, reference_scorer(ref_schema), 400, seed=77)
        w = mad_weights(data)
        rng = np.random.default_rng(55)
        cfg = SearchConfig(rng_seed=9, restarts=1, max_iters_per_lambda=40)
        checked = 0
        for _ in range(60):
            model = make_model(rng.normal(0, 0.3, 6) / ref_schema.highs, float(rng.normal(0, 1)))
            i = int(rng.integers(0, len(data)))
            x = data.instances[i]
            target = 1 - predict(model, x).label
            cf = generate(model, x, target, ref_schema, w, cfg)
            if cf is None:
                continue
            checked += 1
            assert feasibility_violations(cf.point, x, ref_schema) == []
            assert predict(model, cf.point).label == target
            assert cf.distance == distance(x.values, cf.point, w)
            changed = tuple(
                ref_schema.names[j] for j in range(6) if cf.point[j] != x.values[j]
            )
            assert cf.changed_features == changed
        assert checked >= 20
