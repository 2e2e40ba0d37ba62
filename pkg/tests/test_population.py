import math

import numpy as np
import pytest

from cfcommit.population import (
    DatasetError,
    DriftEvent,
    GroundTruthScorer,
    LabeledDataset,
    apply_drift,
    calibrate_intercept,
    generate_population,
    load_dataset,
    reference_scorer,
    sample_features,
    save_dataset,
)
from cfcommit.schema import SchemaError, reference_schema


@pytest.fixture(scope="module")
def schema():
    return reference_schema()


@pytest.fixture(scope="module")
def scorer(schema):
    return reference_scorer(schema)


def test_empty_population(schema, scorer):
    data = generate_population(schema, scorer, 0, seed=1)
    assert len(data) == 0
    assert data.class_counts() == (0, 0)
    assert data.matrix.shape == (0, len(schema))


def test_same_seed_gives_identical_datasets(schema, scorer, tmp_path):
    a = generate_population(schema, scorer, 200, seed=42)
    b = generate_population(schema, scorer, 200, seed=42)
    assert a == b
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    save_dataset(a, pa)
    save_dataset(b, pb)
    assert pa.read_bytes() == pb.read_bytes()
    c = generate_population(schema, scorer, 200, seed=43)
    assert c != a


def test_generated_values_respect_ranges(schema, scorer):
    data = generate_population(schema, scorer, 500, seed=7)
    for inst in data.instances:
        schema.validate_values(inst.values)


def test_dimension_mismatch_rejected(schema):
    bad = GroundTruthScorer(coefficients=(1.0, 2.0), intercept=0.0, noise_scale=0.1)
    with pytest.raises(SchemaError):
        generate_population(schema, bad, 10, seed=0)


def test_not_creditworthy_share_is_calibrated_to_30_percent(schema, scorer):
    # Footnote-9 style skew: class 0 should sit at 30% within 3 sigma for n=10,000.
    n = 10_000
    data = generate_population(schema, scorer, n, seed=20_240_202)
    n0, _ = data.class_counts()
    sigma = math.sqrt(0.3 * 0.7 / n)
    assert abs(n0 / n - 0.30) <= 3 * sigma


def test_calibrate_intercept_hits_target_rate(schema):
    coef = np.array([0.0, 0.1, 0.02, 0.5, 0.05, 0.0])
    b = calibrate_intercept(schema, coef, noise_scale=0.5, target_positive_rate=0.6)
    rng = np.random.default_rng(123)
    X = sample_features(schema, 100_000, rng)
    scorer = GroundTruthScorer(tuple(coef), b, 0.5)
    assert abs(float(np.mean(scorer.positive_probability(X))) - 0.6) < 0.01


class TestDrift:
    def test_zero_shift_is_identity(self, scorer):
        event = DriftEvent(at_step=0, intercept_shift=0.0)
        drifted = apply_drift(scorer, event)
        assert drifted == scorer

    def test_original_scorer_untouched(self, scorer):
        before = scorer.intercept
        apply_drift(scorer, DriftEvent(at_step=0, intercept_shift=-1.0))
        assert scorer.intercept == before

    def test_negative_intercept_shift_lowers_every_probability(self, schema, scorer):
        rng = np.random.default_rng(5)
        X = sample_features(schema, 1000, rng)
        drifted = apply_drift(scorer, DriftEvent(at_step=0, intercept_shift=-1.5))
        assert np.all(drifted.positive_probability(X) <= scorer.positive_probability(X))

    def test_boundary_instance_expected_label_flips(self, schema, scorer):
        rng = np.random.default_rng(9)
        X = sample_features(schema, 200, rng)
        latents = scorer.latent(X)
        idx = int(np.argmax(latents > 0))
        s = float(latents[idx])
        drifted = apply_drift(scorer, DriftEvent(at_step=0, intercept_shift=-2.0 * s))
        assert scorer.expected_label(X[idx]) == 1
        assert drifted.expected_label(X[idx]) == 0

    def test_inverse_shift_restores_exactly(self):
        # Dyadic coefficients and shifts so every float addition is exact.
        base = GroundTruthScorer(
            coefficients=(0.5, -0.25, 1.0, 2.0, 0.125, 0.0), intercept=-1.5, noise_scale=0.5
        )
        event = DriftEvent(at_step=3, intercept_shift=0.5, coefficient_shifts=(0.25,) * 6)
        inverse = DriftEvent(at_step=3, intercept_shift=-0.5, coefficient_shifts=(-0.25,) * 6)
        assert apply_drift(apply_drift(base, event), inverse) == base

    def test_shift_dimension_mismatch(self, scorer):
        with pytest.raises(ValueError):
            apply_drift(scorer, DriftEvent(at_step=0, intercept_shift=0.0,
                                           coefficient_shifts=(1.0,)))


class TestDatasetIO:
    def test_round_trip(self, schema, scorer, tmp_path):
        data = generate_population(schema, scorer, 50, seed=3)
        path = tmp_path / "pop.csv"
        save_dataset(data, path)
        assert load_dataset(path, schema) == data

    def test_unknown_column_is_schema_mismatch(self, schema, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("age,salary,savings,education_level,employment_years,nationality,label\n",
                        encoding="utf-8")
        with pytest.raises(DatasetError, match="header"):
            load_dataset(path, schema)

    def test_out_of_range_value_names_feature_and_row(self, schema, scorer, tmp_path):
        data = generate_population(schema, scorer, 3, seed=3)
        path = tmp_path / "pop.csv"
        save_dataset(data, path)
        lines = path.read_text(encoding="utf-8").splitlines()
        fields = lines[2].split(",")
        fields[1] = "999.0"  # income above its declared range
        lines[2] = ",".join(fields)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(DatasetError, match=r"row 1.*'income'"):
            load_dataset(path, schema)

    def test_malformed_row_rejected(self, schema, scorer, tmp_path):
        data = generate_population(schema, scorer, 2, seed=3)
        path = tmp_path / "pop.csv"
        save_dataset(data, path)
        with open(path, "a", encoding="utf-8") as fh:
            fh.write("1,2,3\n")
        with pytest.raises(DatasetError, match="row 2"):
            load_dataset(path, schema)

    def test_bad_label_rejected(self, schema, scorer, tmp_path):
        data = generate_population(schema, scorer, 2, seed=3)
        path = tmp_path / "pop.csv"
        save_dataset(data, path)
        text = path.read_text(encoding="utf-8").splitlines()
        row = text[1].rsplit(",", 1)[0] + ",7"
        text[1] = row
        path.write_text("\n".join(text) + "\n", encoding="utf-8")
        with pytest.raises(DatasetError, match="label"):
            load_dataset(path, schema)


def test_labels_and_instances_must_align(schema):
    with pytest.raises(DatasetError):
        LabeledDataset(schema, [], [1])
