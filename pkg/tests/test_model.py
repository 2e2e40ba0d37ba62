import numpy as np
import pytest

from cfcommit.model import (
    DegenerateTrainingError,
    ModelFileError,
    ScoringModel,
    TrainConfig,
    accuracy,
    certainty_of,
    input_gradient,
    load_model,
    predict,
    save_model,
    scores,
    train,
    training_loss,
)
from cfcommit.population import Instance, LabeledDataset
from cfcommit.schema import FeatureKind, FeatureSchema, FeatureSpec, Mutability

LOGISTIC_1 = 0.7310585786300049  # logistic(1), frozen from direct evaluation


def two_feature_schema():
    return FeatureSchema(
        [
            FeatureSpec("a", FeatureKind.CONTINUOUS, (-100.0, 100.0), Mutability.ACTIONABLE),
            FeatureSpec("b", FeatureKind.CONTINUOUS, (-100.0, 100.0), Mutability.ACTIONABLE),
        ]
    )


def dataset_from(X, y):
    schema = two_feature_schema()
    instances = [Instance(i, np.asarray(row, dtype=float)) for i, row in enumerate(X)]
    return LabeledDataset(schema, instances, y)


def separable_dataset():
    """20 points, margin >= 1 around the line a - b = 0."""
    rng = np.random.default_rng(0)
    pos = np.column_stack([rng.uniform(2, 5, 10), rng.uniform(0, 1, 10)])
    neg = np.column_stack([rng.uniform(0, 1, 10), rng.uniform(2, 5, 10)])
    X = np.vstack([pos, neg])
    y = np.array([1] * 10 + [0] * 10)
    return dataset_from(X, y)


class TestPredict:
    def test_zero_model_scores_half_and_ties_positive(self):
        model = ScoringModel(weights=np.zeros(3), bias=0.0, version_id=1)
        p = predict(model, np.zeros(3))
        assert p.score == 0.5
        assert p.label == 1
        assert p.certainty_of_label == 0.5

    def test_hand_computed_logistic(self):
        model = ScoringModel(weights=np.array([1.0, -1.0]), bias=0.0, version_id=1)
        p = predict(model, np.array([2.0, 1.0]))
        assert p.score == pytest.approx(LOGISTIC_1, abs=1e-6)
        assert p.label == 1
        assert p.certainty_of_label == pytest.approx(LOGISTIC_1, abs=1e-6)

    def test_certainty_of_negative_outcome_is_complement(self):
        model = ScoringModel(weights=np.array([1.0, -1.0]), bias=0.0, version_id=1)
        x = np.array([2.0, 1.0])
        assert certainty_of(model, x, 0) == pytest.approx(1 - LOGISTIC_1, abs=1e-6)
        assert certainty_of(model, x, 1) + certainty_of(model, x, 0) == pytest.approx(1.0)

    def test_dimension_mismatch(self):
        model = ScoringModel(weights=np.array([1.0]), bias=0.0, version_id=1)
        with pytest.raises(ValueError):
            predict(model, np.array([1.0, 2.0]))

    def test_accepts_instances(self):
        model = ScoringModel(weights=np.array([1.0, 0.0]), bias=0.0, version_id=1)
        inst = Instance(0, np.array([3.0, 9.0]))
        assert predict(model, inst).score == predict(model, inst.values).score


class TestTrain:
    def test_zero_epochs_returns_seeded_initialization(self):
        data = separable_dataset()
        config = TrainConfig(learning_rate=0.5, epochs=0, init_seed=17)
        model = train(data, config, prior_version=4)
        rng = np.random.default_rng(17)
        assert np.array_equal(model.weights, 0.01 * rng.standard_normal(2))
        assert model.bias == 0.01 * float(rng.standard_normal())
        assert model.version_id == 5

    def test_separable_toy_reaches_full_training_accuracy(self):
        data = separable_dataset()
        model = train(data, TrainConfig(learning_rate=0.5, epochs=500, init_seed=1), 0)
        assert accuracy(model, data.matrix, data.labels) == 1.0

    def test_uniform_double_weights_with_halved_rate_match_exactly(self):
        data = separable_dataset()
        base = train(data, TrainConfig(learning_rate=0.5, epochs=120, init_seed=2), 0)
        weighted = train(
            data,
            TrainConfig(
                learning_rate=0.25,
                epochs=120,
                init_seed=2,
                sample_weights=(2.0,) * len(data),
            ),
            0,
        )
        assert np.array_equal(base.weights, weighted.weights)
        assert base.bias == weighted.bias

    def test_empty_dataset_rejected(self):
        with pytest.raises(DegenerateTrainingError):
            train(dataset_from(np.empty((0, 2)), []), TrainConfig(), 0)

    def test_single_class_without_weights_rejected(self):
        data = dataset_from([[1.0, 0.0], [2.0, 0.0]], [1, 1])
        with pytest.raises(DegenerateTrainingError):
            train(data, TrainConfig(), 0)
        # with explicit weights the caller takes responsibility
        train(data, TrainConfig(epochs=5, sample_weights=(1.0, 1.0)), 0)

    def test_bad_sample_weights(self):
        data = separable_dataset()
        with pytest.raises(ValueError):
            train(data, TrainConfig(sample_weights=(1.0,)), 0)
        with pytest.raises(ValueError):
            train(data, TrainConfig(sample_weights=(0.0,) * len(data)), 0)

    def test_loss_not_above_initialization(self):
        data = separable_dataset()
        config = TrainConfig(learning_rate=0.1, epochs=200, init_seed=6)
        init = train(data, TrainConfig(learning_rate=0.1, epochs=0, init_seed=6), 0)
        final = train(data, config, 0)
        X, y = data.matrix, data.labels
        assert training_loss(final, X, y) <= training_loss(init, X, y)

    def test_standardized_training_keeps_raw_space_contract(self):
        data = separable_dataset()
        model = train(
            data, TrainConfig(learning_rate=0.5, epochs=300, init_seed=1, standardize=True), 0
        )
        # score must be logistic(w.x + b) on raw features
        x = data.matrix[0]
        z = float(model.weights @ x + model.bias)
        assert predict(model, x).score == pytest.approx(1 / (1 + np.exp(-z)))
        assert accuracy(model, data.matrix, data.labels) == 1.0

    def test_version_increments_from_prior(self):
        data = separable_dataset()
        model = train(data, TrainConfig(epochs=1), prior_version=7, trained_at=12)
        assert model.version_id == 8
        assert model.trained_at == 12


class TestInputGradient:
    def test_zero_weights_zero_gradient(self):
        model = ScoringModel(weights=np.zeros(4), bias=1.0, version_id=1)
        assert np.array_equal(input_gradient(model, np.ones(4)), np.zeros(4))

    def test_quarter_weights_at_the_boundary(self):
        model = ScoringModel(weights=np.array([2.0, -1.0]), bias=-1.0, version_id=1)
        x = np.array([1.0, 1.0])  # z = 0 -> score 0.5
        assert predict(model, x).score == 0.5
        assert np.allclose(input_gradient(model, x), 0.25 * model.weights, atol=1e-15)

    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(11)
        h = 1e-5
        for _ in range(100):
            d = int(rng.integers(1, 6))
            model = ScoringModel(
                weights=rng.normal(0, 1, d), bias=float(rng.normal()), version_id=1
            )
            x = rng.normal(0, 2, d)
            grad = input_gradient(model, x)
            for j in range(d):
                e = np.zeros(d)
                e[j] = h
                fd = (predict(model, x + e).score - predict(model, x - e).score) / (2 * h)
                assert abs(grad[j] - fd) < 1e-6


class TestModelIO:
    def test_round_trip(self, tmp_path):
        model = ScoringModel(
            weights=np.array([0.1234567890123456, -3.14159]), bias=2.718281828459045,
            version_id=9, trained_at=42,
        )
        path = tmp_path / "model.json"
        save_model(model, path)
        assert load_model(path) == model

    def test_version_preserved(self, tmp_path):
        data = separable_dataset()
        model = train(data, TrainConfig(epochs=3), prior_version=2)
        path = tmp_path / "model.json"
        save_model(model, path)
        assert load_model(path).version_id == 3

    def test_truncated_file_is_a_parse_error(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text('{"weights": [1.0, 2.0], "bias":', encoding="utf-8")
        with pytest.raises(ModelFileError):
            load_model(path)


def test_scores_batches_match_predict():
    model = ScoringModel(weights=np.array([0.5, -0.25]), bias=0.1, version_id=1)
    X = np.array([[1.0, 2.0], [0.0, 0.0], [-3.0, 4.0]])
    batch = scores(model, X)
    for i, row in enumerate(X):
        assert batch[i] == predict(model, row).score
