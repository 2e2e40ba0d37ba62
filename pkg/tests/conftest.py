from __future__ import annotations

import numpy as np
import pytest

from cfcommit.model import ScoringModel
from cfcommit.policy import CommitmentPolicy, PolicyKind
from cfcommit.population import DriftEvent, Instance
from cfcommit.schema import (
    FeatureKind,
    FeatureSchema,
    FeatureSpec,
    Mutability,
    reference_schema,
)
from cfcommit.search import DistanceWeights, SearchConfig
from cfcommit.sim import SimConfig
from cfcommit.model import TrainConfig


@pytest.fixture
def box_schema() -> FeatureSchema:
    """Two unconstrained continuous features on [0, 2]."""
    return FeatureSchema(
        [
            FeatureSpec("f1", FeatureKind.CONTINUOUS, (0.0, 2.0), Mutability.ACTIONABLE),
            FeatureSpec("f2", FeatureKind.CONTINUOUS, (0.0, 2.0), Mutability.ACTIONABLE),
        ]
    )


@pytest.fixture
def ref_schema() -> FeatureSchema:
    return reference_schema()


@pytest.fixture
def unit_weights(box_schema) -> DistanceWeights:
    return DistanceWeights(np.array([1.0, 1.0]), box_schema.categorical_mask)


def make_model(weights, bias, version=1) -> ScoringModel:
    return ScoringModel(weights=np.asarray(weights, dtype=float), bias=bias, version_id=version)


def make_instance(values, subject_id=0) -> Instance:
    return Instance(subject_id=subject_id, values=np.asarray(values, dtype=float))


def small_sim_config(**overrides) -> SimConfig:
    """Fast desk-top scenario for unit tests (seconds, not minutes)."""
    params = dict(
        steps=14,
        population=80,
        application_rate=0.15,
        explanation_request_rate=0.9,
        implementation_delay=(1, 3),
        implementation_probability_scale=4.0,
        drift_events=(DriftEvent(at_step=6, intercept_shift=-2.0),),
        retrain_every=4,
        augmentation_enabled=False,
        policy=CommitmentPolicy(policy_id="unconditional", kind=PolicyKind.UNCONDITIONAL),
        search=SearchConfig(
            lambda_max=10.0,
            lambda_decay=0.7,
            restarts=1,
            step_size=0.25,
            max_iters_per_lambda=40,
            convergence_tol=1e-6,
            rng_seed=5,
        ),
        train=TrainConfig(
            learning_rate=0.5, epochs=200, l2_penalty=1e-4, init_seed=3, standardize=True
        ),
        tau=0.5,
        alpha=0.5,
        seed=99,
    )
    params.update(overrides)
    return SimConfig(**params)
