"""Counterfactual explanations with a temporal lifecycle.

Generation of feasible, actionable, sparse counterfactuals for a logistic
scoring model; an append-only ledger of the commitments they imply; model
retraining augmented with outstanding scenarios; honoring policies (boundary
conditions, probabilistic guarantees, combined schedules); and a timeline
simulator that surfaces unfortunate counterfactual events and measures the
augmentation mitigation.
"""

from .chronicle import ChangeTriple, EventCase, classify, detect
from .ledger import Commitment, CommitmentStatus, Ledger, LedgerError, replay
from .model import (
    Prediction,
    ScoringModel,
    TrainConfig,
    certainty_of,
    input_gradient,
    load_model,
    predict,
    save_model,
    train,
)
from .policy import (
    Assessment,
    CommitmentPolicy,
    Coverage,
    CoverageDecision,
    EconomicIndexSeries,
    PolicyKind,
    Regime,
    evaluate,
    regime_at,
    select_guaranteed,
)
from .population import (
    DriftEvent,
    GroundTruthScorer,
    Instance,
    LabeledDataset,
    apply_drift,
    generate_population,
    load_dataset,
    reference_scorer,
    save_dataset,
)
from .retraining import (
    AugmentationReport,
    HonoringReport,
    augment,
    class_weights,
    honoring_report,
    retrain_and_select,
)
from .schema import (
    ChangeRate,
    FeatureKind,
    FeatureSchema,
    FeatureSpec,
    MonotoneDirection,
    Mutability,
    load_schema,
    reference_schema,
    save_schema,
)
from .search import (
    Counterfactual,
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
from .sim import SimConfig, SimReport, compare, reference_scenario, run

__version__ = "0.1.0"
