"""Timeline simulator: applications, explanations, commitments, drift,
retraining, and resolutions over a synthetic credit population.

Each step, in order: ground-truth drift fires, the model retrains if due
(optionally augmented with every outstanding scenario), implemented
commitments from the previous step resolve under the configured policy,
overdue commitments expire, scheduled implementations fire (the subject's
data point becomes the scenario), and new applications arrive — denials may
request an explanation, which is issued as a commitment. Fully deterministic
per seed.

Training data at a retrain step is the current population relabeled by the
current ground truth; drift therefore reaches the model only through
retraining, which is exactly the gap that produces unfortunate counterfactual
events.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import chronicle, retraining
from .ledger import CommitmentStatus, Ledger
from .model import TrainConfig, certainty_of, scores, train
from .policy import (
    Assessment,
    CommitmentPolicy,
    EconomicIndexSeries,
    PolicyKind,
    evaluate,
    policy_from_dict,
    policy_to_dict,
    regime_at,
)
from .population import (
    DriftEvent,
    Instance,
    LabeledDataset,
    apply_drift,
    generate_population,
    reference_scorer,
)
from .schema import reference_schema
from .search import SearchConfig, generate, mad_weights


@dataclass(frozen=True)
class SimConfig:
    steps: int
    population: int
    application_rate: float
    explanation_request_rate: float
    implementation_delay: tuple[int, int]
    implementation_probability_scale: float
    drift_events: tuple[DriftEvent, ...]
    retrain_every: int
    augmentation_enabled: bool
    policy: CommitmentPolicy
    search: SearchConfig
    train: TrainConfig
    tau: float = 0.5
    alpha: float = 0.5
    seed: int = 0
    override_unit_cost: float = 1.0
    stress_threshold: float = 0.5
    crisis_threshold: float = -0.5

    def __post_init__(self) -> None:
        if self.steps < 0 or self.population < 0:
            raise ValueError("steps and population must be nonnegative")
        for name in ("application_rate", "explanation_request_rate", "tau", "alpha"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        lo, hi = self.implementation_delay
        if lo < 1 or hi < lo:
            raise ValueError("implementation_delay must be a positive integer range")
        if self.implementation_probability_scale <= 0:
            raise ValueError("implementation_probability_scale must be positive")
        if self.retrain_every < 1:
            raise ValueError("retrain_every must be at least 1")


@dataclass(frozen=True)
class StepMetrics:
    step: int
    applications: int
    denials: int
    explanations_issued: int
    explanations_not_found: int
    implementations: int
    resolutions_total: int
    resolved_honored: int
    resolved_broken: int
    resolved_void: int
    expired: int
    uce_count: int
    paradigmatic_count: int
    honoring_rate_running: float
    override_cost_running: float
    model_accuracy_vs_ground_truth: float
    regime: str


@dataclass(frozen=True)
class ResolutionRecord:
    commitment_id: int
    t0: int
    t1: int
    t2: int
    status: str
    case_number: int
    case_name: str
    certainty: float
    covered: str
    reason: str


@dataclass(frozen=True)
class SimSummary:
    steps: int
    applications: int
    denials: int
    explanations_issued: int
    explanations_not_found: int
    implementations: int
    resolutions_total: int
    honored: int
    broken: int
    void: int
    expired: int
    outstanding_at_end: int
    implemented_unresolved_at_end: int
    total_uces: int
    total_paradigmatic: int
    total_overrides: int
    override_cost: float
    final_honoring_rate: float
    honoring_evaluations: int
    final_accuracy: float
    final_model_version: int
    void_reasons: dict = field(default_factory=dict)


@dataclass
class SimReport:
    config: SimConfig
    steps: list[StepMetrics]
    summary: SimSummary
    resolutions: list[ResolutionRecord]
    ledger: Ledger


def build_index_series(config: SimConfig) -> EconomicIndexSeries:
    """Economic index derived from the drift events: it starts at 1.0 and
    absorbs every cumulative intercept shift, so a downturn drops it through
    the stress/crisis thresholds."""
    values = []
    level = 1.0
    shifts = {e.at_step: e.intercept_shift for e in config.drift_events}
    cumulative = 0.0
    for t in range(config.steps):
        cumulative += shifts.get(t, 0.0)
        values.append(level + cumulative)
    return EconomicIndexSeries(
        values=tuple(values),
        stress_threshold=config.stress_threshold,
        crisis_threshold=config.crisis_threshold,
    )


def run(config: SimConfig) -> SimReport:
    """Run the full timeline; see the module docstring for per-step order."""
    schema = reference_schema()
    series = build_index_series(config)
    needs_cohort = config.policy.kind is PolicyKind.COMBINED or (
        config.policy.kind is PolicyKind.PROBABILISTIC
        and config.policy.guaranteed_fraction is not None
    )

    steps_out: list[StepMetrics] = []
    resolutions_out: list[ResolutionRecord] = []
    ledger = Ledger()
    totals = {
        "applications": 0,
        "denials": 0,
        "explanations_issued": 0,
        "explanations_not_found": 0,
        "implementations": 0,
        "resolutions_total": 0,
        "honored": 0,
        "broken": 0,
        "void": 0,
        "expired": 0,
        "total_uces": 0,
        "total_paradigmatic": 0,
        "total_overrides": 0,
    }
    override_cost = 0.0
    honoring_hits = 0
    honoring_evals = 0
    void_reasons: dict[str, int] = {}
    final_accuracy = 1.0
    model_version = 0

    if config.steps > 0 and config.population > 0:
        scorer = reference_scorer(schema)
        data0 = generate_population(schema, scorer, config.population, seed=config.seed)
        weights = mad_weights(data0)
        values = data0.matrix.copy()
        model = train(data0, config.train, prior_version=0, trained_at=0)
        rng_sim = np.random.default_rng([config.seed, 1])
        rng_labels = np.random.default_rng([config.seed, 2])

        pending_implementations: dict[int, list[int]] = {}
        pending_resolutions: dict[int, list[int]] = {}

        for t in range(config.steps):
            for event in config.drift_events:
                if event.at_step == t:
                    scorer = apply_drift(scorer, event)

            # Retraining: fresh labels from the current ground truth over the
            # current population, plus every outstanding scenario when
            # augmentation is on.
            if t > 0 and t % config.retrain_every == 0:
                instances = [Instance(i, values[i].copy(), observed_at=t) for i in range(len(values))]
                p_true = scorer.positive_probability(values)
                train_labels = (rng_labels.random(len(values)) < p_true).astype(int)
                holdout_labels = (rng_labels.random(len(values)) < p_true).astype(int)
                data_now = LabeledDataset(schema, instances, train_labels)
                holdout = LabeledDataset(schema, instances, holdout_labels)
                live = ledger.outstanding_commitments(now=t)
                scenarios = [
                    (c.counterfactual.point, c.counterfactual.target_outcome) for c in live
                ]
                probabilities = [c.counterfactual.implementation_probability for c in live]
                augmented, _ = retraining.augment(
                    data_now,
                    LabeledDataset(schema, [], []),
                    scenarios if config.augmentation_enabled else [],
                )
                model, _ = retraining.retrain_and_select(
                    [config.train],
                    base_version=model.version_id,
                    augmented=augmented,
                    holdout=holdout,
                    scenarios=scenarios,
                    probabilities=probabilities,
                    tau=config.tau,
                    alpha=config.alpha,
                    trained_at=t,
                )

            # Resolutions due this step form one cohort for fraction policies.
            step_res = {"total": 0, "honored": 0, "broken": 0, "void": 0}
            step_uce = 0
            step_paradigmatic = 0
            due = pending_resolutions.pop(t, [])
            cohort = tuple(
                (cid, certainty_of(model, ledger.get(cid).counterfactual.point,
                                   ledger.get(cid).counterfactual.target_outcome))
                for cid in due
            )
            certainties = dict(cohort)
            for cid in due:
                commitment = ledger.get(cid)
                assessment = Assessment(
                    certainty=certainties[cid],
                    rank_context=cohort if needs_cohort else None,
                    running_loss=override_cost,
                )
                coverage = evaluate(config.policy, commitment, series, t, assessment)
                resolved = ledger.resolve(cid, model, coverage, t)
                cf = resolved.counterfactual
                triple, case = chronicle.detect(
                    resolved, cf.model_version_at_issue, model, y0=1 - cf.target_outcome
                )
                step_res["total"] += 1
                if resolved.status is CommitmentStatus.HONORED:
                    step_res["honored"] += 1
                elif resolved.status is CommitmentStatus.BROKEN:
                    step_res["broken"] += 1
                else:
                    step_res["void"] += 1
                    void_reasons[resolved.resolution_reason] = (
                        void_reasons.get(resolved.resolution_reason, 0) + 1
                    )
                if resolved.status is not CommitmentStatus.VOID:
                    honoring_evals += 1
                    if certainties[cid] >= config.tau:
                        honoring_hits += 1
                if resolved.resolution_reason == "policy_override":
                    totals["total_overrides"] += 1
                    override_cost += config.override_unit_cost
                if case.is_uce:
                    step_uce += 1
                if case.is_paradigmatic:
                    step_paradigmatic += 1
                resolutions_out.append(
                    ResolutionRecord(
                        commitment_id=cid,
                        t0=resolved.issued_at,
                        t1=resolved.implemented_at,
                        t2=t,
                        status=resolved.status.value,
                        case_number=case.case_number,
                        case_name=case.name,
                        certainty=certainties[cid],
                        covered=coverage.outcome.value,
                        reason=resolved.resolution_reason,
                    )
                )

            # Outstanding commitments beyond the policy horizon lapse.
            step_expired = 0
            if config.policy.expiry_horizon is not None:
                for commitment in ledger.outstanding_commitments(now=t):
                    if (
                        commitment.status is CommitmentStatus.OUTSTANDING
                        and t - commitment.issued_at > config.policy.expiry_horizon
                    ):
                        ledger.expire(commitment.commitment_id, t, "horizon_elapsed")
                        step_expired += 1

            # Scheduled implementations: the subject's point becomes the scenario.
            step_impl = 0
            for cid in pending_implementations.pop(t, []):
                commitment = ledger.get(cid)
                if commitment.status is not CommitmentStatus.OUTSTANDING:
                    continue
                ledger.mark_implemented(cid, t)
                cf = commitment.counterfactual
                values[cf.subject_id] = cf.point.copy()
                pending_resolutions.setdefault(t + 1, []).append(cid)
                step_impl += 1

            # Applications, denials, explanation requests.
            applicants = np.flatnonzero(rng_sim.random(config.population) < config.application_rate)
            step_apps = int(applicants.size)
            step_denials = 0
            step_issued = 0
            step_not_found = 0
            if step_apps:
                app_scores = scores(model, values[applicants])
                for i, subject in enumerate(applicants):
                    if app_scores[i] >= 0.5:
                        continue
                    step_denials += 1
                    if rng_sim.random() >= config.explanation_request_rate:
                        continue
                    subject = int(subject)
                    if any(
                        not c.is_terminal
                        for c in ledger.commitments
                        if c.counterfactual.subject_id == subject
                    ):
                        continue
                    if ledger.has_issued(subject, model.version_id):
                        continue
                    cf = generate(
                        model,
                        Instance(subject, values[subject].copy(), observed_at=t),
                        1,
                        schema,
                        weights,
                        config.search,
                        probability_scale=config.implementation_probability_scale,
                    )
                    if cf is None:
                        step_not_found += 1
                        continue
                    commitment = ledger.issue(cf, config.policy.policy_id, now=t)
                    step_issued += 1
                    will_implement = rng_sim.random() < cf.implementation_probability
                    delay = int(
                        rng_sim.integers(
                            config.implementation_delay[0],
                            config.implementation_delay[1] + 1,
                        )
                    )
                    if will_implement:
                        pending_implementations.setdefault(t + delay, []).append(
                            commitment.commitment_id
                        )

            final_accuracy = float(
                np.mean((scores(model, values) >= 0.5).astype(int) == scorer.expected_label(values))
            )
            model_version = model.version_id

            totals["applications"] += step_apps
            totals["denials"] += step_denials
            totals["explanations_issued"] += step_issued
            totals["explanations_not_found"] += step_not_found
            totals["implementations"] += step_impl
            totals["resolutions_total"] += step_res["total"]
            totals["honored"] += step_res["honored"]
            totals["broken"] += step_res["broken"]
            totals["void"] += step_res["void"]
            totals["expired"] += step_expired
            totals["total_uces"] += step_uce
            totals["total_paradigmatic"] += step_paradigmatic

            steps_out.append(
                StepMetrics(
                    step=t,
                    applications=step_apps,
                    denials=step_denials,
                    explanations_issued=step_issued,
                    explanations_not_found=step_not_found,
                    implementations=step_impl,
                    resolutions_total=step_res["total"],
                    resolved_honored=step_res["honored"],
                    resolved_broken=step_res["broken"],
                    resolved_void=step_res["void"],
                    expired=step_expired,
                    uce_count=step_uce,
                    paradigmatic_count=step_paradigmatic,
                    honoring_rate_running=(
                        honoring_hits / honoring_evals if honoring_evals else 1.0
                    ),
                    override_cost_running=override_cost,
                    model_accuracy_vs_ground_truth=final_accuracy,
                    regime=regime_at(series, t).value,
                )
            )

    outstanding_at_end = sum(
        1 for c in ledger.commitments if c.status is CommitmentStatus.OUTSTANDING
    )
    implemented_unresolved = sum(
        1 for c in ledger.commitments if c.status is CommitmentStatus.IMPLEMENTED
    )
    summary = SimSummary(
        steps=config.steps,
        outstanding_at_end=outstanding_at_end,
        implemented_unresolved_at_end=implemented_unresolved,
        override_cost=override_cost,
        final_honoring_rate=(honoring_hits / honoring_evals if honoring_evals else 1.0),
        honoring_evaluations=honoring_evals,
        final_accuracy=final_accuracy,
        final_model_version=model_version,
        void_reasons=dict(sorted(void_reasons.items())),
        **totals,
    )
    return SimReport(
        config=config,
        steps=steps_out,
        summary=summary,
        resolutions=resolutions_out,
        ledger=ledger,
    )


# ---------------------------------------------------------------------------
# Paired comparison: augmentation on vs off across seeds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunRecord:
    seed: int
    augmentation_enabled: bool
    final_honoring_rate: float
    total_uces: int
    final_accuracy: float
    override_cost: float


@dataclass(frozen=True)
class PairedDiff:
    """Augmented minus unaugmented, same seed."""

    seed: int
    honoring_rate_diff: float
    uce_diff: int
    accuracy_diff: float
    override_cost_diff: float


@dataclass
class ComparisonReport:
    records: list[RunRecord]
    diffs: list[PairedDiff]
    mean_honoring_rate_augmented: float
    mean_honoring_rate_unaugmented: float
    mean_uce_augmented: float
    mean_uce_unaugmented: float
    honoring_improved_seeds: int
    uce_reduced_seeds: int


def compare(config: SimConfig, seeds: list[int]) -> ComparisonReport:
    """Run each seed with augmentation on and off (all else identical) and
    report the paired differences."""
    if len(seeds) < 2:
        raise ValueError("compare needs at least two seeds")
    records: list[RunRecord] = []
    diffs: list[PairedDiff] = []
    for seed in seeds:
        pair = {}
        for augmented in (True, False):
            report = run(replace(config, seed=seed, augmentation_enabled=augmented))
            s = report.summary
            record = RunRecord(
                seed=seed,
                augmentation_enabled=augmented,
                final_honoring_rate=s.final_honoring_rate,
                total_uces=s.total_uces,
                final_accuracy=s.final_accuracy,
                override_cost=s.override_cost,
            )
            records.append(record)
            pair[augmented] = record
        diffs.append(
            PairedDiff(
                seed=seed,
                honoring_rate_diff=pair[True].final_honoring_rate - pair[False].final_honoring_rate,
                uce_diff=pair[True].total_uces - pair[False].total_uces,
                accuracy_diff=pair[True].final_accuracy - pair[False].final_accuracy,
                override_cost_diff=pair[True].override_cost - pair[False].override_cost,
            )
        )
    aug = [r for r in records if r.augmentation_enabled]
    unaug = [r for r in records if not r.augmentation_enabled]
    return ComparisonReport(
        records=records,
        diffs=diffs,
        mean_honoring_rate_augmented=float(np.mean([r.final_honoring_rate for r in aug])),
        mean_honoring_rate_unaugmented=float(np.mean([r.final_honoring_rate for r in unaug])),
        mean_uce_augmented=float(np.mean([r.total_uces for r in aug])),
        mean_uce_unaugmented=float(np.mean([r.total_uces for r in unaug])),
        honoring_improved_seeds=sum(1 for d in diffs if d.honoring_rate_diff > 0),
        uce_reduced_seeds=sum(1 for d in diffs if d.uce_diff < 0),
    )


# ---------------------------------------------------------------------------
# Reference scenario and serialization
# ---------------------------------------------------------------------------


def reference_scenario(augmentation_enabled: bool = False, seed: int = 20240101) -> SimConfig:
    """The pinned desk-scale scenario: 500 subjects, 60 steps, an economic
    downturn at step 30, retraining every 10 steps, unconditional honoring."""
    return SimConfig(
        steps=60,
        population=500,
        application_rate=0.05,
        explanation_request_rate=0.8,
        implementation_delay=(2, 8),
        implementation_probability_scale=4.0,
        drift_events=(DriftEvent(at_step=30, intercept_shift=-2.0),),
        retrain_every=10,
        augmentation_enabled=augmentation_enabled,
        policy=CommitmentPolicy(policy_id="unconditional", kind=PolicyKind.UNCONDITIONAL),
        search=SearchConfig(
            lambda_max=10.0,
            lambda_decay=0.7,
            restarts=1,
            step_size=0.25,
            max_iters_per_lambda=60,
            convergence_tol=1e-6,
            rng_seed=11,
        ),
        train=TrainConfig(
            learning_rate=0.5, epochs=300, l2_penalty=1e-4, init_seed=3, standardize=True
        ),
        tau=0.5,
        alpha=0.5,
        seed=seed,
    )


def metrics_csv_text(report: SimReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([name for name in StepMetrics.__dataclass_fields__])
    for m in report.steps:
        writer.writerow([getattr(m, name) for name in StepMetrics.__dataclass_fields__])
    return buf.getvalue()


def resolutions_csv_text(report: SimReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([name for name in ResolutionRecord.__dataclass_fields__])
    for r in report.resolutions:
        writer.writerow([getattr(r, name) for name in ResolutionRecord.__dataclass_fields__])
    return buf.getvalue()


def summary_json_text(report: SimReport) -> str:
    doc = {
        name: getattr(report.summary, name)
        for name in SimSummary.__dataclass_fields__
    }
    return json.dumps(doc, indent=2) + "\n"


def comparison_json_text(comparison: ComparisonReport) -> str:
    doc = {
        "records": [
            {
                "seed": r.seed,
                "augmentation_enabled": r.augmentation_enabled,
                "final_honoring_rate": r.final_honoring_rate,
                "total_uces": r.total_uces,
                "final_accuracy": r.final_accuracy,
                "override_cost": r.override_cost,
            }
            for r in comparison.records
        ],
        "diffs": [
            {
                "seed": d.seed,
                "honoring_rate_diff": d.honoring_rate_diff,
                "uce_diff": d.uce_diff,
                "accuracy_diff": d.accuracy_diff,
                "override_cost_diff": d.override_cost_diff,
            }
            for d in comparison.diffs
        ],
        "mean_honoring_rate_augmented": comparison.mean_honoring_rate_augmented,
        "mean_honoring_rate_unaugmented": comparison.mean_honoring_rate_unaugmented,
        "mean_uce_augmented": comparison.mean_uce_augmented,
        "mean_uce_unaugmented": comparison.mean_uce_unaugmented,
        "honoring_improved_seeds": comparison.honoring_improved_seeds,
        "uce_reduced_seeds": comparison.uce_reduced_seeds,
    }
    return json.dumps(doc, indent=2) + "\n"


def sim_config_to_dict(config: SimConfig) -> dict:
    return {
        "steps": config.steps,
        "population": config.population,
        "application_rate": config.application_rate,
        "explanation_request_rate": config.explanation_request_rate,
        "implementation_delay": list(config.implementation_delay),
        "implementation_probability_scale": config.implementation_probability_scale,
        "drift_events": [
            {
                "at_step": e.at_step,
                "intercept_shift": e.intercept_shift,
                "coefficient_shifts": list(e.coefficient_shifts),
            }
            for e in config.drift_events
        ],
        "retrain_every": config.retrain_every,
        "augmentation_enabled": config.augmentation_enabled,
        "policy": policy_to_dict(config.policy),
        "search": {
            "lambda_max": config.search.lambda_max,
            "lambda_decay": config.search.lambda_decay,
            "restarts": config.search.restarts,
            "step_size": config.search.step_size,
            "max_iters_per_lambda": config.search.max_iters_per_lambda,
            "convergence_tol": config.search.convergence_tol,
            "rng_seed": config.search.rng_seed,
        },
        "train": {
            "learning_rate": config.train.learning_rate,
            "epochs": config.train.epochs,
            "l2_penalty": config.train.l2_penalty,
            "init_seed": config.train.init_seed,
        },
        "tau": config.tau,
        "alpha": config.alpha,
        "seed": config.seed,
        "override_unit_cost": config.override_unit_cost,
        "stress_threshold": config.stress_threshold,
        "crisis_threshold": config.crisis_threshold,
    }


def sim_config_from_dict(doc: dict) -> SimConfig:
    return SimConfig(
        steps=int(doc["steps"]),
        population=int(doc["population"]),
        application_rate=float(doc["application_rate"]),
        explanation_request_rate=float(doc["explanation_request_rate"]),
        implementation_delay=tuple(int(v) for v in doc["implementation_delay"]),
        implementation_probability_scale=float(doc["implementation_probability_scale"]),
        drift_events=tuple(
            DriftEvent(
                at_step=int(e["at_step"]),
                intercept_shift=float(e["intercept_shift"]),
                coefficient_shifts=tuple(float(v) for v in e.get("coefficient_shifts", ())),
            )
            for e in doc.get("drift_events", ())
        ),
        retrain_every=int(doc["retrain_every"]),
        augmentation_enabled=bool(doc["augmentation_enabled"]),
        policy=policy_from_dict(doc["policy"]),
        search=SearchConfig(**doc.get("search", {})),
        train=TrainConfig(**doc.get("train", {})),
        tau=float(doc.get("tau", 0.5)),
        alpha=float(doc.get("alpha", 0.5)),
        seed=int(doc.get("seed", 0)),
        override_unit_cost=float(doc.get("override_unit_cost", 1.0)),
        stress_threshold=float(doc.get("stress_threshold", 0.5)),
        crisis_threshold=float(doc.get("crisis_threshold", -0.5)),
    )
