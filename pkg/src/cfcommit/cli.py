"""Command-line workflows: gen-data, train, explain, simulate, compare, report.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 search or
training failure (no counterfactual found, degenerate training). Outputs are
written atomically (temp file, then rename) and every command that writes
outputs drops a run manifest beside them recording inputs, digest, seed, and
artifacts. Set CFCOMMIT_VERBOSE=1 for progress lines on stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .ledger import LedgerError, load_event_log, replay
from .model import (
    DegenerateTrainingError,
    ModelFileError,
    TrainConfig,
    load_model,
    save_model,
    train,
)
from .policy import PolicyError
from .population import (
    DatasetError,
    LabeledDataset,
    default_scorer_for,
    generate_population,
    load_dataset,
    save_dataset,
)
from .retraining import augment, honoring_report, per_sample_weights
from .schema import SchemaError, load_schema
from .search import SearchConfig, counterfactual_to_dict, generate, mad_weights
from .sim import (
    compare,
    comparison_json_text,
    metrics_csv_text,
    resolutions_csv_text,
    run,
    sim_config_from_dict,
    summary_json_text,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SEARCH = 3

_DATA_ERRORS = (SchemaError, DatasetError, ModelFileError, PolicyError, LedgerError)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _verbose() -> bool:
    return os.environ.get("CFCOMMIT_VERBOSE", "") not in ("", "0")


def _info(message: str) -> None:
    if _verbose():
        print(message, file=sys.stderr)


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(
    beside: Path, command: str, config_path: Path | None, seed: int | None, artifacts: list[Path]
) -> None:
    manifest = {
        "command": command,
        "config_digest": _digest(config_path) if config_path else None,
        "seed": seed,
        "artifacts": [str(p) for p in artifacts],
        "tool_version": __version__,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    if beside.is_dir():
        target = beside / "manifest.json"
    else:
        target = beside.with_name(beside.name + ".manifest.json")
    _atomic_write(target, json.dumps(manifest, indent=2) + "\n")


def _load_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    schema = load_schema(args.schema)
    scorer = default_scorer_for(schema)
    dataset = generate_population(schema, scorer, args.n, args.seed)
    out = Path(args.out)
    save_dataset(dataset, out.with_name(out.name + ".tmp"))
    os.replace(out.with_name(out.name + ".tmp"), out)
    _info(f"wrote {len(dataset)} rows to {out}")
    _write_manifest(out, "gen-data", Path(args.schema), args.seed, [out])
    return EXIT_OK


def _train_config_from(args) -> TrainConfig:
    doc = _load_json(Path(args.config)) if args.config else {}
    fields = {
        "learning_rate": doc.get("learning_rate", 0.5),
        "epochs": doc.get("epochs", 300),
        "l2_penalty": doc.get("l2_penalty", 0.0),
        "init_seed": doc.get("init_seed", 0),
        "standardize": doc.get("standardize", False),
    }
    if args.learning_rate is not None:
        fields["learning_rate"] = args.learning_rate
    if args.epochs is not None:
        fields["epochs"] = args.epochs
    return TrainConfig(**fields)


def cmd_train(args) -> int:
    schema = load_schema(args.schema)
    dataset = load_dataset(args.data, schema)
    config = _train_config_from(args)
    out = Path(args.out)
    artifacts = [out]
    if args.augment:
        ledger = replay(load_event_log(args.augment))
        live = ledger.outstanding_commitments()
        scenarios = [(c.counterfactual.point, c.counterfactual.target_outcome) for c in live]
        probabilities = [c.counterfactual.implementation_probability for c in live]
        augmented, aug_report = augment(dataset, LabeledDataset(schema, [], []), scenarios)
        weighted = TrainConfig(
            learning_rate=config.learning_rate,
            epochs=config.epochs,
            l2_penalty=config.l2_penalty,
            init_seed=config.init_seed,
            standardize=config.standardize,
            sample_weights=tuple(float(v) for v in per_sample_weights(augmented)),
        )
        model = train(augmented, weighted, prior_version=args.prior_version)
        report = honoring_report(model, scenarios, probabilities, tau=args.tau)
        aug_path = out.with_name(out.stem + ".augmentation.json")
        honor_path = out.with_name(out.stem + ".honoring.json")
        _atomic_write(
            aug_path,
            json.dumps(
                {
                    "base_size": aug_report.base_size,
                    "new_size": aug_report.new_size,
                    "scenario_count": aug_report.scenario_count,
                    "class_counts_before": list(aug_report.class_counts_before),
                    "class_counts_after": list(aug_report.class_counts_after),
                    "imbalance_delta": aug_report.imbalance_delta,
                },
                indent=2,
            )
            + "\n",
        )
        _atomic_write(
            honor_path,
            json.dumps(
                {
                    "threshold": report.threshold,
                    "honoring_rate": report.honoring_rate,
                    "weighted_honoring_rate": report.weighted_honoring_rate,
                    "empty_ledger": report.empty_ledger,
                    "certainties": [[cid, cert] for cid, cert in report.certainties],
                },
                indent=2,
            )
            + "\n",
        )
        artifacts += [aug_path, honor_path]
    else:
        model = train(dataset, config, prior_version=args.prior_version)
    save_model(model, out.with_name(out.name + ".tmp"))
    os.replace(out.with_name(out.name + ".tmp"), out)
    _info(f"trained model version {model.version_id} -> {out}")
    _write_manifest(
        out, "train", Path(args.config) if args.config else None, config.init_seed, artifacts
    )
    return EXIT_OK


def _search_config_from(args) -> SearchConfig:
    doc = _load_json(Path(args.search)) if args.search else {}
    return SearchConfig(**doc)


def cmd_explain(args) -> int:
    schema = load_schema(args.schema)
    dataset = load_dataset(args.data, schema)
    model = load_model(args.model)
    if not 0 <= args.subject < len(dataset):
        raise DatasetError(f"subject {args.subject} outside dataset of {len(dataset)} rows")
    weights = mad_weights(dataset)
    config = _search_config_from(args)
    cf = generate(
        model,
        dataset.instances[args.subject],
        args.target,
        schema,
        weights,
        config,
        probability_scale=args.probability_scale,
    )
    if cf is None:
        print(
            f"no feasible counterfactual for subject {args.subject} under the declared constraints",
            file=sys.stderr,
        )
        return EXIT_SEARCH
    out = Path(args.out)
    _atomic_write(out, json.dumps(counterfactual_to_dict(cf), indent=2) + "\n")
    _info(f"counterfactual for subject {args.subject} -> {out}")
    _write_manifest(
        out, "explain", Path(args.search) if args.search else None, config.rng_seed, [out]
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = sim_config_from_dict(_load_json(Path(args.config)))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _info(f"running {config.steps} steps over {config.population} subjects")
    report = run(config)
    metrics = out_dir / "metrics.csv"
    summary = out_dir / "summary.json"
    resolutions = out_dir / "resolutions.csv"
    ledger_path = out_dir / "ledger.jsonl"
    _atomic_write(metrics, metrics_csv_text(report))
    _atomic_write(summary, summary_json_text(report))
    _atomic_write(resolutions, resolutions_csv_text(report))
    _atomic_write(
        ledger_path, "".join(json.dumps(e) + "\n" for e in report.ledger.events)
    )
    _write_manifest(
        out_dir,
        "simulate",
        Path(args.config),
        config.seed,
        [metrics, summary, resolutions, ledger_path],
    )
    return EXIT_OK


def cmd_compare(args) -> int:
    config = sim_config_from_dict(_load_json(Path(args.config)))
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip() != ""]
    except ValueError as exc:
        raise _UsageError(f"--seeds must be a comma-separated integer list: {exc}") from exc
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    comparison = compare(config, seeds)
    out = out_dir / "comparison.json"
    _atomic_write(out, comparison_json_text(comparison))
    _write_manifest(out_dir, "compare", Path(args.config), config.seed, [out])
    return EXIT_OK


def cmd_report(args) -> int:
    metrics_path = Path(args.metrics)
    try:
        with open(metrics_path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DatasetError(f"{metrics_path}: {exc}") from exc
    from .charts import charts_for_metrics

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = []
    for family, svg in charts_for_metrics(rows).items():
        path = out_dir / f"{family}.svg"
        _atomic_write(path, svg)
        artifacts.append(path)
    _info(f"wrote {len(artifacts)} charts to {out_dir}")
    _write_manifest(out_dir, "report", None, None, artifacts)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="cfcommit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic labeled population")
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a scoring model, optionally ledger-augmented")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--config", default=None, help="train config JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--augment", default=None, help="ledger event log (JSON Lines)")
    p.add_argument("--prior-version", type=int, default=0)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explain", help="generate a counterfactual for one subject")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--subject", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target", type=int, default=1, choices=(0, 1))
    p.add_argument("--search", default=None, help="search config JSON")
    p.add_argument("--probability-scale", type=float, default=1.0)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("simulate", help="run the timeline simulator")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="paired augmentation-on/off runs across seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", required=True, help="comma-separated seed list")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="emit SVG charts from a metrics CSV")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DegenerateTrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_SEARCH
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
