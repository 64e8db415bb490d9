"""Command-line surface for the audit pipeline.

Subcommands: ingest, synth, inconsistency, discover, verify-removal,
verify-incremental, bias, review-serve, report. Configuration lives in a
single JSON file (--config); a handful of common flags override config
fields, and the effective configuration is echoed into the RunManifest
written next to each command's outputs.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Mapping, Sequence

from . import __version__
from ._parallel import JOBS_ENV_VAR
from .bias import (
    BiasError,
    build_annotation_variants,
    or_table_csv,
    run_bias_analysis,
    save_or_records,
)
from .classifier import ClassifierError, EncoderConfig, TrainConfig
from .corpus import CorpusError, balance, exclude_sparse_sources, ingest, write_corpus_jsonl
from .discovery import (
    DiscoveryConfig,
    DiscoveryError,
    histogram_csv,
    load_ledger,
    run_discovery,
    save_ledger,
    summarize_flags,
)
from .inconsistency import run_state_inconsistency, save_report, summarize_reports
from .manifest import ManifestWriter
from .metrics import MetricError
from .report import ReportError, build_report
from .seeding import derive_seed
from .synth import (
    DemographicSpec,
    NoisePlan,
    SynthError,
    SynthSpec,
    VocabSpec,
    default_vocab,
    generate,
    save_noise_ledger,
)
from .verification import (
    Adjudication,
    CorrectedView,
    VerificationError,
    apply_corrections,
    incremental_curves_csv,
    run_incremental,
    run_removal_experiment,
    save_incremental_plans,
    save_removal_experiment,
)

PORT_ENV_VAR = "LABELAUDIT_PORT"

DATA_ERRORS = (
    CorpusError,
    ClassifierError,
    DiscoveryError,
    VerificationError,
    BiasError,
    SynthError,
    MetricError,
    ReportError,
    FileNotFoundError,
    KeyError,
    json.JSONDecodeError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage problems, not argparse's 2
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


# ---------------------------------------------------------------------------
# Config plumbing


def require_config(args: argparse.Namespace, *alternatives: str) -> None:
    """Data commands need --config or an equivalent override flag."""
    if args.config or any(getattr(args, alt, None) for alt in alternatives):
        return
    flags = " or ".join(["--config"] + [f"--{a.replace('_', '-')}" for a in alternatives])
    raise UsageError(
        f"usage: labelaudit {args.command} --config CONFIG.json [flags]\n"
        f"labelaudit {args.command}: missing {flags}"
    )


def load_config(args: argparse.Namespace) -> dict:
    config: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        config = json.loads(path.read_text(encoding="utf-8"))
    for key in ("corpus", "variable", "target_source", "seed", "jobs", "min_positives"):
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    if config.get("jobs") is None and os.environ.get(JOBS_ENV_VAR):
        config["jobs"] = int(os.environ[JOBS_ENV_VAR])
    config.setdefault("seed", 0)
    config.setdefault("jobs", 1)
    config.setdefault("min_positives", 10)
    return config


def encoder_from(config: Mapping) -> EncoderConfig:
    return EncoderConfig.from_dict(config.get("encoder") or {})


def train_from(config: Mapping) -> TrainConfig:
    return TrainConfig.from_dict(config.get("train") or {})


def synth_spec_from(config: Mapping) -> SynthSpec:
    raw = dict(config.get("synth") or {})
    if "vocab" in raw:
        v = raw["vocab"]
        if set(v) <= {"n_core", "n_ambiguous", "n_filler"}:
            raw["vocab"] = default_vocab(**v)
        else:
            raw["vocab"] = VocabSpec(
                positive=tuple(v["positive"]),
                negative=tuple(v["negative"]),
                ambiguous_positive=tuple(v["ambiguous_positive"]),
                ambiguous_negative=tuple(v["ambiguous_negative"]),
                filler=tuple(v["filler"]),
            )
    if "noise_plan" in raw:
        plans = {}
        for source, plan in raw["noise_plan"].items():
            plan = dict(plan)
            if plan.get("demographic"):
                plan["demographic"] = tuple(plan["demographic"])
            plans[source] = NoisePlan(**plan)
        raw["noise_plan"] = plans
    if "demographics" in raw:
        raw["demographics"] = DemographicSpec(**raw["demographics"])
    raw.setdefault("seed", config.get("seed", 0))
    return SynthSpec(**raw)


def _load_corpus(config: Mapping):
    path = config.get("corpus")
    if not path:
        raise CorpusError("config needs a 'corpus' path")
    return ingest(path, config.get("format", "jsonl")), Path(path)


def _require(config: Mapping, key: str) -> object:
    value = config.get(key)
    if value in (None, ""):
        raise CorpusError(f"config needs {key!r}")
    return value


def _slug(*parts: object) -> str:
    return "_".join(str(p).replace("/", "-").replace(" ", "-") for p in parts)


# ---------------------------------------------------------------------------
# Commands


def cmd_ingest(args) -> int:
    require_config(args, "input", "corpus")
    config = load_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = ManifestWriter("ingest", config, out_dir)
    src = Path(args.input or _require(config, "corpus"))
    corpus = ingest(src, args.format or config.get("format", "jsonl"))
    writer.add_input(src)
    corpus_path = out_dir / "corpus.validated.jsonl"
    write_corpus_jsonl(corpus, corpus_path)
    report_path = out_dir / "ingest_report.json"
    report_path.write_text(
        json.dumps(
            {
                "accepted": len(corpus),
                "rejected": [
                    {"line": r.line, "reason": r.reason} for r in corpus.rejected
                ],
                "sources": corpus.sources(),
                "variables": corpus.variables(),
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    writer.add_output(corpus_path)
    writer.add_output(report_path)
    writer.write()
    print(f"ingested {len(corpus)} incidents ({len(corpus.rejected)} rejected) -> {corpus_path}")
    return 0


def cmd_synth(args) -> int:
    require_config(args)
    config = load_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = ManifestWriter("synth", config, out_dir)
    spec = synth_spec_from(config)
    corpus, ledger = generate(spec)
    corpus_path = out_dir / "corpus.jsonl"
    ledger_path = out_dir / "noise_ledger.json"
    write_corpus_jsonl(corpus, corpus_path)
    save_noise_ledger(ledger, ledger_path)
    writer.add_seeds([spec.seed])
    writer.add_output(corpus_path)
    writer.add_output(ledger_path)
    writer.write()
    print(
        f"generated {len(corpus)} incidents across {spec.sources} sources "
        f"({len(ledger.flipped_ids)} flipped) -> {corpus_path}"
    )
    return 0


def cmd_inconsistency(args) -> int:
    require_config(args, "corpus")
    config = load_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = ManifestWriter("inconsistency", config, out_dir)
    corpus, corpus_path = _load_corpus(config)
    writer.add_input(corpus_path)
    variable = str(_require(config, "variable"))
    params = dict(config.get("inconsistency") or {})
    m = int(params.get("m", 4))
    n = int(params.get("n", 5))
    base_seed = int(config["seed"])
    targets = config.get("target_source") or params.get("targets")
    if targets in (None, "", "all"):
        kept, _ = exclude_sparse_sources(corpus, variable, int(config["min_positives"]))
        targets = kept.sources()
    elif isinstance(targets, str):
        targets = [targets]
    reports = []
    for target in targets:
        report = run_state_inconsistency(
            corpus,
            variable,
            target,
            m,
            n,
            encoder_from(config),
            train_from(config),
            base_seed=derive_seed(base_seed, "inconsistency", target),
            min_positives=int(config["min_positives"]),
            jobs=int(config["jobs"]),
        )
        path = out_dir / f"inconsistency_{_slug(target, variable)}.json"
        save_report(report, path)
        writer.add_output(path)
        writer.add_seeds(report.seeds)
        reports.append(report)
        print(
            f"{target}/{variable}: delta_target={report.delta_f1_target:+.4f} "
            f"delta_others={report.delta_f1_others:+.4f}"
        )
    if len(reports) > 1:
        summary_path = out_dir / f"inconsistency_summary_{_slug(variable)}.json"
        summary_path.write_text(
            json.dumps(summarize_reports(reports), indent=2) + "\n", encoding="utf-8"
        )
        writer.add_output(summary_path)
        print(summarize_reports(reports)["summary"])
    writer.write()
    return 0


def cmd_discover(args) -> int:
    require_config(args, "corpus")
    config = load_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = ManifestWriter("discover", config, out_dir)
    corpus, corpus_path = _load_corpus(config)
    writer.add_input(corpus_path)
    variable = str(_require(config, "variable"))
    target = str(_require(config, "target_source"))
    params = dict(config.get("discovery") or {})
    params.setdefault("seeds", ())
    params["seeds"] = tuple(params["seeds"])
    discovery_config = DiscoveryConfig(**params)
    ledger = run_discovery(
        corpus,
        variable,
        target,
        discovery_config,
        encoder_from(config),
        train_from(config),
        base_seed=int(config["seed"]),
        min_positives=int(config["min_positives"]),
        record_all=bool(config.get("record_all", False)),
        jobs=int(config["jobs"]),
    )
    ledger_path = out_dir / f"ledger_{_slug(target, variable)}.json"
    save_ledger(ledger, ledger_path)
    hist_path = out_dir / f"histogram_{_slug(target, variable)}.csv"
    hist_path.write_text(histogram_csv(ledger), encoding="utf-8")
    writer.add_seeds(ledger.config.resolved_seeds(int(config["seed"])))
    writer.add_output(ledger_path)
    writer.add_output(hist_path)
    writer.write()
    stats = summarize_flags(ledger)
    print(
        f"{target}/{variable}: {stats['flagged']} flags of {stats['total']} "
        f"({stats['percent']}%) -> {ledger_path}"
    )
    return 0


def _load_flags_ledger(config: Mapping, section: str):
    params = dict(config.get(section) or {})
    ledger_path = params.get("ledger") or config.get("ledger")
    if not ledger_path:
        raise CorpusError(f"config needs a discovery ledger path under {section!r} or 'ledger'")
    return load_ledger(ledger_path), Path(ledger_path), params


def cmd_verify_removal(args) -> int:
    require_config(args, "corpus")
    config = load_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = ManifestWriter("verify-removal", config, out_dir)
    corpus, corpus_path = _load_corpus(config)
    writer.add_input(corpus_path)
    ledger, ledger_path, params = _load_flags_ledger(config, "removal")
    writer.add_input(ledger_path)
    experiment = run_removal_experiment(
        corpus,
        ledger.variable,
        ledger.target_source,
        ledger,
        int(params.get("n_seeds", 5)),
        encoder_from(config),
        train_from(config),
        base_seed=int(config["seed"]),
        min_positives=int(config["min_positives"]),
        jobs=int(config["jobs"]),
    )
    path = out_dir / f"removal_{_slug(ledger.target_source, ledger.variable)}.json"
    save_removal_experiment(experiment, path)
    writer.add_seeds(experiment.seeds)
    writer.add_output(path)
    writer.write()
    print(
        f"original {experiment.mean('original'):.4f} -> flags_removed "
        f"{experiment.mean('flags_removed'):.4f}, random_dropped "
        f"{experiment.mean('random_dropped'):.4f} "
        f"(p={experiment.t_test_flags_vs_original.p_value:.4f})"
    )
    return 0


def cmd_verify_incremental(args) -> int:
    require_config(args, "corpus")
    config = load_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = ManifestWriter("verify-incremental", config, out_dir)
    corpus, corpus_path = _load_corpus(config)
    writer.add_input(corpus_path)
    ledger, ledger_path, params = _load_flags_ledger(config, "incremental")
    writer.add_input(ledger_path)
    variable = ledger.variable
    view = balance(
        exclude_sparse_sources(corpus, variable, int(config["min_positives"]))[0],
        variable,
        derive_seed(int(config["seed"]), "balance"),
    )
    corrections_path = params.get("corrections")
    if corrections_path:
        raw = json.loads(Path(corrections_path).read_text(encoding="utf-8"))
        adjudications = [Adjudication.from_dict(d) for d in raw]
        writer.add_input(corrections_path)
        corrected = apply_corrections(corpus, view.ids, variable, adjudications, ledger.flags)
    else:
        corrected = CorrectedView(base_ids=tuple(view.ids), overrides={}, provenance=())
    plans = run_incremental(
        corpus,
        variable,
        ledger.target_source,
        corrected,
        int(params.get("step_size", max(1, len(view) // 10))),
        encoder_from(config),
        train_from(config),
        int(params.get("n_seeds", 5)),
        epochs_per_step=int(params.get("epochs_per_step", 3)),
        cold_start=bool(params.get("cold_start", False)) or bool(args.cold_start),
        base_seed=int(config["seed"]),
        min_positives=int(config["min_positives"]),
        jobs=int(config["jobs"]),
    )
    slug = _slug(ledger.target_source, variable)
    plans_path = out_dir / f"incremental_{slug}.json"
    save_incremental_plans(plans, plans_path)
    curves_path = out_dir / f"incremental_curves_{slug}.csv"
    curves_path.write_text(incremental_curves_csv(plans), encoding="utf-8")
    writer.add_output(plans_path)
    writer.add_output(curves_path)
    writer.write()
    for kind in sorted(plans):
        point = plans[kind].final_point()
        print(f"{kind}: final target={point.f1_target:.4f} others={point.f1_others:.4f}")
    return 0


def cmd_bias(args) -> int:
    require_config(args, "corpus")
    config = load_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = ManifestWriter("bias", config, out_dir)
    corpus, corpus_path = _load_corpus(config)
    writer.add_input(corpus_path)
    ledger, ledger_path, params = _load_flags_ledger(config, "bias")
    writer.add_input(ledger_path)
    variable = ledger.variable
    kept, _ = exclude_sparse_sources(corpus, variable, int(config["min_positives"]))
    view = balance(kept, variable, derive_seed(int(config["seed"]), "balance"))
    target_ids = [i for i in view.ids if kept[i].source == ledger.target_source]
    variants = build_annotation_variants(
        target_ids, ledger.flags, derive_seed(int(config["seed"]), "variants")
    )
    records = run_bias_analysis(
        kept,
        variable,
        variants,
        paper_literal=bool(params.get("paper_literal", False)) or bool(args.paper_literal),
    )
    slug = _slug(ledger.target_source, variable)
    records_path = out_dir / f"bias_{slug}.json"
    save_or_records(records, records_path)
    table_path = out_dir / f"or_table_{slug}.csv"
    table_path.write_text(or_table_csv(records), encoding="utf-8")
    writer.add_output(records_path)
    writer.add_output(table_path)
    writer.write()
    for r in records:
        print(
            f"{r.annotation_variant}/{r.group}: OR {r.or_value:.2f} "
            f"[{r.ci_low:.2f}; {r.ci_high:.2f}]"
        )
    return 0


def cmd_review_serve(args) -> int:
    import uvicorn

    from .review.app import create_app
    from .review.store import SessionStore

    port = args.port or int(os.environ.get(PORT_ENV_VAR, "8000"))
    store = SessionStore(Path(args.store_dir))
    app = create_app(store, static_dir=Path(args.static_dir) if args.static_dir else None)
    print(f"review service on http://{args.host}:{port} (store: {args.store_dir})")
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return 0


def cmd_report(args) -> int:
    config = load_config(args)
    out_dir = Path(args.out_dir) if args.out_dir else None
    writer_dir = out_dir or Path(args.run_dir) / "report"
    written = build_report(args.run_dir, out_dir)
    writer_dir.mkdir(parents=True, exist_ok=True)
    writer = ManifestWriter("report", config, writer_dir)
    for path in written:
        writer.add_output(path)
    writer.write()
    print(f"report bundle: {len(written)} files in {writer_dir}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> _Parser:
    parser = _Parser(prog="labelaudit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"labelaudit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--corpus", help="corpus JSONL path (overrides config)")
        p.add_argument("--variable", help="target variable (overrides config)")
        p.add_argument("--target-source", dest="target_source", help="target source tag")
        p.add_argument("--seed", type=int, help="base seed (overrides config)")
        p.add_argument("--jobs", type=int, help=f"parallel workers (or {JOBS_ENV_VAR})")
        p.add_argument("--min-positives", dest="min_positives", type=int)
        if out:
            p.add_argument("--out-dir", default="out", help="output directory")

    p = sub.add_parser("ingest", help="validate and normalize a corpus file")
    common(p)
    p.add_argument("--in", dest="input", help="input corpus file")
    p.add_argument("--format", choices=("jsonl", "csv"))
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic corpus with a noise ledger")
    common(p)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("inconsistency", help="composition-contrast delta-F1 per source")
    common(p)
    p.set_defaults(fn=cmd_inconsistency)

    p = sub.add_parser("discover", help="flag instances by repeated k-fold error counts")
    common(p)
    p.set_defaults(fn=cmd_discover)

    p = sub.add_parser("verify-removal", help="flags-removed vs random-drop retraining")
    common(p)
    p.set_defaults(fn=cmd_verify_removal)

    p = sub.add_parser("verify-incremental", help="four-composition incremental curves")
    common(p)
    p.add_argument("--cold-start", action="store_true", help="retrain from scratch each step")
    p.set_defaults(fn=cmd_verify_incremental)

    p = sub.add_parser("bias", help="odds ratios across annotation variants")
    common(p)
    p.add_argument("--paper-literal", action="store_true", help="emit the printed CI formula")
    p.set_defaults(fn=cmd_bias)

    p = sub.add_parser("review-serve", help="run the adjudication HTTP service")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, help=f"port (or {PORT_ENV_VAR}; default 8000)")
    p.add_argument("--store-dir", default="review-store", help="session log directory")
    p.add_argument("--static-dir", help="frontend assets directory (default: bundled)")
    p.set_defaults(fn=cmd_review_serve)

    p = sub.add_parser("report", help="render plot data and summaries from a run directory")
    common(p, out=False)
    p.add_argument("--run-dir", required=True, help="directory holding module outputs")
    p.add_argument("--out-dir", help="where to write the bundle (default run-dir/report)")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    try:
        return args.fn(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
