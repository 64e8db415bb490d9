"""Deterministic report bundles from a directory of module outputs.

Scans a run directory for the JSON artifacts the pipeline commands write
(discovery ledgers, inconsistency reports, removal experiments,
incremental plans, odds-ratio records) and renders plot-ready CSVs plus a
Markdown summary. Data only; no image rendering.
"""

from __future__ import annotations

from pathlib import Path

from .bias import load_or_records, or_table_csv
from .discovery import histogram_csv, load_ledger, summarize_flags
from .inconsistency import load_report, summarize_reports
from .verification import (
    incremental_curves_csv,
    load_incremental_plans,
    load_removal_experiment,
)

ARTIFACT_GLOBS = (
    "ledger_*.json",
    "inconsistency_*.json",
    "removal_*.json",
    "incremental_*.json",
    "bias_*.json",
)


class ReportError(ValueError):
    """Run directory lacks the artifacts a report needs."""


def _removal_table_csv(exp) -> str:
    lines = ["arm," + ",".join(f"seed_{i + 1}" for i in range(len(exp.seeds))) + ",mean"]
    for arm in ("original", "random_dropped", "flags_removed"):
        values = exp.arms[arm]
        lines.append(f"{arm}," + ",".join(f"{v:.4f}" for v in values) + f",{exp.mean(arm):.4f}")
    return "\n".join(lines) + "\n"


def build_report(run_dir: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """Render every recognized artifact; returns the written paths."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise ReportError(f"run directory not found: {run_dir}")
    out_dir = Path(out_dir) if out_dir else run_dir / "report"
    found = {pattern: sorted(run_dir.glob(pattern)) for pattern in ARTIFACT_GLOBS}
    if not any(found.values()):
        raise ReportError(
            "no reportable artifacts in "
            f"{run_dir}; expected any of: {', '.join(ARTIFACT_GLOBS)}"
        )
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    sections: list[str] = ["# labelaudit report", ""]

    def emit(path: Path, text: str) -> None:
        path.write_text(text, encoding="utf-8")
        written.append(path)

    inconsistency_reports = []
    for path in found["inconsistency_*.json"]:
        report = load_report(path)
        inconsistency_reports.append(report)
        sections.append(
            f"## Inconsistency: {report.target_source} / {report.variable}\n\n"
            f"- delta F1 on target test: {report.delta_f1_target:+.4f}\n"
            f"- delta F1 on others test: {report.delta_f1_others:+.4f}\n"
            f"- grid: m={report.m} subsets x n={report.n} seeds\n"
        )
    if inconsistency_reports:
        summary = summarize_reports(inconsistency_reports)
        sections.append(f"**Across sources:** {summary['summary']}\n")
        rows = ["target_source,variable,delta_f1_target,delta_f1_others"]
        for r in inconsistency_reports:
            rows.append(f"{r.target_source},{r.variable},{r.delta_f1_target},{r.delta_f1_others}")
        emit(out_dir / "inconsistency_deltas.csv", "\n".join(rows) + "\n")

    for path in found["ledger_*.json"]:
        ledger = load_ledger(path)
        stats = summarize_flags(ledger)
        emit(out_dir / f"histogram_{path.stem.removeprefix('ledger_')}.csv", histogram_csv(ledger))
        sections.append(
            f"## Discovery: {ledger.target_source} / {ledger.variable}\n\n"
            f"- {stats['flagged']} flags out of {stats['total']} annotations "
            f"({stats['percent']}%)\n"
            f"- threshold {ledger.config.threshold} of {ledger.config.repetitions} repetitions\n"
        )

    for path in found["removal_*.json"]:
        exp = load_removal_experiment(path)
        emit(out_dir / f"removal_table_{path.stem.removeprefix('removal_')}.csv", _removal_table_csv(exp))
        sections.append(
            f"## Removal experiment: {exp.target_source} / {exp.variable}\n\n"
            f"- original {exp.mean('original'):.4f} -> flags removed "
            f"{exp.mean('flags_removed'):.4f} (random drop {exp.mean('random_dropped'):.4f})\n"
            f"- Welch p (flags vs original): {exp.t_test_flags_vs_original.p_value:.4f}\n"
            f"- Welch p (flags vs random): {exp.t_test_flags_vs_random.p_value:.4f}\n"
        )

    for path in found["incremental_*.json"]:
        plans = load_incremental_plans(path)
        emit(
            out_dir / f"curves_{path.stem.removeprefix('incremental_')}.csv",
            incremental_curves_csv(plans),
        )
        finals = {kind: plan.final_point() for kind, plan in sorted(plans.items())}
        lines = [f"## Incremental curves: {path.stem.removeprefix('incremental_')}", ""]
        for kind, point in finals.items():
            lines.append(
                f"- {kind}: final target F1 {point.f1_target:.4f}, "
                f"others F1 {point.f1_others:.4f}"
            )
        sections.append("\n".join(lines) + "\n")

    for path in found["bias_*.json"]:
        records = load_or_records(path)
        emit(out_dir / f"or_table_{path.stem.removeprefix('bias_')}.csv", or_table_csv(records))
        lines = [f"## Odds ratios: {path.stem.removeprefix('bias_')}", ""]
        for r in records:
            lines.append(
                f"- {r.annotation_variant} / {r.group}: OR {r.or_value:.2f} "
                f"[{r.ci_low:.2f}; {r.ci_high:.2f}]"
            )
        sections.append("\n".join(lines) + "\n")

    emit(out_dir / "report.md", "\n".join(sections))
    return written
