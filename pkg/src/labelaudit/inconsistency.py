"""Cross-source inconsistency via composition-contrast ΔF1.

For a target source, three same-size training compositions are trained
per (subset, seed) cell: PureOthers (two disjoint others samples),
OthersTarget, and TargetOthers. ΔF1 on each test set is the mean F1 of the
two mixed compositions minus the PureOthers F1; a positive ΔF1 on the
target test together with a negative ΔF1 on the others test evidences an
annotation regime in the target source that the other sources do not share.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from . import _parallel
from .classifier import EncoderConfig, FeatureSpace, TrainConfig, predict, train
from .corpus import (
    Corpus,
    CorpusError,
    CorpusPartition,
    build_partition,
    balance,
    exclude_sparse_sources,
    split_8_1_1,
)
from .metrics import f1_positive
from .seeding import derive_seed, rng_for

COMPOSITION_KINDS = ("PureOthers", "OthersTarget", "TargetOthers")


@dataclass(frozen=True)
class TrainingComposition:
    kind: str
    segments: tuple[tuple[str, ...], ...]
    val_ids: tuple[str, ...]
    test_target_ids: tuple[str, ...]
    test_others_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        train_and_val = set(self.ordered_train_ids) | set(self.val_ids)
        for name, test in (("target", self.test_target_ids), ("others", self.test_others_ids)):
            if set(test) & train_and_val:
                raise CorpusError(f"{name} test ids leak into training/validation")

    @property
    def ordered_train_ids(self) -> tuple[str, ...]:
        return tuple(i for seg in self.segments for i in seg)


def build_compositions(
    corpus: Corpus,
    variable: str,
    partition: CorpusPartition,
    subset_index: int,
    seed: int,
) -> dict[str, TrainingComposition]:
    """Build the three equal-size compositions for one subset and seed."""
    if not 0 <= subset_index < partition.m:
        raise CorpusError(f"subset index {subset_index} out of range (m={partition.m})")
    subset = list(partition.exclusive_subsets[subset_index])
    x = partition.x

    target_split = split_8_1_1(corpus, partition.target_set, variable, derive_seed(seed, "target"))
    subset_split = split_8_1_1(corpus, subset, variable, derive_seed(seed, "subset"))

    # the second PureOthers segment: an equal-size others sample disjoint
    # from this subset, split the same way, of which only the train part is used
    pool = [i for i in partition.other_pool if i not in set(subset)]
    if len(pool) < x:
        raise CorpusError(
            f"insufficient others data for the second PureOthers segment: "
            f"need {x}, have {len(pool)}"
        )
    rng = rng_for(seed, "second-sample", subset_index)
    chosen = rng.choice(len(pool), size=x, replace=False)
    second = [pool[i] for i in sorted(chosen.tolist())]
    second_split = split_8_1_1(corpus, second, variable, derive_seed(seed, "second"))

    # every input set has exactly x ids, so all train parts are floor(0.8 x)
    target_train = tuple(target_split.train)
    subset_train = tuple(subset_split.train)
    second_train = tuple(second_split.train)
    assert len(target_train) == len(subset_train) == len(second_train)

    mixed_val = tuple(subset_split.validation) + tuple(target_split.validation)
    pure_val = tuple(subset_split.validation) + tuple(second_split.validation)
    tests = {
        "test_target_ids": tuple(target_split.test),
        "test_others_ids": tuple(subset_split.test),
    }
    return {
        "PureOthers": TrainingComposition(
            kind="PureOthers", segments=(subset_train, second_train), val_ids=pure_val, **tests
        ),
        "OthersTarget": TrainingComposition(
            kind="OthersTarget", segments=(subset_train, target_train), val_ids=mixed_val, **tests
        ),
        "TargetOthers": TrainingComposition(
            kind="TargetOthers", segments=(target_train, subset_train), val_ids=mixed_val, **tests
        ),
    }


def delta_f1(f1_pure: float, f1_others_target: float, f1_target_others: float) -> float:
    """Mean of the two mixed-composition F1s minus the pure-others F1."""
    return (f1_others_target + f1_target_others) / 2.0 - f1_pure


# ---------------------------------------------------------------------------
# The (subset x seed x composition) grid


@dataclass(frozen=True)
class CellResult:
    subset: int
    seed_index: int
    seed: int
    kind: str
    f1_target: float
    f1_others: float


@dataclass(frozen=True)
class DeltaF1Report:
    variable: str
    target_source: str
    m: int
    n: int
    seeds: tuple[int, ...]
    cells: tuple[CellResult, ...]
    aggregates: Mapping[str, Mapping[str, float]]
    delta_f1_target: float
    delta_f1_others: float
    encoder_config: EncoderConfig
    train_config: TrainConfig
    exclusion_log: tuple[dict, ...] = ()

    def to_dict(self) -> dict[str, object]:
        return {
            "variable": self.variable,
            "target_source": self.target_source,
            "m": self.m,
            "n": self.n,
            "seeds": list(self.seeds),
            "cells": [dataclasses.asdict(c) for c in self.cells],
            "aggregates": {k: dict(v) for k, v in self.aggregates.items()},
            "delta_f1_target": self.delta_f1_target,
            "delta_f1_others": self.delta_f1_others,
            "encoder_config": self.encoder_config.to_dict(),
            "train_config": self.train_config.to_dict(),
            "exclusion_log": list(self.exclusion_log),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "DeltaF1Report":
        cells = tuple(CellResult(**c) for c in d["cells"])  # type: ignore[union-attr]
        return cls(
            variable=str(d["variable"]),
            target_source=str(d["target_source"]),
            m=int(d["m"]),  # type: ignore[arg-type]
            n=int(d["n"]),  # type: ignore[arg-type]
            seeds=tuple(d["seeds"]),  # type: ignore[arg-type]
            cells=cells,
            aggregates={k: dict(v) for k, v in d["aggregates"].items()},  # type: ignore[union-attr]
            delta_f1_target=float(d["delta_f1_target"]),  # type: ignore[arg-type]
            delta_f1_others=float(d["delta_f1_others"]),  # type: ignore[arg-type]
            encoder_config=EncoderConfig.from_dict(d["encoder_config"]),  # type: ignore[arg-type]
            train_config=TrainConfig.from_dict(d["train_config"]),  # type: ignore[arg-type]
            exclusion_log=tuple(d.get("exclusion_log") or ()),
        )


def save_report(report: DeltaF1Report, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_report(path: str | Path) -> DeltaF1Report:
    return DeltaF1Report.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def aggregate_cells(
    cells: Sequence[CellResult], m: int, n: int
) -> tuple[dict[str, dict[str, float]], float, float]:
    """Mean over seeds within subset, then over subsets; then the two deltas."""
    by_key = {(c.subset, c.seed_index, c.kind): c for c in cells}
    aggregates: dict[str, dict[str, float]] = {}
    for kind in COMPOSITION_KINDS:
        kind_means: dict[str, float] = {}
        for test_name in ("target", "others"):
            subset_means = []
            for j in range(m):
                vals = [
                    getattr(by_key[(j, i, kind)], f"f1_{test_name}") for i in range(n)
                ]
                subset_means.append(sum(vals) / len(vals))
            kind_means[test_name] = sum(subset_means) / len(subset_means)
        aggregates[kind] = kind_means
    d_target = delta_f1(
        aggregates["PureOthers"]["target"],
        aggregates["OthersTarget"]["target"],
        aggregates["TargetOthers"]["target"],
    )
    d_others = delta_f1(
        aggregates["PureOthers"]["others"],
        aggregates["OthersTarget"]["others"],
        aggregates["TargetOthers"]["others"],
    )
    return aggregates, d_target, d_others


# worker context shared via fork; set immediately before map_tasks
_CTX: dict = {}


def _run_cell(subset: int, seed_index: int, kind: str) -> CellResult:
    corpus = _CTX["corpus"]
    variable = _CTX["variable"]
    fs = _CTX["feature_space"]
    comp: TrainingComposition = _CTX["compositions"][(subset, seed_index)][kind]
    seed = _CTX["seeds"][seed_index]
    train_config = dataclasses.replace(
        _CTX["train_config"], seed=derive_seed(seed, "train", subset)
    )
    ckpt = train(
        corpus,
        variable,
        comp.segments,
        comp.val_ids,
        _CTX["encoder_config"],
        train_config,
        feature_space=fs,
    )
    scores = {}
    for name, test_ids in (("target", comp.test_target_ids), ("others", comp.test_others_ids)):
        preds = predict(ckpt, corpus, test_ids, feature_space=fs)
        gold = [int(corpus.label(i, variable)) for i in test_ids]
        scores[name] = f1_positive([p.label for p in preds], gold).f1
    return CellResult(
        subset=subset,
        seed_index=seed_index,
        seed=seed,
        kind=kind,
        f1_target=scores["target"],
        f1_others=scores["others"],
    )


def run_state_inconsistency(
    corpus: Corpus,
    variable: str,
    target_source: str,
    m: int,
    n: int,
    encoder_config: EncoderConfig,
    train_config: TrainConfig,
    *,
    base_seed: int = 0,
    min_positives: int = 10,
    jobs: int | None = None,
) -> DeltaF1Report:
    """Run the full (subset x seed x composition) grid for one target source."""
    kept, exclusion_log = exclude_sparse_sources(corpus, variable, min_positives)
    if target_source not in kept.sources():
        raise CorpusError(
            f"target source {target_source!r} does not survive sparse-source exclusion"
        )
    view = balance(kept, variable, derive_seed(base_seed, "balance"))
    partition = build_partition(kept, view, target_source, m, derive_seed(base_seed, "partition"))
    seeds = tuple(derive_seed(base_seed, "rep", i) for i in range(n))

    fs = FeatureSpace(kept, encoder_config)
    for i in view.ids:
        fs.row(i)  # pre-warm so forked workers inherit the cache

    compositions = {
        (j, i): build_compositions(kept, variable, partition, j, derive_seed(seeds[i], "comp", j))
        for j in range(m)
        for i in range(n)
    }
    tasks = [
        (j, i, kind) for j in range(m) for i in range(n) for kind in COMPOSITION_KINDS
    ]
    _CTX.update(
        corpus=kept,
        variable=variable,
        feature_space=fs,
        compositions=compositions,
        seeds=seeds,
        encoder_config=encoder_config,
        train_config=train_config,
    )
    try:
        cells = tuple(_parallel.map_tasks(_run_cell, tasks, jobs))
    finally:
        _CTX.clear()
    aggregates, d_target, d_others = aggregate_cells(cells, m, n)
    return DeltaF1Report(
        variable=variable,
        target_source=target_source,
        m=m,
        n=n,
        seeds=seeds,
        cells=cells,
        aggregates=aggregates,
        delta_f1_target=d_target,
        delta_f1_others=d_others,
        encoder_config=encoder_config,
        train_config=train_config,
        exclusion_log=tuple(exclusion_log),
    )


def summarize_reports(reports: Sequence[DeltaF1Report]) -> dict[str, object]:
    """Count positive-ΔF1 targets across sources ("k of n positive" style)."""
    positive_target = sum(1 for r in reports if r.delta_f1_target > 0)
    negative_others = sum(1 for r in reports if r.delta_f1_others < 0)
    return {
        "total_sources": len(reports),
        "positive_delta_target": positive_target,
        "negative_delta_others": negative_others,
        "summary": (
            f"{positive_target} of {len(reports)} sources improved on their own test set; "
            f"{negative_others} of {len(reports)} dropped on the others test set"
        ),
    }
