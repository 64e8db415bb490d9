"""Measuring the effect of removing or correcting flagged instances.

Two experiment families: (1) removal retraining, comparing models trained
with flags removed against a same-count random-drop baseline and the
untouched original, with Welch tests across seeds; (2) the four-composition
incremental paradigm, revealing the ordered training data in chunks of T
and recording both test F1s after each chunk, with and without corrected
target labels.
"""

from __future__ import annotations

import dataclasses
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import _parallel
from .classifier import (
    EncoderConfig,
    FeatureSpace,
    OnlineTrainer,
    TrainConfig,
    predict,
    train,
)
from .corpus import Corpus, CorpusError, balance, exclude_sparse_sources, split_8_1_1
from .discovery import ErrorCountLedger
from .metrics import TTestResult, f1_positive, welch_t
from .seeding import derive_seed, rng_for


class VerificationError(ValueError):
    """Invalid verification experiment input."""


# ---------------------------------------------------------------------------
# Corrections


@dataclass(frozen=True)
class Adjudication:
    """One human verdict on a flagged instance."""

    adjudication_id: str
    incident_id: str
    annotator_id: str
    verdict: str  # keep | flip | uncertain
    note: str = ""
    version: int = 1
    timestamp: str = ""

    def __post_init__(self) -> None:
        if self.verdict not in ("keep", "flip", "uncertain"):
            raise VerificationError(f"unknown verdict {self.verdict!r}")

    def to_dict(self) -> dict[str, object]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "Adjudication":
        return cls(**dict(d))  # type: ignore[arg-type]


@dataclass(frozen=True)
class CorrectedView:
    """A base id list plus label overrides traced to adjudications."""

    base_ids: tuple[str, ...]
    overrides: Mapping[str, int]
    provenance: tuple[str, ...]
    uncertain: tuple[str, ...] = ()

    def label_overrides(self) -> dict[str, int]:
        return dict(self.overrides)


def apply_corrections(
    corpus: Corpus,
    view_ids: Sequence[str],
    variable: str,
    adjudications: Sequence[Adjudication],
    flags: Sequence[str],
) -> CorrectedView:
    """Fold verdicts into label overrides.

    Flips toggle the current effective label (so a flip re-flipped in a
    later session restores the original), keeps change nothing, uncertains
    change nothing but are reported. Only flagged ids may be adjudicated.
    """
    flag_set = set(flags)
    id_set = set(view_ids)
    effective: dict[str, int] = {}
    provenance: list[str] = []
    uncertain: list[str] = []
    for adj in adjudications:
        if adj.incident_id not in flag_set:
            raise VerificationError(
                f"adjudication {adj.adjudication_id!r} references unflagged id "
                f"{adj.incident_id!r}"
            )
        if adj.incident_id not in id_set:
            raise VerificationError(
                f"adjudication {adj.adjudication_id!r} references id outside the view"
            )
        provenance.append(adj.adjudication_id)
        if adj.verdict == "uncertain":
            if adj.incident_id not in uncertain:
                uncertain.append(adj.incident_id)
            continue
        if adj.verdict == "flip":
            base = int(corpus.label(adj.incident_id, variable))
            current = effective.get(adj.incident_id, base)
            effective[adj.incident_id] = 1 - current
    overrides = {}
    for incident_id, label in effective.items():
        if label != int(corpus.label(incident_id, variable)):
            overrides[incident_id] = label
    return CorrectedView(
        base_ids=tuple(view_ids),
        overrides=overrides,
        provenance=tuple(provenance),
        uncertain=tuple(uncertain),
    )


def oracle_adjudications(flags: Sequence[str], flipped_ids: Sequence[str]) -> list[Adjudication]:
    """Perfect-annotator verdicts from a noise ledger (test/demo helper)."""
    flipped = set(flipped_ids)
    out = []
    for k, incident_id in enumerate(flags):
        out.append(
            Adjudication(
                adjudication_id=f"oracle-{k:04d}",
                incident_id=incident_id,
                annotator_id="oracle",
                verdict="flip" if incident_id in flipped else "keep",
            )
        )
    return out


# ---------------------------------------------------------------------------
# Removal experiment

REMOVAL_ARMS = ("original", "flags_removed", "random_dropped")


@dataclass(frozen=True)
class RemovalExperiment:
    variable: str
    target_source: str
    seeds: tuple[int, ...]
    arms: Mapping[str, tuple[float, ...]]
    removed_per_seed: tuple[int, ...]
    t_test_flags_vs_original: TTestResult
    t_test_flags_vs_random: TTestResult

    def mean(self, arm: str) -> float:
        values = self.arms[arm]
        return sum(values) / len(values)

    def to_dict(self) -> dict[str, object]:
        return {
            "variable": self.variable,
            "target_source": self.target_source,
            "seeds": list(self.seeds),
            "arms": {k: list(v) for k, v in self.arms.items()},
            "means": {k: self.mean(k) for k in self.arms},
            "removed_per_seed": list(self.removed_per_seed),
            "t_test_flags_vs_original": dataclasses.asdict(self.t_test_flags_vs_original),
            "t_test_flags_vs_random": dataclasses.asdict(self.t_test_flags_vs_random),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "RemovalExperiment":
        return cls(
            variable=str(d["variable"]),
            target_source=str(d["target_source"]),
            seeds=tuple(d["seeds"]),  # type: ignore[arg-type]
            arms={k: tuple(v) for k, v in d["arms"].items()},  # type: ignore[union-attr]
            removed_per_seed=tuple(d["removed_per_seed"]),  # type: ignore[arg-type]
            t_test_flags_vs_original=TTestResult(**d["t_test_flags_vs_original"]),  # type: ignore[arg-type]
            t_test_flags_vs_random=TTestResult(**d["t_test_flags_vs_random"]),  # type: ignore[arg-type]
        )


def save_removal_experiment(exp: RemovalExperiment, path: str | Path) -> None:
    Path(path).write_text(json.dumps(exp.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_removal_experiment(path: str | Path) -> RemovalExperiment:
    return RemovalExperiment.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


_CTX: dict = {}


def _run_removal_arm(seed_index: int, arm: str) -> float:
    corpus: Corpus = _CTX["corpus"]
    variable: str = _CTX["variable"]
    fs: FeatureSpace = _CTX["feature_space"]
    layout = _CTX["layouts"][seed_index]
    segments = (layout["others_train"], layout["arm_target_train"][arm])
    config = dataclasses.replace(_CTX["train_config"], seed=layout["train_seed"])
    ckpt = train(
        corpus,
        variable,
        segments,
        layout["val_ids"],
        _CTX["encoder_config"],
        config,
        feature_space=fs,
    )
    preds = predict(ckpt, corpus, layout["others_test"], feature_space=fs)
    gold = [int(corpus.label(i, variable)) for i in layout["others_test"]]
    return f1_positive([p.label for p in preds], gold).f1


def run_removal_experiment(
    corpus: Corpus,
    variable: str,
    target_source: str,
    ledger: ErrorCountLedger,
    n_seeds: int,
    encoder_config: EncoderConfig,
    train_config: TrainConfig,
    *,
    base_seed: int = 0,
    min_positives: int = 10,
    jobs: int | None = None,
) -> RemovalExperiment:
    """Retrain with flags removed vs a same-count random drop vs untouched.

    Per seed, all three arms share the split, the others-training sample,
    the validation set, the test set, and the training shuffle seed; only
    the target-source training segment differs. The random arm drops as
    many target-train instances as the flags arm actually removes there
    (flags landing in validation/test are never touched, keeping the test
    sets identical across arms).
    """
    if not ledger.flags:
        raise VerificationError("ledger has no flags; nothing to verify")
    kept, _ = exclude_sparse_sources(corpus, variable, min_positives)
    if target_source not in kept.sources():
        raise CorpusError(
            f"target source {target_source!r} does not survive sparse-source exclusion"
        )
    view = balance(kept, variable, derive_seed(base_seed, "balance"))
    target_ids = [i for i in view.ids if kept[i].source == target_source]
    other_ids = [i for i in view.ids if kept[i].source != target_source]
    flag_set = set(ledger.flags)
    target_positives = {i for i in target_ids if kept.label(i, variable) == 1}
    if target_positives and target_positives <= flag_set:
        raise VerificationError("flags cover the entire positive class of the target source")

    seeds = tuple(derive_seed(base_seed, "removal", i) for i in range(n_seeds))
    layouts = []
    removed_per_seed = []
    for i, seed in enumerate(seeds):
        target_split = split_8_1_1(kept, target_ids, variable, derive_seed(seed, "target"))
        others_split = split_8_1_1(kept, other_ids, variable, derive_seed(seed, "others"))
        rng = rng_for(seed, "others-train-sample")
        pool = list(others_split.train)
        take = min(len(target_split.train), len(pool))
        chosen = rng.choice(len(pool), size=take, replace=False)
        others_train = tuple(pool[j] for j in sorted(chosen.tolist()))
        rng = rng_for(seed, "others-val-sample")
        val_pool = list(others_split.validation)
        take_val = min(len(target_split.validation), len(val_pool))
        chosen_val = rng.choice(len(val_pool), size=take_val, replace=False)
        val_ids = tuple(val_pool[j] for j in sorted(chosen_val.tolist())) + tuple(
            target_split.validation
        )

        flagged_in_train = [i for i in target_split.train if i in flag_set]
        survivors = tuple(i for i in target_split.train if i not in flag_set)
        rng = rng_for(seed, "random-drop")
        drop = rng.choice(len(target_split.train), size=len(flagged_in_train), replace=False)
        drop_set = {target_split.train[j] for j in drop.tolist()}
        random_dropped = tuple(i for i in target_split.train if i not in drop_set)
        layouts.append(
            {
                "others_train": others_train,
                "val_ids": val_ids,
                "others_test": tuple(others_split.test),
                "arm_target_train": {
                    "original": tuple(target_split.train),
                    "flags_removed": survivors,
                    "random_dropped": random_dropped,
                },
                "train_seed": derive_seed(seed, "train"),
            }
        )
        removed_per_seed.append(len(flagged_in_train))

    fs = FeatureSpace(kept, encoder_config)
    for i in view.ids:
        fs.row(i)

    tasks = [(i, arm) for i in range(n_seeds) for arm in REMOVAL_ARMS]
    _CTX.update(
        corpus=kept,
        variable=variable,
        feature_space=fs,
        layouts=layouts,
        encoder_config=encoder_config,
        train_config=train_config,
    )
    try:
        results = _parallel.map_tasks(_run_removal_arm, tasks, jobs)
    finally:
        _CTX.clear()

    arms: dict[str, list[float]] = {arm: [] for arm in REMOVAL_ARMS}
    for (i, arm), f1 in zip(tasks, results):
        arms[arm].append(f1)
    arm_tuples = {arm: tuple(vals) for arm, vals in arms.items()}
    return RemovalExperiment(
        variable=variable,
        target_source=target_source,
        seeds=seeds,
        arms=arm_tuples,
        removed_per_seed=tuple(removed_per_seed),
        t_test_flags_vs_original=welch_t(arm_tuples["flags_removed"], arm_tuples["original"]),
        t_test_flags_vs_random=welch_t(arm_tuples["flags_removed"], arm_tuples["random_dropped"]),
    )


# ---------------------------------------------------------------------------
# Incremental paradigm

INCREMENTAL_KINDS = (
    "OthersTarget",
    "OthersCorrectedTarget",
    "TargetOthers",
    "CorrectedTargetOthers",
)


@dataclass(frozen=True)
class IncrementalPoint:
    instances_fed: int
    f1_target: float
    f1_others: float


@dataclass(frozen=True)
class IncrementalPlan:
    composition: str
    step_size: int
    total: int
    curve: tuple[IncrementalPoint, ...]  # mean over seeds
    per_seed_curves: tuple[tuple[IncrementalPoint, ...], ...] = ()
    seeds: tuple[int, ...] = ()

    def final_point(self) -> IncrementalPoint:
        return self.curve[-1]

    def to_dict(self) -> dict[str, object]:
        return {
            "composition": self.composition,
            "step_size": self.step_size,
            "total": self.total,
            "curve": [dataclasses.asdict(p) for p in self.curve],
            "per_seed_curves": [
                [dataclasses.asdict(p) for p in curve] for curve in self.per_seed_curves
            ],
            "seeds": list(self.seeds),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "IncrementalPlan":
        return cls(
            composition=str(d["composition"]),
            step_size=int(d["step_size"]),  # type: ignore[arg-type]
            total=int(d["total"]),  # type: ignore[arg-type]
            curve=tuple(IncrementalPoint(**p) for p in d["curve"]),  # type: ignore[union-attr]
            per_seed_curves=tuple(
                tuple(IncrementalPoint(**p) for p in curve) for curve in d["per_seed_curves"]  # type: ignore[union-attr]
            ),
            seeds=tuple(d.get("seeds") or ()),
        )


def save_incremental_plans(plans: Mapping[str, IncrementalPlan], path: str | Path) -> None:
    payload = {kind: plans[kind].to_dict() for kind in sorted(plans)}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_incremental_plans(path: str | Path) -> dict[str, IncrementalPlan]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return {kind: IncrementalPlan.from_dict(d) for kind, d in raw.items()}


def incremental_curves_csv(plans: Mapping[str, IncrementalPlan]) -> str:
    lines = ["composition,instances_fed,f1_target,f1_others,seed"]
    for kind in sorted(plans):
        plan = plans[kind]
        for seed, curve in zip(plan.seeds, plan.per_seed_curves):
            for point in curve:
                lines.append(
                    f"{kind},{point.instances_fed},{point.f1_target},{point.f1_others},{seed}"
                )
    return "\n".join(lines) + "\n"


def _run_incremental_composition(kind: str, seed_index: int) -> list[IncrementalPoint]:
    corpus: Corpus = _CTX["corpus"]
    variable: str = _CTX["variable"]
    fs: FeatureSpace = _CTX["feature_space"]
    layout = _CTX["layouts"][seed_index]
    config: TrainConfig = _CTX["train_config"]
    epochs_per_step: int = _CTX["epochs_per_step"]
    cold_start: bool = _CTX["cold_start"]
    step = _CTX["step_size"]

    corrected = kind in ("OthersCorrectedTarget", "CorrectedTargetOthers")
    target_first = kind in ("TargetOthers", "CorrectedTargetOthers")
    overrides = _CTX["overrides"] if corrected else {}
    segments = (
        (layout["target_train"], layout["others_train"])
        if target_first
        else (layout["others_train"], layout["target_train"])
    )
    order = [i for seg in segments for i in seg]
    total = len(order)
    first_len = len(segments[0])

    def labels_for(ids):
        return [
            overrides.get(i, int(corpus.label(i, variable))) for i in ids
        ]

    X_target_test = fs.matrix(layout["target_test"])
    X_others_test = fs.matrix(layout["others_test"])
    # the corrected view is the reference annotation for the target test,
    # for corrected and uncorrected arms alike
    gold_target = [
        _CTX["overrides"].get(i, int(corpus.label(i, variable))) for i in layout["target_test"]
    ]
    gold_others = [int(corpus.label(i, variable)) for i in layout["others_test"]]

    trainer = OnlineTrainer(fs.dim, dataclasses.replace(config, seed=layout["train_seed"]))
    points: list[IncrementalPoint] = []
    revealed = 0
    step_index = 0
    while revealed < total:
        revealed = min(revealed + step, total)
        cumulative = order[:revealed]
        if cold_start:
            trainer = OnlineTrainer(
                fs.dim,
                dataclasses.replace(config, seed=derive_seed(layout["train_seed"], step_index)),
            )
        X = fs.matrix(cumulative)
        y = np.asarray(labels_for(cumulative), dtype=np.float64)
        if revealed <= first_len:
            bounds = [(0, revealed)]
        else:
            bounds = [(0, first_len), (first_len, revealed)]
        trainer.run_epochs(X, y, epochs_per_step, bounds)
        preds_target = (trainer.probabilities(X_target_test) > 0.5).astype(int)
        preds_others = (trainer.probabilities(X_others_test) > 0.5).astype(int)
        points.append(
            IncrementalPoint(
                instances_fed=revealed,
                f1_target=f1_positive(preds_target.tolist(), gold_target).f1,
                f1_others=f1_positive(preds_others.tolist(), gold_others).f1,
            )
        )
        step_index += 1
    return points


def run_incremental(
    corpus: Corpus,
    variable: str,
    target_source: str,
    corrected_view: CorrectedView,
    step_size: int,
    encoder_config: EncoderConfig,
    train_config: TrainConfig,
    n_seeds: int,
    *,
    epochs_per_step: int = 3,
    cold_start: bool = False,
    base_seed: int = 0,
    min_positives: int = 10,
    jobs: int | None = None,
) -> dict[str, IncrementalPlan]:
    """Reveal the ordered training data in chunks of ``step_size``.

    After each chunk the (warm-started by default) model trains for
    ``epochs_per_step`` epochs on the cumulative revealed set and both test
    F1s are recorded. Four compositions: others/target order crossed with
    original/corrected target labels. Curves are averaged over seeds.
    """
    if step_size < 1:
        raise VerificationError("step_size must be >= 1")
    kept, _ = exclude_sparse_sources(corpus, variable, min_positives)
    if target_source not in kept.sources():
        raise CorpusError(
            f"target source {target_source!r} does not survive sparse-source exclusion"
        )
    view = balance(kept, variable, derive_seed(base_seed, "balance"))
    target_ids = [i for i in view.ids if kept[i].source == target_source]
    other_ids = [i for i in view.ids if kept[i].source != target_source]

    seeds = tuple(derive_seed(base_seed, "incremental", i) for i in range(n_seeds))
    layouts = []
    for seed in seeds:
        target_split = split_8_1_1(kept, target_ids, variable, derive_seed(seed, "target"))
        others_split = split_8_1_1(kept, other_ids, variable, derive_seed(seed, "others"))
        # equal-size others segment, as in the composition-contrast setup:
        # with a vastly larger others segment the target regime carries no
        # weight for the linear head and the paradigm contrasts nothing
        rng = rng_for(seed, "others-train-sample")
        pool = list(others_split.train)
        take = min(len(target_split.train), len(pool))
        chosen = rng.choice(len(pool), size=take, replace=False)
        layouts.append(
            {
                "target_train": tuple(target_split.train),
                "others_train": tuple(pool[j] for j in sorted(chosen.tolist())),
                "target_test": tuple(target_split.test),
                "others_test": tuple(others_split.test),
                "train_seed": derive_seed(seed, "train"),
            }
        )
    total = len(layouts[0]["target_train"]) + len(layouts[0]["others_train"])
    if step_size > total:
        warnings.warn(
            f"step size {step_size} exceeds total {total}; running a single step",
            stacklevel=2,
        )

    fs = FeatureSpace(kept, encoder_config)
    for i in view.ids:
        fs.row(i)

    tasks = [(kind, i) for kind in INCREMENTAL_KINDS for i in range(n_seeds)]
    _CTX.update(
        corpus=kept,
        variable=variable,
        feature_space=fs,
        layouts=layouts,
        overrides=corrected_view.label_overrides(),
        train_config=train_config,
        epochs_per_step=epochs_per_step,
        cold_start=cold_start,
        step_size=step_size,
    )
    try:
        results = _parallel.map_tasks(_run_incremental_composition, tasks, jobs)
    finally:
        _CTX.clear()

    by_kind: dict[str, list[list[IncrementalPoint]]] = {k: [] for k in INCREMENTAL_KINDS}
    for (kind, i), curve in zip(tasks, results):
        by_kind[kind].append(curve)
    plans: dict[str, IncrementalPlan] = {}
    for kind, curves in by_kind.items():
        n_points = len(curves[0])
        mean_curve = []
        for p in range(n_points):
            mean_curve.append(
                IncrementalPoint(
                    instances_fed=curves[0][p].instances_fed,
                    f1_target=sum(c[p].f1_target for c in curves) / len(curves),
                    f1_others=sum(c[p].f1_others for c in curves) / len(curves),
                )
            )
        plans[kind] = IncrementalPlan(
            composition=kind,
            step_size=step_size,
            total=total,
            curve=tuple(mean_curve),
            per_seed_curves=tuple(tuple(c) for c in curves),
            seeds=seeds,
        )
    return plans
