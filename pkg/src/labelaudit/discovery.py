"""Flagging likely mislabeled instances by repeated k-fold error counting.

The target source's instances are pooled with all other sources, shuffled,
and dealt into k folds; each fold is predicted by a model trained on the
other k-1 folds, so every instance is held out exactly once per
repetition. An instance's error count is the number of repetitions (out of
n) in which its hold-out prediction disagreed with its recorded label;
counts at or above the threshold become flags.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from . import _parallel
from .classifier import EncoderConfig, FeatureSpace, TrainConfig, predict, train
from .corpus import Corpus, CorpusError, balance, exclude_sparse_sources
from .seeding import derive_seed, rng_for


class DiscoveryError(ValueError):
    """Discovery preconditions violated or fold dealing failed."""


@dataclass(frozen=True)
class DiscoveryConfig:
    k: int = 5
    repetitions: int = 5
    threshold: int = 5
    seeds: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.k < 2:
            raise DiscoveryError("k must be >= 2")
        if not 1 <= self.threshold <= self.repetitions:
            raise DiscoveryError("threshold must lie in [1, repetitions]")
        if self.seeds and len(self.seeds) != self.repetitions:
            raise DiscoveryError(
                f"got {len(self.seeds)} seeds for {self.repetitions} repetitions"
            )
        object.__setattr__(self, "seeds", tuple(self.seeds))

    def resolved_seeds(self, base_seed: int) -> tuple[int, ...]:
        if self.seeds:
            return self.seeds
        return tuple(derive_seed(base_seed, "repetition", r) for r in range(self.repetitions))

    def to_dict(self) -> dict[str, object]:
        return {
            "k": self.k,
            "repetitions": self.repetitions,
            "threshold": self.threshold,
            "seeds": list(self.seeds),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "DiscoveryConfig":
        kwargs = dict(d)
        kwargs["seeds"] = tuple(kwargs.get("seeds") or ())
        return cls(**kwargs)  # type: ignore[arg-type]


@dataclass(frozen=True)
class ErrorCountLedger:
    variable: str
    target_source: str
    config: DiscoveryConfig
    counts: Mapping[str, int]
    flags: tuple[str, ...]
    histogram: Mapping[int, int]
    probabilities: Mapping[str, float]
    counts_all: Mapping[str, int] | None = None

    def to_dict(self) -> dict[str, object]:
        out: dict[str, object] = {
            "variable": self.variable,
            "target_source": self.target_source,
            "config": self.config.to_dict(),
            "counts": {k: self.counts[k] for k in sorted(self.counts)},
            "flags": list(self.flags),
            "histogram": {str(k): self.histogram[k] for k in sorted(self.histogram)},
            "probabilities": {k: self.probabilities[k] for k in sorted(self.probabilities)},
        }
        if self.counts_all is not None:
            out["counts_all"] = {k: self.counts_all[k] for k in sorted(self.counts_all)}
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "ErrorCountLedger":
        counts_all = d.get("counts_all")
        return cls(
            variable=str(d["variable"]),
            target_source=str(d["target_source"]),
            config=DiscoveryConfig.from_dict(d["config"]),  # type: ignore[arg-type]
            counts={k: int(v) for k, v in d["counts"].items()},  # type: ignore[union-attr]
            flags=tuple(d["flags"]),  # type: ignore[arg-type]
            histogram={int(k): int(v) for k, v in d["histogram"].items()},  # type: ignore[union-attr]
            probabilities={k: float(v) for k, v in d["probabilities"].items()},  # type: ignore[union-attr]
            counts_all=None if counts_all is None else {k: int(v) for k, v in counts_all.items()},  # type: ignore[union-attr]
        )


def save_ledger(ledger: ErrorCountLedger, path: str | Path) -> None:
    Path(path).write_text(json.dumps(ledger.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_ledger(path: str | Path) -> ErrorCountLedger:
    return ErrorCountLedger.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def compute_flags(counts: Mapping[str, int], threshold: int) -> tuple[str, ...]:
    """Ids at or above the threshold, worst first (then id for determinism)."""
    hits = [i for i, c in counts.items() if c >= threshold]
    return tuple(sorted(hits, key=lambda i: (-counts[i], i)))


def histogram_of(counts: Mapping[str, int], repetitions: int) -> dict[int, int]:
    hist = {c: 0 for c in range(repetitions + 1)}
    for c in counts.values():
        hist[c] += 1
    return hist


def histogram_csv(ledger: ErrorCountLedger) -> str:
    lines = ["error_count,frequency"]
    for count in sorted(ledger.histogram):
        lines.append(f"{count},{ledger.histogram[count]}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Fold dealing


def _fold_sizes(n: int, k: int) -> list[int]:
    base, rem = divmod(n, k)
    return [base + 1 if f < rem else base for f in range(k)]


def deal_folds(
    ids: Sequence[str], labels: Mapping[str, int], k: int, seed: int, max_attempts: int = 3
) -> list[list[str]]:
    """Shuffle and deal into k folds; re-deal if any training complement
    would be single-class (at most ``max_attempts`` deals)."""
    if len(ids) < k:
        raise DiscoveryError(f"cannot deal {len(ids)} instances into {k} folds")
    for attempt in range(max_attempts):
        rng = rng_for(seed, "deal", attempt)
        order = rng.permutation(len(ids))
        shuffled = [ids[i] for i in order.tolist()]
        folds: list[list[str]] = []
        start = 0
        for size in _fold_sizes(len(ids), k):
            folds.append(shuffled[start : start + size])
            start += size
        ok = True
        for f in range(k):
            complement_labels = {
                labels[i] for g, fold in enumerate(folds) if g != f for i in fold
            }
            if len(complement_labels) < 2:
                ok = False
                break
        if ok:
            return folds
    raise DiscoveryError(
        f"could not deal {k} folds with two-class training complements "
        f"in {max_attempts} attempts"
    )


# worker context shared via fork; set immediately before map_tasks
_CTX: dict = {}


def _run_fold(rep: int, fold_index: int) -> list[tuple[str, int, float]]:
    """Train on the fold complement, predict the fold; returns
    (incident_id, error, probability) for every held-out instance."""
    corpus: Corpus = _CTX["corpus"]
    variable: str = _CTX["variable"]
    folds: list[list[str]] = _CTX["folds"][rep]
    fs: FeatureSpace = _CTX["feature_space"]
    train_ids = [i for g, fold in enumerate(folds) if g != fold_index for i in fold]
    config = dataclasses.replace(
        _CTX["train_config"], seed=derive_seed(_CTX["seeds"][rep], "fold-train", fold_index)
    )
    # fold models skip validation-based selection: the final epoch is used
    ckpt = train(
        corpus, variable, train_ids, None, _CTX["encoder_config"], config, feature_space=fs
    )
    held_out = folds[fold_index]
    preds = predict(ckpt, corpus, held_out, feature_space=fs)
    out = []
    for p in preds:
        gold = int(corpus.label(p.incident_id, variable))
        out.append((p.incident_id, int(p.label != gold), p.probability))
    return out


def run_discovery(
    corpus: Corpus,
    variable: str,
    target_source: str,
    discovery_config: DiscoveryConfig,
    encoder_config: EncoderConfig,
    train_config: TrainConfig,
    *,
    base_seed: int = 0,
    min_positives: int = 10,
    record_all: bool = False,
    jobs: int | None = None,
) -> ErrorCountLedger:
    """Count hold-out mispredictions per repetition and flag at the threshold."""
    kept, _ = exclude_sparse_sources(corpus, variable, min_positives)
    if target_source not in kept.sources():
        raise CorpusError(
            f"target source {target_source!r} does not survive sparse-source exclusion"
        )
    view = balance(kept, variable, derive_seed(base_seed, "balance"))
    union_ids = list(view.ids)
    if not union_ids:
        raise DiscoveryError("balanced view is empty")
    target_ids = [i for i in union_ids if kept[i].source == target_source]
    labels = {i: int(kept.label(i, variable)) for i in union_ids}

    seeds = discovery_config.resolved_seeds(base_seed)
    folds_per_rep = [
        deal_folds(union_ids, labels, discovery_config.k, rep_seed) for rep_seed in seeds
    ]

    fs = FeatureSpace(kept, encoder_config)
    for i in union_ids:
        fs.row(i)  # pre-warm so forked workers inherit the cache

    tasks = [
        (rep, f)
        for rep in range(discovery_config.repetitions)
        for f in range(discovery_config.k)
    ]
    _CTX.update(
        corpus=kept,
        variable=variable,
        feature_space=fs,
        folds=folds_per_rep,
        seeds=seeds,
        encoder_config=encoder_config,
        train_config=train_config,
    )
    try:
        results = _parallel.map_tasks(_run_fold, tasks, jobs)
    finally:
        _CTX.clear()

    target_set = set(target_ids)
    counts_all = {i: 0 for i in union_ids}
    probabilities: dict[str, float] = {}
    last_rep = discovery_config.repetitions - 1
    for (rep, _), fold_result in zip(tasks, results):
        for incident_id, error, probability in fold_result:
            counts_all[incident_id] += error
            if rep == last_rep and incident_id in target_set:
                probabilities[incident_id] = probability

    counts = {i: counts_all[i] for i in target_ids}
    return ErrorCountLedger(
        variable=variable,
        target_source=target_source,
        config=discovery_config,
        counts=counts,
        flags=compute_flags(counts, discovery_config.threshold),
        histogram=histogram_of(counts, discovery_config.repetitions),
        probabilities=probabilities,
        counts_all=counts_all if record_all else None,
    )


def summarize_flags(
    ledger: ErrorCountLedger, total_annotations: int | None = None
) -> dict[str, object]:
    """Flag share in the style of the per-source summary table (one decimal)."""
    total = len(ledger.counts) if total_annotations is None else total_annotations
    flagged = len(ledger.flags)
    percent = round(100.0 * flagged / total, 1) if total else 0.0
    return {"total": total, "flagged": flagged, "percent": percent}
