"""Synthetic multi-source corpora with controllable separability and label noise.

Notes are token samples: each position draws a theme token of the
incident's true class with probability ``signal_strength``, otherwise a
shared filler token, so a linear model can recover the true labels.

Every source also contains a *confusable subtype* of instances
(``ambiguous_share`` of each class) whose theme draws lean on a dedicated
ambiguous token set. Injected noise models annotator drift rather than
coin flips: with the default "systematic" selection, a noisy source flips
the labels of its most-confusable instances first. Mislabelings therefore
carry a textual signature that conflicts with the clean sources' labeling
of the same subtype — the property that makes real cross-source annotation
inconsistency detectable — while "random" selection remains available as a
feature-independent control. The noise ledger records exactly which ids
were flipped; it is never read by detection code and exists only as the
oracle for tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .corpus import Corpus, Demographics, Incident
from .seeding import rng_for


class SynthError(ValueError):
    """Invalid synthesis specification."""


@dataclass(frozen=True)
class VocabSpec:
    """Disjoint core/ambiguous theme tokens per class plus shared filler."""

    positive: tuple[str, ...]
    negative: tuple[str, ...]
    ambiguous_positive: tuple[str, ...]
    ambiguous_negative: tuple[str, ...]
    filler: tuple[str, ...]

    def __post_init__(self) -> None:
        groups = [
            self.positive,
            self.negative,
            self.ambiguous_positive,
            self.ambiguous_negative,
            self.filler,
        ]
        if any(not g for g in groups):
            raise SynthError("every vocab group must be non-empty")
        seen: set[str] = set()
        for group in groups:
            if seen & set(group):
                raise SynthError("vocab token groups must be disjoint")
            seen |= set(group)

    def core(self, true_label: int) -> tuple[str, ...]:
        return self.positive if true_label == 1 else self.negative

    def ambiguous(self, true_label: int) -> tuple[str, ...]:
        return self.ambiguous_positive if true_label == 1 else self.ambiguous_negative


def default_vocab(n_core: int = 12, n_ambiguous: int = 4, n_filler: int = 120) -> VocabSpec:
    return VocabSpec(
        positive=tuple(f"pt{i:02d}" for i in range(n_core)),
        negative=tuple(f"nt{i:02d}" for i in range(n_core)),
        ambiguous_positive=tuple(f"pa{i:02d}" for i in range(n_ambiguous)),
        ambiguous_negative=tuple(f"na{i:02d}" for i in range(n_ambiguous)),
        filler=tuple(f"fl{i:03d}" for i in range(n_filler)),
    )


@dataclass(frozen=True)
class NoisePlan:
    """How one source's labels get corrupted."""

    flip_rate: float
    direction: str = "symmetric"  # symmetric | pos_to_neg | neg_to_pos
    selection: str = "systematic"  # systematic | random
    demographic: tuple[str, str] | None = None  # e.g. ("race", "black"), ("age", "youth")

    def __post_init__(self) -> None:
        if not 0.0 <= self.flip_rate < 0.5:
            raise SynthError(f"flip_rate must lie in [0, 0.5), got {self.flip_rate}")
        if self.direction not in ("symmetric", "pos_to_neg", "neg_to_pos"):
            raise SynthError(f"unknown flip direction {self.direction!r}")
        if self.selection not in ("systematic", "random"):
            raise SynthError(f"unknown flip selection {self.selection!r}")


@dataclass(frozen=True)
class DemographicSpec:
    youth_rate: float = 0.30
    black_rate: float = 0.25
    female_rate: float = 0.45
    other_rate: float = 0.03
    unknown_rate: float = 0.02


@dataclass(frozen=True)
class SynthSpec:
    sources: int
    instances_per_source: int
    seed: int
    variable: str = "crisis"
    vocab: VocabSpec = field(default_factory=default_vocab)
    signal_strength: float = 0.4
    note_tokens: int = 24
    positive_rate: float = 0.5  # true-label prevalence before flips
    source_positive_rates: Mapping[str, float] = field(default_factory=dict)
    ambiguous_share: float = 0.35
    ambiguous_share_negative: float | None = None  # defaults to ambiguous_share
    source_ambiguous_shares: Mapping[str, float] = field(default_factory=dict)
    ambiguous_token_rate: float = 0.8
    noise_plan: Mapping[str, NoisePlan] = field(default_factory=dict)
    demographics: DemographicSpec = field(default_factory=DemographicSpec)

    def __post_init__(self) -> None:
        if self.sources < 1 or self.instances_per_source < 2:
            raise SynthError("need at least 1 source and 2 instances per source")
        if not 0.0 <= self.signal_strength <= 1.0:
            raise SynthError("signal_strength must lie in [0, 1]")
        if not 0.0 < self.positive_rate < 1.0:
            raise SynthError("positive_rate must lie in (0, 1)")
        for source, rate in self.source_positive_rates.items():
            if not 0.0 < rate < 1.0:
                raise SynthError(f"positive rate for {source!r} must lie in (0, 1)")
        for source, share in self.source_ambiguous_shares.items():
            if not 0.0 <= share <= 1.0:
                raise SynthError(f"ambiguous share for {source!r} must lie in [0, 1]")
        if not 0.0 <= self.ambiguous_share <= 1.0:
            raise SynthError("ambiguous_share must lie in [0, 1]")
        if self.ambiguous_share_negative is not None and not (
            0.0 <= self.ambiguous_share_negative <= 1.0
        ):
            raise SynthError("ambiguous_share_negative must lie in [0, 1]")
        if not 0.0 <= self.ambiguous_token_rate <= 1.0:
            raise SynthError("ambiguous_token_rate must lie in [0, 1]")
        if self.note_tokens < 1:
            raise SynthError("note_tokens must be >= 1")

    def ambiguous_share_for(self, true_label: int, source: str | None = None) -> float:
        """Subtype prevalence: an explicit negative-class share wins for
        negatives; otherwise a per-source override, then the base share."""
        if true_label == 0 and self.ambiguous_share_negative is not None:
            return self.ambiguous_share_negative
        if source is not None and source in self.source_ambiguous_shares:
            return self.source_ambiguous_shares[source]
        return self.ambiguous_share

    def source_names(self) -> list[str]:
        return [f"s{i:02d}" for i in range(self.sources)]


@dataclass(frozen=True)
class NoiseLedger:
    """Ground truth about injected flips; test oracle only."""

    flipped_ids: tuple[str, ...]
    per_source: Mapping[str, int]

    def to_dict(self) -> dict[str, object]:
        return {
            "flipped_ids": list(self.flipped_ids),
            "per_source": {k: self.per_source[k] for k in sorted(self.per_source)},
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "NoiseLedger":
        return cls(tuple(d["flipped_ids"]), dict(d["per_source"]))  # type: ignore[arg-type]


def save_noise_ledger(ledger: NoiseLedger, path: str | Path) -> None:
    Path(path).write_text(json.dumps(ledger.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_noise_ledger(path: str | Path) -> NoiseLedger:
    return NoiseLedger.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# Generation


def _sample_demographics(rng, spec: DemographicSpec) -> Demographics:
    age = int(rng.integers(12, 24)) if rng.random() < spec.youth_rate else int(rng.integers(24, 91))
    r = rng.random()
    if r < spec.black_rate:
        race = "black"
    elif r < spec.black_rate + spec.other_rate:
        race = "other"
    elif r < spec.black_rate + spec.other_rate + spec.unknown_rate:
        race = "unknown"
    else:
        race = "white"
    r = rng.random()
    if r < spec.female_rate:
        sex = "female"
    elif r < spec.female_rate + spec.other_rate:
        sex = "other"
    elif r < spec.female_rate + spec.other_rate + spec.unknown_rate:
        sex = "unknown"
    else:
        sex = "male"
    return Demographics(age_years=age, sex=sex, race=race)


def _make_note(rng, spec: SynthSpec, true_label: int, is_ambiguous: bool) -> str:
    core = spec.vocab.core(true_label)
    ambiguous = spec.vocab.ambiguous(true_label)
    tokens = []
    for _ in range(spec.note_tokens):
        if rng.random() >= spec.signal_strength:
            tokens.append(spec.vocab.filler[int(rng.integers(0, len(spec.vocab.filler)))])
        elif is_ambiguous and rng.random() < spec.ambiguous_token_rate:
            tokens.append(ambiguous[int(rng.integers(0, len(ambiguous)))])
        else:
            tokens.append(core[int(rng.integers(0, len(core)))])
    return " ".join(tokens)


def _matches_demographic(incident: Incident, constraint: tuple[str, str]) -> bool:
    axis, value = constraint
    if axis == "age":
        age = incident.demographics.age_years
        if age is None:
            return False
        return age < 24 if value == "youth" else age >= 24
    if axis == "sex":
        return incident.demographics.sex == value
    if axis == "race":
        return incident.demographics.race == value
    raise SynthError(f"unknown demographic axis {axis!r}")


def _ambiguity_score(incident: Incident, spec: SynthSpec, true_label: int) -> int:
    ambiguous = set(spec.vocab.ambiguous(true_label))
    return sum(1 for tok in f"{incident.note_a} {incident.note_b}".split() if tok in ambiguous)


def _pick_flips(
    incidents: list[Incident],
    true_labels: dict[str, int],
    plan: NoisePlan,
    spec: SynthSpec,
    rng,
) -> list[str]:
    count = round(plan.flip_rate * len(incidents))
    if count == 0:
        return []
    eligible = incidents
    if plan.demographic is not None:
        eligible = [inc for inc in eligible if _matches_demographic(inc, plan.demographic)]
    pos = [inc for inc in eligible if true_labels[inc.incident_id] == 1]
    neg = [inc for inc in eligible if true_labels[inc.incident_id] == 0]
    if plan.direction == "pos_to_neg":
        quotas = [(pos, count)]
    elif plan.direction == "neg_to_pos":
        quotas = [(neg, count)]
    else:
        # odd counts flip one extra positive, never creating a positive excess
        quotas = [(pos, count - count // 2), (neg, count // 2)]

    flipped: list[str] = []
    for pool, quota in quotas:
        if quota > len(pool):
            raise SynthError(
                f"cannot place {quota} flips: only {len(pool)} eligible instances "
                f"(direction={plan.direction}, demographic={plan.demographic})"
            )
        if plan.selection == "random":
            chosen = rng.choice(len(pool), size=quota, replace=False)
            flipped.extend(pool[i].incident_id for i in sorted(chosen.tolist()))
        else:
            # drift model: the most-confusable instances get mislabeled first
            ranked = sorted(
                pool,
                key=lambda inc: (
                    -_ambiguity_score(inc, spec, true_labels[inc.incident_id]),
                    inc.incident_id,
                ),
            )
            flipped.extend(inc.incident_id for inc in ranked[:quota])
    return flipped


def generate(spec: SynthSpec) -> tuple[Corpus, NoiseLedger]:
    """Build the corpus and its flip ledger; fully deterministic given the seed."""
    incidents: list[Incident] = []
    true_labels: dict[str, int] = {}
    by_source: dict[str, list[Incident]] = {}
    for source in spec.source_names():
        rng = rng_for(spec.seed, "source", source)
        n = spec.instances_per_source
        rate = spec.source_positive_rates.get(source, spec.positive_rate)
        n_pos = round(rate * n)
        labels = [1] * n_pos + [0] * (n - n_pos)
        order = rng.permutation(n)
        for k in range(n):
            y = labels[int(order[k])]
            is_ambiguous = rng.random() < spec.ambiguous_share_for(y, source)
            incident_id = f"{source}-{k:05d}"
            inc = Incident(
                incident_id=incident_id,
                source=source,
                note_a=_make_note(rng, spec, y, is_ambiguous),
                note_b=_make_note(rng, spec, y, is_ambiguous),
                demographics=_sample_demographics(rng, spec.demographics),
                labels={spec.variable: y},
            )
            incidents.append(inc)
            true_labels[incident_id] = y
            by_source.setdefault(source, []).append(inc)

    flipped: list[str] = []
    per_source: dict[str, int] = {}
    for source, plan in sorted(spec.noise_plan.items()):
        if source not in by_source:
            raise SynthError(f"noise plan names unknown source {source!r}")
        rng = rng_for(spec.seed, "noise", source)
        ids = _pick_flips(by_source[source], true_labels, plan, spec, rng)
        flipped.extend(ids)
        per_source[source] = len(ids)

    flipped_set = set(flipped)
    final: list[Incident] = []
    for inc in incidents:
        if inc.incident_id in flipped_set:
            y = 1 - true_labels[inc.incident_id]
            inc = Incident(
                incident_id=inc.incident_id,
                source=inc.source,
                note_a=inc.note_a,
                note_b=inc.note_b,
                demographics=inc.demographics,
                labels={spec.variable: y},
            )
        final.append(inc)
    ledger = NoiseLedger(flipped_ids=tuple(sorted(flipped)), per_source=per_source)
    return Corpus(final), ledger


def true_label(corpus: Corpus, ledger: NoiseLedger, incident_id: str, variable: str) -> int:
    """Recover the pre-flip label (oracle helper for tests)."""
    observed = corpus.label(incident_id, variable)
    if observed not in (0, 1):
        raise SynthError(f"incident {incident_id!r} has no binary label")
    return 1 - int(observed) if incident_id in set(ledger.flipped_ids) else int(observed)
