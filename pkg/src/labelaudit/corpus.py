"""Multi-source labeled incident corpora.

Ingestion (JSONL / CSV), per-source class balancing, stratified 8:1:1
splitting, and exclusive subset sampling. All selection is seeded and
deterministic: for a fixed input file, variable, and seed, every derived
view is a pure function of those three things.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .seeding import rng_for

UNKNOWN = "unknown"
SEX_VALUES = frozenset({"female", "male", "other", "unknown"})
RACE_VALUES = frozenset({"black", "white", "other", "unknown"})

#: Columns with fixed meaning in CSV ingestion; all other columns are
#: treated as label variables.
CSV_FIXED_COLUMNS = ("incident_id", "source", "note_a", "note_b", "age", "sex", "race")


class CorpusError(ValueError):
    """Fatal corpus-level problem (duplicate ids, missing source, bad file)."""


@dataclass(frozen=True)
class Demographics:
    age_years: int | None = None
    sex: str = UNKNOWN
    race: str = UNKNOWN


@dataclass(frozen=True)
class Incident:
    """One death record: id, source tag, two notes, demographics, labels."""

    incident_id: str
    source: str
    note_a: str
    note_b: str
    demographics: Demographics
    labels: Mapping[str, int | str]

    def label(self, variable: str) -> int | str | None:
        return self.labels.get(variable)


@dataclass(frozen=True)
class RecordError:
    """A rejected input record with its 1-based line number."""

    line: int
    reason: str


class Corpus:
    """An ordered collection of validated incidents, keyed by id."""

    def __init__(self, incidents: Iterable[Incident], rejected: Sequence[RecordError] = ()):
        self._incidents: dict[str, Incident] = {}
        for inc in incidents:
            if inc.incident_id in self._incidents:
                raise CorpusError(f"duplicate incident_id {inc.incident_id!r}")
            self._incidents[inc.incident_id] = inc
        self.rejected = list(rejected)

    def __len__(self) -> int:
        return len(self._incidents)

    def __iter__(self) -> Iterator[Incident]:
        return iter(self._incidents.values())

    def __contains__(self, incident_id: str) -> bool:
        return incident_id in self._incidents

    def __getitem__(self, incident_id: str) -> Incident:
        return self._incidents[incident_id]

    def ids(self) -> list[str]:
        return list(self._incidents)

    def sources(self) -> list[str]:
        return sorted({inc.source for inc in self})

    def variables(self) -> list[str]:
        names: set[str] = set()
        for inc in self:
            names.update(inc.labels)
        return sorted(names)

    def label(self, incident_id: str, variable: str) -> int | str | None:
        return self._incidents[incident_id].labels.get(variable)

    def labeled_ids(self, variable: str, source: str | None = None) -> list[str]:
        """Ids carrying a 0/1 label for ``variable`` (unknowns excluded)."""
        out = []
        for inc in self:
            if source is not None and inc.source != source:
                continue
            if inc.labels.get(variable) in (0, 1):
                out.append(inc.incident_id)
        return out

    def positives(self, variable: str, source: str | None = None) -> int:
        return sum(
            1
            for inc in self
            if (source is None or inc.source == source) and inc.labels.get(variable) == 1
        )

    def restrict(self, ids: Iterable[str]) -> "Corpus":
        keep = set(ids)
        return Corpus([inc for inc in self if inc.incident_id in keep], self.rejected)


# ---------------------------------------------------------------------------
# Ingestion


def _parse_label_value(raw: object) -> int | str:
    if raw in (0, 1):
        return int(raw)  # type: ignore[arg-type]
    if isinstance(raw, str):
        if raw in ("0", "1"):
            return int(raw)
        if raw == UNKNOWN:
            return UNKNOWN
    raise ValueError(f"label value {raw!r} is not 0, 1, or {UNKNOWN!r}")


def _parse_demographics(age: object, sex: object, race: object) -> Demographics:
    if age in (None, ""):
        age_years = None
    else:
        if isinstance(age, bool) or not isinstance(age, (int, str)):
            raise ValueError(f"age {age!r} is not a nonnegative integer")
        try:
            age_years = int(age)
        except ValueError:
            raise ValueError(f"age {age!r} is not a nonnegative integer") from None
        if age_years < 0:
            raise ValueError(f"age {age_years} is negative")
    sex_v = UNKNOWN if sex in (None, "") else str(sex)
    race_v = UNKNOWN if race in (None, "") else str(race)
    if sex_v not in SEX_VALUES:
        raise ValueError(f"sex {sex_v!r} not one of {sorted(SEX_VALUES)}")
    if race_v not in RACE_VALUES:
        raise ValueError(f"race {race_v!r} not one of {sorted(RACE_VALUES)}")
    return Demographics(age_years=age_years, sex=sex_v, race=race_v)


def _record_to_incident(rec: Mapping[str, object], line: int) -> Incident:
    incident_id = rec.get("incident_id")
    source = rec.get("source")
    if not incident_id or not isinstance(incident_id, str):
        raise CorpusError(f"line {line}: missing incident_id")
    if not source or not isinstance(source, str):
        raise CorpusError(f"line {line}: missing source for incident {incident_id!r}")
    note_a = str(rec.get("note_a") or "")
    note_b = str(rec.get("note_b") or "")
    if not note_a and not note_b:
        raise ValueError("both notes are empty")
    demo = _parse_demographics(rec.get("age"), rec.get("sex"), rec.get("race"))
    raw_labels = rec.get("labels") or {}
    if not isinstance(raw_labels, Mapping):
        raise ValueError(f"labels field is not a mapping: {raw_labels!r}")
    labels = {str(k): _parse_label_value(v) for k, v in raw_labels.items()}
    return Incident(incident_id, source, note_a, note_b, demo, labels)


def _csv_row_to_record(row: Mapping[str, str]) -> dict[str, object]:
    rec: dict[str, object] = {k: row.get(k, "") for k in CSV_FIXED_COLUMNS}
    labels: dict[str, str] = {}
    for key, value in row.items():
        if key in CSV_FIXED_COLUMNS or key is None:
            continue
        if value == "" or value is None:
            continue  # absent variable for this record
        labels[key] = value
    rec["labels"] = labels
    return rec


def ingest(path: str | Path, format: str = "jsonl") -> Corpus:
    """Load and validate a corpus file.

    Structural problems (unreadable file, malformed JSON, missing id or
    source, duplicate ids) raise :class:`CorpusError`. Per-record problems
    (bad label token, bad demographics, empty notes) reject only that
    record; the rejects, with line numbers, are kept on ``corpus.rejected``.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus file not found: {path}")
    if format not in ("jsonl", "csv"):
        raise CorpusError(f"unsupported format {format!r} (expected jsonl or csv)")

    records: list[tuple[int, Mapping[str, object]]] = []
    if format == "jsonl":
        with path.open("r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"line {line_no}: malformed JSON ({exc.msg})") from exc
                records.append((line_no, obj))
    else:
        with path.open("r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            # line 1 is the header
            for line_no, row in enumerate(reader, start=2):
                records.append((line_no, _csv_row_to_record(row)))

    incidents: dict[str, Incident] = {}
    first_line: dict[str, int] = {}
    rejected: list[RecordError] = []
    for line_no, rec in records:
        try:
            inc = _record_to_incident(rec, line_no)
        except CorpusError:
            raise
        except ValueError as exc:
            rejected.append(RecordError(line_no, str(exc)))
            continue
        if inc.incident_id in incidents:
            raise CorpusError(
                f"duplicate incident_id {inc.incident_id!r} at lines "
                f"{first_line[inc.incident_id]} and {line_no}"
            )
        incidents[inc.incident_id] = inc
        first_line[inc.incident_id] = line_no
    return Corpus(incidents.values(), rejected)


def incident_to_record(inc: Incident) -> dict[str, object]:
    return {
        "incident_id": inc.incident_id,
        "source": inc.source,
        "note_a": inc.note_a,
        "note_b": inc.note_b,
        "age": inc.demographics.age_years,
        "sex": inc.demographics.sex,
        "race": inc.demographics.race,
        "labels": {k: inc.labels[k] for k in sorted(inc.labels)},
    }


def write_corpus_jsonl(corpus: Corpus, path: str | Path) -> None:
    """Write the canonical JSONL form (stable key order, one record per line)."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for inc in corpus:
            fh.write(json.dumps(incident_to_record(inc), sort_keys=True))
            fh.write("\n")


# ---------------------------------------------------------------------------
# Sparse-source exclusion


def exclude_sparse_sources(
    corpus: Corpus, variable: str, min_positives: int = 10
) -> tuple[Corpus, list[dict[str, object]]]:
    """Drop sources with fewer than ``min_positives`` positive labels.

    Returns the restricted corpus and an exclusion log with one entry per
    source: ``{source, variable, positives, excluded}``.
    """
    if variable not in corpus.variables():
        raise CorpusError(f"variable {variable!r} not present in corpus labels")
    log: list[dict[str, object]] = []
    kept_sources: set[str] = set()
    for source in corpus.sources():
        positives = corpus.positives(variable, source)
        excluded = positives < min_positives
        log.append(
            {"source": source, "variable": variable, "positives": positives, "excluded": excluded}
        )
        if not excluded:
            kept_sources.add(source)
    restricted = Corpus(
        [inc for inc in corpus if inc.source in kept_sources], corpus.rejected
    )
    return restricted, log


# ---------------------------------------------------------------------------
# Balanced views


@dataclass(frozen=True)
class DatasetView:
    """An ordered, seeded selection of incident ids for one target variable."""

    variable: str
    ids: tuple[str, ...]
    unbalanced_sources: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.ids)


def balance(
    corpus: Corpus, variable: str, seed: int, allow_unbalanced: bool = False
) -> DatasetView:
    """Per-source 1:1 class balancing by down-sampling negatives.

    All positives are kept; negatives are uniformly down-sampled without
    replacement to the positive count. A source with more positives than
    negatives is an error unless ``allow_unbalanced`` is set, in which case
    it is kept as-is and reported in ``unbalanced_sources``.
    """
    if variable not in corpus.variables():
        raise CorpusError(f"variable {variable!r} not present in corpus labels")
    selected: list[str] = []
    unbalanced: list[str] = []
    for source in corpus.sources():
        pos = [i for i in corpus.labeled_ids(variable, source) if corpus.label(i, variable) == 1]
        neg = [i for i in corpus.labeled_ids(variable, source) if corpus.label(i, variable) == 0]
        if not pos:
            continue  # nothing to match; source contributes no instances
        if len(pos) > len(neg):
            if not allow_unbalanced:
                raise CorpusError(
                    f"source {source!r} has more positives ({len(pos)}) than negatives "
                    f"({len(neg)}) for {variable!r}; pass allow_unbalanced to keep it"
                )
            unbalanced.append(source)
            selected.extend(pos)
            selected.extend(neg)
            continue
        rng = rng_for(seed, "balance", variable, source)
        chosen = rng.choice(len(neg), size=len(pos), replace=False)
        picked = [neg[i] for i in sorted(chosen.tolist())]
        selected.extend(pos)
        selected.extend(picked)
    return DatasetView(variable=variable, ids=tuple(selected), unbalanced_sources=tuple(unbalanced))


def view_ids_by_source(corpus: Corpus, view: DatasetView) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for i in view.ids:
        out.setdefault(corpus[i].source, []).append(i)
    return out


# ---------------------------------------------------------------------------
# Splitting


@dataclass(frozen=True)
class SplitPlan:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]
    seed: int
    ratio: tuple[int, int, int] = (8, 1, 1)

    def parts(self) -> dict[str, tuple[str, ...]]:
        return {"train": self.train, "validation": self.validation, "test": self.test}


def _part_sizes(n: int) -> tuple[int, int, int]:
    """Total (train, validation, test) sizes under the 8:1:1 rule.

    Train takes floor(0.8 n); the remainder splits as evenly as possible
    with validation receiving any odd leftover.
    """
    n_train = math.floor(0.8 * n)
    rem = n - n_train
    n_val = rem - rem // 2
    return n_train, n_val, rem // 2


def _apportion(total: int, n_pos: int, n_neg: int) -> tuple[int, int]:
    """Split ``total`` between the classes proportionally (largest remainder)."""
    n = n_pos + n_neg
    q_pos = total * n_pos / n
    q_neg = total * n_neg / n
    t_pos, t_neg = math.floor(q_pos), math.floor(q_neg)
    if t_pos + t_neg < total:  # one unit left; larger fraction wins, tie to positives
        if q_pos - t_pos >= q_neg - t_neg:
            t_pos += 1
        else:
            t_neg += 1
    return t_pos, t_neg


def split_8_1_1(corpus: Corpus, ids: Sequence[str], variable: str, seed: int) -> SplitPlan:
    """Stratified 8:1:1 split.

    Part sizes follow the global rule exactly (train is always
    floor(0.8 n)); within each part the two classes are apportioned by
    largest remainder, which keeps every part's positive rate within one
    instance of the input's and stabilizes F1 on small parts.
    """
    if len(ids) < 10:
        raise CorpusError(f"cannot 8:1:1-split {len(ids)} instances (need at least 10)")
    pos = [i for i in ids if corpus.label(i, variable) == 1]
    neg = [i for i in ids if corpus.label(i, variable) == 0]
    n_train, n_val, _ = _part_sizes(len(ids))
    train_pos, train_neg = _apportion(n_train, len(pos), len(neg))
    val_pos, val_neg = _apportion(n_val, len(pos) - train_pos, len(neg) - train_neg)

    shuffled: dict[int, list[str]] = {}
    for cls, members in ((1, pos), (0, neg)):
        rng = rng_for(seed, "split", variable, cls)
        order = rng.permutation(len(members))
        shuffled[cls] = [members[j] for j in order.tolist()]
    return SplitPlan(
        train=tuple(shuffled[1][:train_pos] + shuffled[0][:train_neg]),
        validation=tuple(
            shuffled[1][train_pos : train_pos + val_pos]
            + shuffled[0][train_neg : train_neg + val_neg]
        ),
        test=tuple(shuffled[1][train_pos + val_pos :] + shuffled[0][train_neg + val_neg :]),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Exclusive subsets


@dataclass(frozen=True)
class CorpusPartition:
    """A target source's instances vs. the pooled others, with m exclusive subsets."""

    target_source: str
    target_set: tuple[str, ...]
    other_pool: tuple[str, ...]
    exclusive_subsets: tuple[tuple[str, ...], ...]

    def __post_init__(self) -> None:
        target = set(self.target_set)
        pool = set(self.other_pool)
        if target & pool:
            raise CorpusError("target_set and other_pool overlap")
        seen: set[str] = set()
        for subset in self.exclusive_subsets:
            sub = set(subset)
            if sub & seen:
                raise CorpusError("exclusive subsets overlap")
            if not sub <= pool:
                raise CorpusError("exclusive subset contains ids outside other_pool")
            if len(subset) != len(self.target_set):
                raise CorpusError("exclusive subset size differs from target size")
            seen |= sub

    @property
    def x(self) -> int:
        return len(self.target_set)

    @property
    def m(self) -> int:
        return len(self.exclusive_subsets)


def sample_exclusive_subsets(
    pool_ids: Sequence[str],
    x: int,
    m: int = 4,
    seed: int = 0,
    *,
    target_source: str = "",
    target_ids: Sequence[str] = (),
) -> CorpusPartition:
    """Sample ``m`` pairwise-disjoint uniform subsets of size ``x`` from the pool."""
    need = m * x
    if len(pool_ids) < need:
        raise CorpusError(
            f"cannot sample {m} exclusive subsets of size {x}: pool has "
            f"{len(pool_ids)} ids, short by {need - len(pool_ids)}"
        )
    rng = rng_for(seed, "subsets", m, x)
    order = rng.permutation(len(pool_ids))
    shuffled = [pool_ids[i] for i in order.tolist()]
    subsets = tuple(tuple(shuffled[j * x : (j + 1) * x]) for j in range(m))
    return CorpusPartition(
        target_source=target_source,
        target_set=tuple(target_ids),
        other_pool=tuple(pool_ids),
        exclusive_subsets=subsets,
    )


def build_partition(
    corpus: Corpus, view: DatasetView, target_source: str, m: int = 4, seed: int = 0
) -> CorpusPartition:
    """Split a balanced view into target vs. others and sample the m subsets."""
    by_source = view_ids_by_source(corpus, view)
    if target_source not in by_source:
        raise CorpusError(f"target source {target_source!r} has no instances in the view")
    target_ids = by_source[target_source]
    other_ids = [i for i in view.ids if corpus[i].source != target_source]
    return sample_exclusive_subsets(
        other_ids,
        x=len(target_ids),
        m=m,
        seed=seed,
        target_source=target_source,
        target_ids=target_ids,
    )
