"""Demographic risk-of-bias analysis via single-predictor logistic regressions.

For each circumstance variable and demographic contrast (youth vs adult,
black vs white, female vs male), a logistic regression of the binary label
on group membership yields an odds ratio with a 95% CI from the
coefficient's standard error. Running the same regressions on the
original, flags-removed, and random-dropped annotation variants shows
whether removing suspected mislabelings moves the measured association.
"""

from __future__ import annotations

import dataclasses
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus, Demographics
from .seeding import rng_for


class BiasError(ValueError):
    """Invalid bias-analysis input."""


@dataclass(frozen=True)
class GroupSpec:
    """A demographic contrast: comparison coded 1, reference coded 0.

    Instances matching neither predicate are excluded from the regression.
    """

    axis: str  # age | race | sex
    comparison: str  # youth | black | female
    reference: str  # adult | white | male

    def __post_init__(self) -> None:
        if self.axis not in ("age", "race", "sex"):
            raise BiasError(f"unknown demographic axis {self.axis!r}")

    def code(self, demographics: Demographics) -> int | None:
        if self.axis == "age":
            age = demographics.age_years
            if age is None:
                return None
            value = "youth" if age < 24 else "adult"
        elif self.axis == "race":
            value = demographics.race
        else:
            value = demographics.sex
        if value == self.comparison:
            return 1
        if value == self.reference:
            return 0
        return None

    @property
    def name(self) -> str:
        return f"{self.comparison}_vs_{self.reference}"


DEFAULT_GROUP_SPECS = (
    GroupSpec("age", "youth", "adult"),
    GroupSpec("race", "black", "white"),
    GroupSpec("sex", "female", "male"),
)


# ---------------------------------------------------------------------------
# Logistic fit


@dataclass(frozen=True)
class LogisticFit:
    coefficient: float
    intercept: float
    standard_error: float
    continuity_corrected: bool = False


def _fit_from_table(a: float, b: float, c: float, d: float) -> LogisticFit:
    """Newton-Raphson MLE on the grouped 2x2 likelihood.

    a/b are comparison-group positives/negatives, c/d the reference
    group's. A zero cell (complete separation in this design) triggers the
    0.5 continuity correction on all four cells.
    """
    corrected = False
    if min(a, b, c, d) <= 0:
        a, b, c, d = a + 0.5, b + 0.5, c + 0.5, d + 0.5
        corrected = True
    n1, n0 = a + b, c + d
    beta0 = beta1 = 0.0
    info = np.zeros((2, 2))
    for _ in range(100):
        p1 = 1.0 / (1.0 + math.exp(-(beta0 + beta1)))
        p0 = 1.0 / (1.0 + math.exp(-beta0))
        grad = np.array([a - n1 * p1 + c - n0 * p0, a - n1 * p1])
        w1, w0 = n1 * p1 * (1 - p1), n0 * p0 * (1 - p0)
        info = np.array([[w1 + w0, w1], [w1, w1]])
        if float(np.linalg.norm(grad)) < 1e-10:
            break
        step = np.linalg.solve(info, grad)
        beta0 += float(step[0])
        beta1 += float(step[1])
    else:
        raise BiasError("logistic fit failed to converge")
    se = float(math.sqrt(np.linalg.inv(info)[1, 1]))
    return LogisticFit(
        coefficient=beta1, intercept=beta0, standard_error=se, continuity_corrected=corrected
    )


def fit_binary_logistic(outcomes: Sequence[int], predictor: Sequence[int]) -> LogisticFit:
    """Maximum-likelihood logistic fit of a 0/1 outcome on a 0/1 predictor."""
    if len(outcomes) != len(predictor):
        raise BiasError(f"length mismatch: {len(outcomes)} outcomes vs {len(predictor)}")
    a = b = c = d = 0
    for o, p in zip(outcomes, predictor):
        if o not in (0, 1) or p not in (0, 1):
            raise BiasError("outcomes and predictor must be binary")
        if p == 1:
            a, b = (a + 1, b) if o == 1 else (a, b + 1)
        else:
            c, d = (c + 1, d) if o == 1 else (c, d + 1)
    if a + b == 0 or c + d == 0:
        raise BiasError("both predictor groups must be present")
    return _fit_from_table(a, b, c, d)


def odds_ratio_ci(
    coefficient: float,
    standard_error: float,
    z: float = 1.96,
    paper_literal: bool = False,
) -> dict[str, float]:
    """Odds ratio and its CI from the coefficient and its standard error.

    The default exponentiates the interval endpoints (the standard form,
    always positive). ``paper_literal`` instead adds/subtracts z*SE to the
    exponentiated point estimate, for comparison against sources printing
    the formula that way.
    """
    if standard_error < 0:
        raise BiasError("standard_error must be >= 0")
    or_value = math.exp(coefficient)
    if paper_literal:
        return {
            "or_value": or_value,
            "ci_low": or_value - z * standard_error,
            "ci_high": or_value + z * standard_error,
        }
    return {
        "or_value": or_value,
        "ci_low": math.exp(coefficient - z * standard_error),
        "ci_high": math.exp(coefficient + z * standard_error),
    }


# ---------------------------------------------------------------------------
# Variant-level analysis


@dataclass(frozen=True)
class ORRecord:
    variable: str
    annotation_variant: str
    group: str
    comparison_count: int  # positive-labeled instances in the comparison group
    reference_count: int
    comparison_total: int
    reference_total: int
    excluded_count: int
    coefficient: float
    standard_error: float
    or_value: float
    ci_low: float
    ci_high: float
    continuity_corrected: bool = False

    def to_dict(self) -> dict[str, object]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "ORRecord":
        return cls(**dict(d))  # type: ignore[arg-type]


def save_or_records(records: Sequence[ORRecord], path: str | Path) -> None:
    payload = [r.to_dict() for r in records]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_or_records(path: str | Path) -> list[ORRecord]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return [ORRecord.from_dict(d) for d in raw]


VARIANT_ORDER = ("original", "flags_removed", "random_dropped")


def build_annotation_variants(
    view_ids: Sequence[str], flags: Sequence[str], seed: int
) -> dict[str, tuple[str, ...]]:
    """Original / flags-removed / random-dropped id lists over one view.

    The random variant drops exactly as many instances as the flags variant
    does, sampled uniformly from the same pool.
    """
    ids = tuple(view_ids)
    flag_set = set(flags)
    removed = [i for i in ids if i in flag_set]
    rng = rng_for(seed, "random-drop-variant")
    drop = rng.choice(len(ids), size=len(removed), replace=False)
    drop_set = {ids[j] for j in drop.tolist()}
    return {
        "original": ids,
        "flags_removed": tuple(i for i in ids if i not in flag_set),
        "random_dropped": tuple(i for i in ids if i not in drop_set),
    }


def run_bias_analysis(
    corpus: Corpus,
    variable: str,
    variants: Mapping[str, Sequence[str]],
    group_specs: Sequence[GroupSpec] = DEFAULT_GROUP_SPECS,
    *,
    z: float = 1.96,
    paper_literal: bool = False,
) -> list[ORRecord]:
    """One ORRecord per (variant, group contrast); empty groups are skipped."""
    records: list[ORRecord] = []
    variant_names = [v for v in VARIANT_ORDER if v in variants]
    variant_names += [v for v in sorted(variants) if v not in VARIANT_ORDER]
    for variant in variant_names:
        ids = variants[variant]
        for spec in group_specs:
            outcomes: list[int] = []
            predictor: list[int] = []
            excluded = 0
            for i in ids:
                label = corpus.label(i, variable)
                if label not in (0, 1):
                    excluded += 1
                    continue
                code = spec.code(corpus[i].demographics)
                if code is None:
                    excluded += 1
                    continue
                outcomes.append(int(label))
                predictor.append(code)
            n_comp = sum(predictor)
            n_ref = len(predictor) - n_comp
            if n_comp == 0 or n_ref == 0:
                warnings.warn(
                    f"variant {variant!r}: empty {spec.name} group; regression skipped",
                    stacklevel=2,
                )
                continue
            fit = fit_binary_logistic(outcomes, predictor)
            ci = odds_ratio_ci(fit.coefficient, fit.standard_error, z, paper_literal)
            records.append(
                ORRecord(
                    variable=variable,
                    annotation_variant=variant,
                    group=spec.name,
                    comparison_count=sum(
                        1 for o, p in zip(outcomes, predictor) if p == 1 and o == 1
                    ),
                    reference_count=sum(
                        1 for o, p in zip(outcomes, predictor) if p == 0 and o == 1
                    ),
                    comparison_total=n_comp,
                    reference_total=n_ref,
                    excluded_count=excluded,
                    coefficient=fit.coefficient,
                    standard_error=fit.standard_error,
                    or_value=ci["or_value"],
                    ci_low=ci["ci_low"],
                    ci_high=ci["ci_high"],
                    continuity_corrected=fit.continuity_corrected,
                )
            )
    return records


def or_table_csv(records: Sequence[ORRecord]) -> str:
    """Variant rows x group columns with "OR[low;high]" strings."""
    groups = sorted({r.group for r in records})
    header = ["variable", "variant"]
    for g in groups:
        header += [f"{g}_comparison_n", f"{g}_reference_n", f"{g}_or_ci"]
    lines = [",".join(header)]
    seen: list[tuple[str, str]] = []
    for r in records:
        key = (r.variable, r.annotation_variant)
        if key not in seen:
            seen.append(key)
    by_key = {}
    for r in records:
        by_key[(r.variable, r.annotation_variant, r.group)] = r
    for variable, variant in seen:
        row = [variable, variant]
        for g in groups:
            r = by_key.get((variable, variant, g))
            if r is None:
                row += ["", "", ""]
            else:
                row += [
                    str(r.comparison_total),
                    str(r.reference_total),
                    f"{r.or_value:.2f}[{r.ci_low:.2f};{r.ci_high:.2f}]",
                ]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
