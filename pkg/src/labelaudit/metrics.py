"""Statistical primitives: positive-class F1, Welch's t-test, Cohen's kappa.

The Student-t CDF is computed from a continued-fraction regularized
incomplete beta, so the package carries no external stats dependency for
its reported p-values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence


class MetricError(ValueError):
    """Invalid metric input (length mismatch, degenerate variance, ...)."""


# ---------------------------------------------------------------------------
# Confusion counts and F1


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class PositiveClassScores:
    precision: float
    recall: float
    f1: float


def confusion(predictions: Sequence[int], gold: Sequence[int]) -> ConfusionCounts:
    if len(predictions) != len(gold):
        raise MetricError(
            f"length mismatch: {len(predictions)} predictions vs {len(gold)} gold labels"
        )
    tp = fp = fn = tn = 0
    for p, g in zip(predictions, gold):
        if g not in (0, 1):
            raise MetricError(f"gold label {g!r} is not binary")
        if p == 1 and g == 1:
            tp += 1
        elif p == 1 and g == 0:
            fp += 1
        elif g == 1:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, fn, tn)


def scores_from_counts(counts: ConfusionCounts) -> PositiveClassScores:
    """P, R, F1 for the positive class; every 0/0 is defined as 0."""
    p_den = counts.tp + counts.fp
    r_den = counts.tp + counts.fn
    precision = counts.tp / p_den if p_den else 0.0
    recall = counts.tp / r_den if r_den else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PositiveClassScores(precision, recall, f1)


def f1_positive(predictions: Sequence[int], gold: Sequence[int]) -> PositiveClassScores:
    """Positive-class precision/recall/F1 of hard predictions vs gold labels."""
    return scores_from_counts(confusion(predictions, gold))


def pooled_f1(groups: Sequence[tuple[Sequence[int], Sequence[int]]]) -> PositiveClassScores:
    """Micro pooling across test sources: one F1 on the summed confusion counts."""
    total = ConfusionCounts()
    for predictions, gold in groups:
        total = total + confusion(predictions, gold)
    return scores_from_counts(total)


# ---------------------------------------------------------------------------
# Regularized incomplete beta and the Student-t distribution


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Lentz continued fraction for the incomplete beta (cf. Numerical Recipes)."""
    max_iter = 300
    eps = 1e-16
    fpmin = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise MetricError(f"incomplete beta continued fraction failed to converge (a={a}, b={b}, x={x})")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise MetricError("incomplete beta requires a, b > 0")
    if not 0.0 <= x <= 1.0:
        raise MetricError(f"incomplete beta requires x in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_cdf(t: float, df: float) -> float:
    if df <= 0:
        raise MetricError("degrees of freedom must be positive")
    if t == 0.0:
        return 0.5
    x = df / (df + t * t)
    tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x)
    return 1.0 - tail if t > 0 else tail


def student_t_two_sided_p(t: float, df: float) -> float:
    """P(|T| >= |t|) for T ~ Student-t(df)."""
    if df <= 0:
        raise MetricError("degrees of freedom must be positive")
    if t == 0.0:
        return 1.0
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))


# ---------------------------------------------------------------------------
# Welch's t-test


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    degrees_of_freedom: float
    p_value: float


def _mean_var(sample: Sequence[float]) -> tuple[float, float]:
    n = len(sample)
    mean = sum(sample) / n
    var = sum((v - mean) ** 2 for v in sample) / (n - 1)
    return mean, var


def welch_t(sample_a: Sequence[float], sample_b: Sequence[float]) -> TTestResult:
    """Unequal-variance two-sample t-test with Welch-Satterthwaite df."""
    if len(sample_a) < 2 or len(sample_b) < 2:
        raise MetricError("welch_t requires at least 2 values per sample")
    mean_a, var_a = _mean_var(sample_a)
    mean_b, var_b = _mean_var(sample_b)
    if var_a == 0.0 and var_b == 0.0:
        raise MetricError("welch_t is undefined for two zero-variance samples")
    na, nb = len(sample_a), len(sample_b)
    sa, sb = var_a / na, var_b / nb
    pooled = sa + sb
    t = (mean_a - mean_b) / math.sqrt(pooled)
    df = pooled * pooled / (sa * sa / (na - 1) + sb * sb / (nb - 1))
    return TTestResult(t_statistic=t, degrees_of_freedom=df, p_value=student_t_two_sided_p(t, df))


# ---------------------------------------------------------------------------
# Cohen's kappa


def cohen_kappa(labels_a: Sequence[int], labels_b: Sequence[int]) -> float:
    """Chance-corrected agreement between two binary labelings."""
    if len(labels_a) != len(labels_b):
        raise MetricError(f"length mismatch: {len(labels_a)} vs {len(labels_b)}")
    if not labels_a:
        raise MetricError("cohen_kappa requires at least one pair")
    for v in list(labels_a) + list(labels_b):
        if v not in (0, 1):
            raise MetricError(f"label {v!r} is not binary")
    n = len(labels_a)
    p_o = sum(1 for a, b in zip(labels_a, labels_b) if a == b) / n
    pa1 = sum(labels_a) / n
    pb1 = sum(labels_b) / n
    p_e = pa1 * pb1 + (1 - pa1) * (1 - pb1)
    if p_e == 1.0:
        if p_o == 1.0:
            return 1.0
        raise MetricError("kappa undefined: chance agreement is 1 but raters disagree")
    return (p_o - p_e) / (1 - p_e)
