from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import chisq_tail, t_tail_two_sided


class DegenerateDataError(ValueError):
    pass


@dataclass(frozen=True)
class TTest:
    t: float
    df: float
    p: float
    estimate: float
    se: float


@dataclass(frozen=True)
class ChiSquareTest:
    statistic: float
    df: int
    p: float


def mean_sd(xs) -> tuple[float, float]:
    """Sample mean and standard deviation (divisor n - 1)."""
    xs = np.asarray(xs, dtype=float)
    if xs.size < 2:
        raise DegenerateDataError(f"standard deviation needs at least 2 values, got {xs.size}")
    if np.all(xs == xs[0]):
        # exact for constant data, where the rounded mean would leave a tiny spread
        return float(xs[0]), 0.0
    mean = float(xs.mean())
    return mean, float(math.sqrt(np.sum((xs - mean) ** 2) / (xs.size - 1)))


def pearson_r(xs, ys) -> tuple[float, float]:
    """Sample correlation and its two-sided p-value from the t transform."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("pearson_r needs two 1-d vectors of equal length")
    n = xs.size
    if n < 3:
        raise ValueError("pearson_r needs at least 3 observations")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise DegenerateDataError("pearson_r is undefined for a zero-variance vector")
    r = float(np.clip(dx @ dy / math.sqrt(sxx * syy), -1.0, 1.0))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return r, t_tail_two_sided(t, n - 2)


def welch_t(a, b) -> TTest:
    """Two-sample Welch t test of mean(a) - mean(b)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise DegenerateDataError("Welch t test needs at least 2 values per group")
    ma, sa = mean_sd(a)
    mb, sb = mean_sd(b)
    va, vb = sa * sa / a.size, sb * sb / b.size
    est = ma - mb
    if va + vb == 0:
        if est == 0:
            return TTest(0.0, float(a.size + b.size - 2), 1.0, 0.0, 0.0)
        raise DegenerateDataError("Welch t test with zero variance in both groups")
    se = math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va * va / (a.size - 1) + vb * vb / (b.size - 1))
    t = est / se
    return TTest(t, df, t_tail_two_sided(t, df), est, se)


def chi2_independence(labels_a, labels_b) -> ChiSquareTest:
    """Pearson chi-square test of independence on a contingency table.

    Rows and columns with zero marginal count are dropped before the
    degrees of freedom (r - 1)(c - 1) are computed.
    """
    labels_a = list(labels_a)
    labels_b = list(labels_b)
    if len(labels_a) != len(labels_b):
        raise ValueError("label vectors differ in length")
    rows = sorted(set(labels_a))
    cols = sorted(set(labels_b))
    table = np.zeros((len(rows), len(cols)))
    ri = {v: k for k, v in enumerate(rows)}
    ci = {v: k for k, v in enumerate(cols)}
    for x, y in zip(labels_a, labels_b):
        table[ri[x], ci[y]] += 1
    return chi2_table(table)


def chi2_table(table) -> ChiSquareTest:
    table = np.asarray(table, dtype=float)
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    r, c = table.shape
    df = (r - 1) * (c - 1)
    if df < 1:
        raise DegenerateDataError(f"contingency table {r}x{c} has no degrees of freedom")
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / table.sum()
    stat = float(np.sum((table - expected) ** 2 / expected))
    return ChiSquareTest(stat, df, chisq_tail(stat, df))


def standardized_difference(values, groups) -> tuple[float, float]:
    """Difference in means (group 1 minus group 0) in units of the overall SD.

    Returns the estimate and its Welch standard error on the same scale.
    """
    values = np.asarray(values, dtype=float)
    groups = np.asarray(groups)
    _, sd = mean_sd(values)
    if sd == 0:
        raise DegenerateDataError("values have zero spread")
    z = values / sd
    one, zero = z[groups == 1], z[groups == 0]
    if one.size < 2 or zero.size < 2:
        raise DegenerateDataError("each group needs at least 2 members")
    res = welch_t(one, zero)
    return res.estimate, res.se
