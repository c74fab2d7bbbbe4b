"""Upper-tail probabilities for the t, F, chi-square and normal distributions."""

import math

from .special import betainc, gammaincc


def _check_df(df, name="df"):
    if not (df >= 1 and math.isfinite(df)):
        raise ValueError(f"{name} must be a finite number >= 1, got {df}")


def t_tail_two_sided(t: float, df: float) -> float:
    """P(|T_df| >= |t|).

    ``df`` may be fractional (Welch tests) but must be at least 1.
    """
    _check_df(df)
    if math.isnan(t):
        raise ValueError("t statistic is NaN")
    if math.isinf(t):
        return 0.0
    t2 = t * t
    if t2 == 0.0:
        return 1.0
    # 1 - x computed directly keeps precision for small t and large df
    x = df / (df + t2)
    xc = t2 / (df + t2)
    return min(1.0, max(0.0, betainc(df / 2.0, 0.5, x, xc)))


def t_tail_one_sided(t: float, df: float) -> float:
    """P(T_df >= t)."""
    p2 = t_tail_two_sided(t, df)
    return p2 / 2.0 if t >= 0 else 1.0 - p2 / 2.0


def f_tail(f: float, df1: float, df2: float) -> float:
    """P(F_{df1, df2} >= f)."""
    _check_df(df1, "df1")
    _check_df(df2, "df2")
    if math.isnan(f) or f < 0:
        raise ValueError(f"F statistic must be >= 0, got {f}")
    if f == 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    denom = df2 + df1 * f
    return min(1.0, max(0.0, betainc(df2 / 2.0, df1 / 2.0, df2 / denom, df1 * f / denom)))


def chisq_tail(x: float, df: float) -> float:
    """P(chi2_df >= x)."""
    _check_df(df)
    if math.isnan(x) or x < 0:
        raise ValueError(f"chi-square statistic must be >= 0, got {x}")
    if math.isinf(x):
        return 0.0
    return min(1.0, max(0.0, gammaincc(df / 2.0, x / 2.0)))


def normal_tail_two_sided(z: float) -> float:
    return math.erfc(abs(z) / math.sqrt(2.0))


def t_quantile(q: float, df: float) -> float:
    """Inverse of the t CDF by bisection on the tail function."""
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    if q == 0.5:
        return 0.0
    upper = q > 0.5
    target = 2.0 * (1.0 - q) if upper else 2.0 * q
    lo, hi = 0.0, 1.0
    while t_tail_two_sided(hi, df) > target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_tail_two_sided(mid, df) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * max(1.0, hi):
            break
    t = 0.5 * (lo + hi)
    return t if upper else -t
