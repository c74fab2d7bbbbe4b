"""Least squares via QR, nested-model F tests and one-way ANOVA."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distributions import f_tail

RANK_TOL = 1e-10


class SingularDesignError(ValueError):
    """Raised when a design matrix column lies in the span of earlier columns."""

    def __init__(self, column, index):
        self.column = column
        self.index = index
        super().__init__(f"design matrix is rank deficient at column {column!r}")


@dataclass(frozen=True)
class OlsFit:
    coefficients: np.ndarray
    residual_ss: float
    df_residual: int
    model_ss: float
    names: tuple[str, ...] = ()
    residuals: np.ndarray = field(default=None, repr=False)

    @property
    def n_params(self) -> int:
        return len(self.coefficients)


@dataclass(frozen=True)
class FTest:
    f: float
    df1: int
    df2: int
    p: float


def ols(X, y, names=None) -> OlsFit:
    """Fit ``y ~ X`` by Householder QR.

    Raises :class:`SingularDesignError` naming the first column whose
    diagonal entry in R falls below ``1e-10`` times the largest column norm.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if y.shape != (n,):
        raise ValueError(f"response has shape {y.shape}, expected ({n},)")
    if n <= p:
        raise ValueError(f"need more rows than columns (n={n}, p={p})")
    names = tuple(names) if names is not None else tuple(f"x{k}" for k in range(p))
    if len(names) != p:
        raise ValueError("names must match the number of columns")

    Q, R = np.linalg.qr(X, mode="reduced")
    scale = np.linalg.norm(X, axis=0).max()
    diag = np.abs(np.diag(R))
    bad = np.flatnonzero(diag <= RANK_TOL * max(scale, np.finfo(float).tiny))
    if bad.size:
        k = int(bad[0])
        raise SingularDesignError(names[k], k)

    beta = np.linalg.solve(R, Q.T @ y)
    resid = y - X @ beta
    rss = float(resid @ resid)
    fitted = y - resid
    model_ss = float(np.sum((fitted - y.mean()) ** 2))
    return OlsFit(beta, rss, n - p, model_ss, names, resid)


def f_test_nested(full: OlsFit, reduced: OlsFit) -> FTest:
    """Compare a full model with a reduced model nested inside it."""
    if full.names and reduced.names and not set(reduced.names) <= set(full.names):
        extra = sorted(set(reduced.names) - set(full.names))
        raise ValueError(f"reduced model has columns not in the full model: {extra}")
    df1 = reduced.df_residual - full.df_residual
    df2 = full.df_residual
    if df1 <= 0:
        raise ValueError(f"nested F test needs positive numerator df, got {df1}")
    num = max(reduced.residual_ss - full.residual_ss, 0.0) / df1
    den = full.residual_ss / df2
    scale = max(reduced.residual_ss, 1.0)
    if num <= 1e-14 * scale:
        return FTest(0.0, df1, df2, 1.0)
    if den <= 0:
        return FTest(float("inf"), df1, df2, 0.0)
    f = num / den
    return FTest(f, df1, df2, f_tail(f, df1, df2))


def one_way_anova(groups) -> FTest:
    """Classical one-way ANOVA F across a list of samples."""
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2:
        raise ValueError("one-way ANOVA needs at least two groups")
    if any(g.size == 0 for g in groups):
        raise ValueError("one-way ANOVA group is empty")
    allv = np.concatenate(groups)
    n, k = allv.size, len(groups)
    if n <= k:
        raise ValueError("one-way ANOVA needs more observations than groups")
    grand = allv.mean()
    ss_between = sum(g.size * (g.mean() - grand) ** 2 for g in groups)
    ss_within = sum(float(np.sum((g - g.mean()) ** 2)) for g in groups)
    df1, df2 = k - 1, n - k
    if ss_between <= 1e-14 * max(ss_between + ss_within, 1.0):
        return FTest(0.0, df1, df2, 1.0)
    if ss_within <= 0:
        return FTest(float("inf"), df1, df2, 0.0)
    f = (ss_between / df1) / (ss_within / df2)
    return FTest(f, df1, df2, f_tail(f, df1, df2))


def anova_contrast(groups, weights) -> FTest:
    """Single-df contrast on group means, tested against the pooled within-group MSE."""
    groups = [np.asarray(g, dtype=float) for g in groups]
    weights = np.asarray(weights, dtype=float)
    if len(weights) != len(groups):
        raise ValueError("one contrast weight per group is required")
    if abs(weights.sum()) > 1e-12:
        raise ValueError("contrast weights must sum to zero")
    n = sum(g.size for g in groups)
    k = len(groups)
    df2 = n - k
    if df2 < 1:
        raise ValueError("contrast needs more observations than groups")
    means = np.array([g.mean() for g in groups])
    sizes = np.array([g.size for g in groups], dtype=float)
    mse = sum(float(np.sum((g - g.mean()) ** 2)) for g in groups) / df2
    est = float(weights @ means)
    if est * est <= 1e-28:
        return FTest(0.0, 1, df2, 1.0)
    if mse <= 0:
        return FTest(float("inf"), 1, df2, 0.0)
    f = est * est / (mse * float(np.sum(weights**2 / sizes)))
    return FTest(f, 1, df2, f_tail(f, 1, df2))
