import numpy as np


def standardize_columns(rows):
    """Z-score each column; zero-variance columns become zeros."""
    rows = np.asarray(rows, dtype=float)
    mu = rows.mean(axis=0)
    sd = rows.std(axis=0, ddof=1) if rows.shape[0] > 1 else np.zeros(rows.shape[1])
    sd = np.where(sd > 0, sd, 1.0)
    return (rows - mu) / sd


def pca_project(rows, k=3):
    """Project centered rows onto the top-``k`` eigenvectors of their covariance.

    Components are ordered by decreasing eigenvalue, and each component is
    signed so that its largest-magnitude loading is positive.
    """
    X = np.asarray(rows, dtype=float)
    if X.ndim != 2:
        raise ValueError("pca_project needs a 2-d array")
    n, p = X.shape
    if n < 2:
        raise ValueError("pca_project needs at least 2 rows")
    if not 1 <= k <= p:
        raise ValueError(f"k={k} must lie in [1, {p}]")
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals, kind="stable")[::-1][:k]
    V = evecs[:, order]
    lead = np.argmax(np.abs(V), axis=0)
    V = V * np.sign(V[lead, np.arange(k)])
    return Xc @ V
