"""Local regression smoother."""

import numpy as np

_CHUNK = 512


def _tricube(u):
    u = np.clip(np.abs(u), 0.0, 1.0)
    return (1.0 - u**3) ** 3


def loess(xs, ys, span=0.75, degree=1, at=None):
    """Tricube-weighted local polynomial fit.

    Each fit uses the ``ceil(span * n)`` nearest neighbours of the target
    point, weighted by the tricube of distance over the largest neighbour
    distance. Returns fitted values at ``at`` (defaults to ``xs``).
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("loess needs 1-d xs and ys of equal length")
    n = xs.size
    if n < 5:
        raise ValueError("loess needs at least 5 points")
    if not np.all(np.isfinite(xs)):
        raise ValueError("loess xs must be finite")
    if not 0 < span <= 1:
        raise ValueError("span must lie in (0, 1]")
    if degree not in (0, 1):
        raise ValueError("degree must be 0 or 1")
    k = int(np.ceil(span * n))
    if k < degree + 2:
        raise ValueError(f"span {span} leaves {k} neighbours; degree {degree} needs {degree + 2}")
    targets = xs if at is None else np.asarray(at, dtype=float)

    out = np.empty(targets.size)
    for lo in range(0, targets.size, _CHUNK):
        out[lo : lo + _CHUNK] = _fit_rows(xs, ys, targets[lo : lo + _CHUNK], k, degree)
    return out


def _fit_rows(xs, ys, x0, k, degree):
    dist = np.abs(x0[:, None] - xs[None, :])
    h = np.partition(dist, k - 1, axis=1)[:, k - 1 : k]
    inside = dist <= h
    # widen slightly so the farthest neighbour keeps a positive weight
    w = np.where(h > 0, _tricube(dist / np.where(h > 0, h * (1.0 + 1e-10), 1.0)), 1.0) * inside
    sw = w.sum(axis=1)
    xw = (w @ xs) / sw
    yw = (w @ ys) / sw
    if degree == 0:
        return yw
    dx = xs[None, :] - xw[:, None]
    sxx = np.sum(w * dx**2, axis=1)
    sxy = np.sum(w * dx * (ys[None, :] - yw[:, None]), axis=1)
    # a zero spread of neighbours falls back to the local mean
    slope = np.divide(sxy, sxx, out=np.zeros_like(sxx), where=sxx > 0)
    return yw + slope * (x0 - xw)
