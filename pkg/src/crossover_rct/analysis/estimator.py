"""Standardized-score effect estimator and its inference.

Each exam is standardized by the mean and SD of its control-group scores,
every student contributes the difference between their average treated and
average control z-score, and the mean of those differences estimates the
effect in control-SD units.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from ..model import Design, EffectReport, ExamMeta, ScoreTable
from ..stats import DegenerateDataError, mean_sd, t_tail_one_sided, t_tail_two_sided

PERM_CHUNK = 1024
ALTERNATIVES = ("two-sided", "greater", "less")


class StandardizationError(ValueError):
    def __init__(self, problems: Mapping[str, str]):
        self.problems = dict(problems)
        listing = ", ".join(f"{k} ({v})" for k, v in self.problems.items())
        super().__init__(f"cannot standardize exam(s): {listing}")


@dataclass(frozen=True, eq=False)
class StandardizedScores:
    student_ids: tuple[str, ...]
    exams: tuple[ExamMeta, ...]
    z: np.ndarray = field(repr=False)
    treatment: np.ndarray = field(repr=False)
    control_mu: dict[str, float] = field(default_factory=dict)
    control_sigma: dict[str, float] = field(default_factory=dict)

    def get(self, student_id: str, exam_id: str) -> float | None:
        i = self.student_ids.index(student_id)
        j = [e.exam_id for e in self.exams].index(exam_id)
        v = self.z[i, j]
        return None if np.isnan(v) else float(v)


@dataclass(frozen=True)
class StudentDiff:
    student_id: str
    d: float
    n_treat: int
    n_control: int
    term: str = ""


class DiffList(list):
    """A list of :class:`StudentDiff` that also remembers who was excluded."""

    def __init__(self, items=(), excluded=()):
        super().__init__(items)
        self.excluded = list(excluded)

    @property
    def values(self) -> np.ndarray:
        return np.array([d.d for d in self], dtype=float)

    @property
    def ids(self) -> list[str]:
        return [d.student_id for d in self]

    def by_term(self) -> dict[str, DiffList]:
        out: dict[str, DiffList] = {}
        for d in self:
            out.setdefault(d.term, DiffList()).append(d)
        return dict(sorted(out.items()))

    def subset(self, ids) -> DiffList:
        keep = set(ids)
        return DiffList([d for d in self if d.student_id in keep])


def kind_filter(kind: str) -> Callable[[ExamMeta], bool]:
    return lambda e: e.kind == kind


def standardize(scores: ScoreTable, design: Design) -> StandardizedScores:
    """Z-score every exam by the mean and SD of its control-group scores."""
    W = scores.treatment_matrix(design)
    Y = scores.values
    Z = np.full(Y.shape, np.nan)
    mus, sigmas, problems = {}, {}, {}
    for j, exam in enumerate(scores.exams):
        ctrl = Y[W[:, j] == 0, j]
        if ctrl.size < 2:
            problems[exam.exam_id] = f"{ctrl.size} control score(s)"
            continue
        mu, sd = mean_sd(ctrl)
        if not sd > 0:
            problems[exam.exam_id] = "zero control variance"
            continue
        mus[exam.exam_id], sigmas[exam.exam_id] = mu, sd
        Z[:, j] = (Y[:, j] - mu) / sd
    if problems:
        raise StandardizationError(problems)
    return StandardizedScores(scores.student_ids, scores.exams, Z, W, mus, sigmas)


def diff_matrix(Z: np.ndarray, W: np.ndarray):
    """Vectorized core: per-row treated mean minus control mean.

    ``W`` uses -1 for missing cells. Returns ``(d, n_treat, n_control)`` with
    NaN in ``d`` where a side is empty. Works on stacked leading axes.
    """
    treat = W == 1
    ctrl = W == 0
    Zt = np.where(treat, Z, 0.0)
    Zc = np.where(ctrl, Z, 0.0)
    nt = treat.sum(axis=-1)
    nc = ctrl.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        d = Zt.sum(axis=-1) / nt - Zc.sum(axis=-1) / nc
    d = np.where((nt > 0) & (nc > 0), d, np.nan)
    return d, nt, nc


def student_diffs(z: StandardizedScores, exam_filter: Callable[[ExamMeta], bool] | str | None = None) -> DiffList:
    """Per-student treated-minus-control mean z-score.

    ``exam_filter`` is a predicate on :class:`ExamMeta` or an exam kind.
    Students lacking a treated or a control exam are excluded and listed in
    the result's ``excluded`` attribute.
    """
    if isinstance(exam_filter, str):
        exam_filter = kind_filter(exam_filter)
    cols = [j for j, e in enumerate(z.exams) if exam_filter is None or exam_filter(e)]
    Z = z.z[:, cols]
    W = z.treatment[:, cols]
    d, nt, nc = diff_matrix(Z, W)
    terms = [e.term for e in z.exams]
    out, excluded = [], []
    for i, sid in enumerate(z.student_ids):
        if np.isnan(d[i]):
            excluded.append(sid)
            continue
        seen = [terms[cols[k]] for k in range(len(cols)) if W[i, k] >= 0]
        out.append(StudentDiff(sid, float(d[i]), int(nt[i]), int(nc[i]), seen[0] if seen else ""))
    return DiffList(out, excluded)


def _p_from_t(t, df, alternative):
    if alternative == "two-sided":
        return t_tail_two_sided(t, df)
    if alternative == "greater":
        return t_tail_one_sided(t, df)
    if alternative == "less":
        return t_tail_one_sided(-t, df)
    raise ValueError(f"alternative must be one of {ALTERNATIVES}")


def effect_estimate(diffs: Sequence[StudentDiff], alternative: str = "two-sided") -> EffectReport:
    """Mean difference, its standard error, and the t-based p-value."""
    values = np.array([d.d for d in diffs], dtype=float)
    n = values.size
    if n < 2:
        raise DegenerateDataError(f"effect estimate needs at least 2 students, got {n}")
    d_bar, sd = mean_sd(values)
    se = sd / math.sqrt(n)
    if not se > 0:
        raise DegenerateDataError("all student differences are equal; the standard error is zero")
    t = d_bar / se
    return EffectReport(
        d_bar=d_bar,
        se=se,
        n_used=n,
        t_stat=t,
        df=n - 1,
        p_asymptotic=_p_from_t(t, n - 1, alternative),
        alternative=alternative,
    )


@dataclass(frozen=True, eq=False)
class PermutationResult:
    p_value: float
    observed: float
    distribution: np.ndarray = field(repr=False)
    n_permutations: int = 0
    alternative: str = "two-sided"


def _flip_groups(ids: Sequence[str], design: Design | None) -> np.ndarray:
    """Group index per student: pair members share a group, others stand alone."""
    partner = design.partner() if design is not None else {}
    if not partner:
        warnings.warn("design has no pair structure; permuting each student independently")
    index = {}
    groups = np.empty(len(ids), dtype=int)
    for k, sid in enumerate(ids):
        key = min(sid, partner[sid]) if sid in partner else sid
        groups[k] = index.setdefault(key, len(index))
    return groups


def permutation_test(
    diffs: Sequence[StudentDiff],
    design: Design | None,
    n_perm: int = 10_000,
    seed: int = 0,
    alternative: str = "two-sided",
) -> PermutationResult:
    """Randomization test of the sharp null of no effect for anyone.

    Each replicate redraws the design's coins: a pair's members trade
    patterns with probability 1/2, which reverses the sign of both their
    differences, and an unpaired student flips to the complementary pattern
    with probability 1/2. Replicates are generated in fixed chunks of
    ``PERM_CHUNK`` whose generator is seeded from ``(seed, chunk index)``, so
    the output does not depend on how chunks are scheduled.
    """
    if n_perm < 100:
        raise ValueError("n_perm must be at least 100")
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}")
    values = np.array([d.d for d in diffs], dtype=float)
    n = values.size
    if n < 1:
        raise DegenerateDataError("permutation test needs at least one student")
    groups = _flip_groups([d.student_id for d in diffs], design)
    sums = np.bincount(groups, weights=values)
    observed = float(values.mean())

    dist = np.empty(n_perm)
    for c, start in enumerate(range(0, n_perm, PERM_CHUNK)):
        size = min(PERM_CHUNK, n_perm - start)
        rng = np.random.default_rng([int(seed), c])
        signs = rng.integers(0, 2, size=(size, sums.size)) * 2.0 - 1.0
        dist[start : start + size] = signs @ sums / n

    tol = 1e-12 * max(1.0, abs(observed))
    if alternative == "two-sided":
        hits = np.count_nonzero(np.abs(dist) >= abs(observed) - tol)
    elif alternative == "greater":
        hits = np.count_nonzero(dist >= observed - tol)
    else:
        hits = np.count_nonzero(dist <= observed + tol)
    p = (1 + hits) / (1 + n_perm)
    return PermutationResult(p, observed, dist, n_perm, alternative)


def pool_terms(diffs_by_term: Mapping[str, Sequence[StudentDiff]]) -> DiffList:
    """Concatenate per-term differences without re-weighting."""
    out = DiffList()
    seen: dict[str, str] = {}
    for term, diffs in diffs_by_term.items():
        for d in diffs:
            if d.student_id in seen:
                raise ValueError(
                    f"student {d.student_id!r} appears in terms {seen[d.student_id]!r} and {term!r}"
                )
            seen[d.student_id] = term
            out.append(d)
        out.excluded.extend(getattr(diffs, "excluded", []))
    return out


def with_permutation(report: EffectReport, perm: PermutationResult | None) -> EffectReport:
    if perm is None:
        return report
    from dataclasses import replace

    return replace(report, p_permutation=perm.p_value, n_permutations=perm.n_permutations)


def analyze(
    scores: ScoreTable,
    design: Design,
    exam_filter="quiz",
    n_perm: int = 10_000,
    seed: int = 0,
    keep_ids=None,
    alternative: str = "two-sided",
):
    """Full pipeline: standardize, difference, estimate, permutation-test.

    ``keep_ids`` optionally restricts the students whose differences enter
    the estimate (compliers, one term). ``n_perm=0`` skips the permutation
    test. Returns ``(report, diffs, permutation_result_or_None)``.
    """
    z = standardize(scores, design)
    diffs = student_diffs(z, exam_filter)
    if keep_ids is not None:
        diffs = diffs.subset(keep_ids)
    report = effect_estimate(diffs, alternative)
    perm = None
    if n_perm:
        perm = permutation_test(diffs, design, n_perm, seed, alternative)
    return with_permutation(report, perm), diffs, perm
