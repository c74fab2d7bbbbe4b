"""Compliance, quarter, carryover and heterogeneity checks, and the effect-size table."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..model import PAPER_FAMILIES, ComplianceRecord, Design, EffectReport, Roster
from ..stats import (
    DegenerateDataError,
    FTest,
    TTest,
    anova_contrast,
    f_test_nested,
    loess,
    ols,
    one_way_anova,
    standardized_difference,
    welch_t,
)
from .estimator import DiffList, StudentDiff, effect_estimate, pool_terms


def _record_map(records) -> dict[str, ComplianceRecord]:
    if isinstance(records, Mapping):
        return dict(records)
    return {r.student_id: r for r in records}


def compliance_filter(diffs: Sequence[StudentDiff], records, threshold: int) -> tuple[DiffList, DiffList]:
    """Split into (compliers, noncompliers) by ``completed >= threshold``."""
    recs = _record_map(records)
    compliers, noncompliers = DiffList(), DiffList()
    for d in diffs:
        rec = recs.get(d.student_id)
        if rec is None:
            raise KeyError(f"no compliance record for student {d.student_id!r}")
        (compliers if rec.completed >= threshold else noncompliers).append(d)
    return compliers, noncompliers


@dataclass(frozen=True)
class SensitivityRow:
    threshold: int
    compliance_rate: float
    n_compliers: int
    short: EffectReport | None
    long: EffectReport | None
    noncomplier_short: EffectReport | None
    noncomplier_long: EffectReport | None


def _maybe_estimate(diffs):
    try:
        return effect_estimate(diffs)
    except DegenerateDataError:
        return None


def compliance_sensitivity(diffs_short, records, thresholds, diffs_long=None) -> list[SensitivityRow]:
    """Complier and noncomplier effects for each compliance threshold.

    Estimates that cannot be formed (fewer than two students) are None.
    """
    recs = _record_map(records)
    rows = []
    for thr in thresholds:
        comp_s, non_s = compliance_filter(diffs_short, recs, thr)
        comp_l = non_l = None
        if diffs_long is not None:
            comp_l, non_l = compliance_filter(diffs_long, recs, thr)
        rate = float(np.mean([r.completed >= thr for r in recs.values()])) if recs else float("nan")
        rows.append(
            SensitivityRow(
                threshold=int(thr),
                compliance_rate=rate,
                n_compliers=len(comp_s),
                short=_maybe_estimate(comp_s),
                long=_maybe_estimate(comp_l) if comp_l is not None else None,
                noncomplier_short=_maybe_estimate(non_s),
                noncomplier_long=_maybe_estimate(non_l) if non_l is not None else None,
            )
        )
    return rows


def quarter_effect_test(diffs_by_term: Mapping[str, Sequence[StudentDiff]]) -> TTest:
    """Welch test of equal mean difference in the two terms (first minus second)."""
    if len(diffs_by_term) != 2:
        raise ValueError(f"quarter effect test needs exactly 2 terms, got {len(diffs_by_term)}")
    a, b = ([d.d for d in diffs] for diffs in diffs_by_term.values())
    return welch_t(a, b)


@dataclass(frozen=True)
class CarryoverReport:
    anova: FTest
    contrast: FTest | None
    group_means: dict[str, float]
    group_sizes: dict[str, int]
    dropped: tuple[str, ...] = ()


def carryover_test(diffs: Sequence[StudentDiff], design: Design) -> CarryoverReport:
    """One-way ANOVA of the differences across arm-pattern groups, plus the
    single-df contrast of pattern family TCTC/CTCT against TCCT/CTTC."""
    groups: dict[str, list[float]] = {}
    for d in diffs:
        groups.setdefault(str(design.assignment[d.student_id]), []).append(d.d)
    dropped = tuple(sorted(g for g, v in groups.items() if len(v) < 2))
    if dropped:
        warnings.warn(f"dropping arm-pattern group(s) with fewer than 2 members: {list(dropped)}")
    groups = {g: v for g, v in sorted(groups.items()) if len(v) >= 2}
    if len(groups) < 2:
        raise DegenerateDataError("carryover test needs at least 2 arm-pattern groups")
    names = list(groups)
    samples = [groups[g] for g in names]
    anova = one_way_anova(samples)
    contrast = None
    fam_a, fam_b = PAPER_FAMILIES
    in_a = [g in fam_a for g in names]
    in_b = [g in fam_b for g in names]
    if design.m == 4 and any(in_a) and any(in_b) and all(x or y for x, y in zip(in_a, in_b)):
        w = np.array([1.0 / sum(in_a) if x else -1.0 / sum(in_b) for x in in_a])
        contrast = anova_contrast(samples, w)
    return CarryoverReport(
        anova=anova,
        contrast=contrast,
        group_means={g: float(np.mean(v)) for g, v in groups.items()},
        group_sizes={g: len(v) for g, v in groups.items()},
        dropped=dropped,
    )


def _baseline_z(students) -> dict[str, float]:
    """Baseline z-scored within each term (terms use different Unit 1 quizzes)."""
    by_term: dict[str, list] = {}
    for s in students:
        by_term.setdefault(s.term, []).append(s)
    out = {}
    for group in by_term.values():
        xs = np.array([s.baseline for s in group], dtype=float)
        sd = xs.std(ddof=1) if xs.size > 1 else 0.0
        for s, x in zip(group, xs):
            out[s.id] = float((x - xs.mean()) / sd) if sd > 0 else 0.0
    return out


@dataclass(frozen=True)
class HeterogeneityReport:
    full: FTest
    gender: FTest
    race: FTest
    baseline: FTest
    baseline_intercept: float
    baseline_slope: float
    columns: tuple[str, ...]
    curve: list[dict] = field(repr=False, default_factory=list)


def heterogeneity(diffs: Sequence[StudentDiff], roster: Roster, span: float = 0.75, degree: int = 1) -> HeterogeneityReport:
    """Regress the per-student differences on covariates.

    The full model uses gender, URM, prior statistics, advanced math,
    within-term baseline z-score and class-year indicators, tested against
    the intercept-only model. Gender-only, race-only and baseline-only
    models are tested the same way, and a loess curve of the difference on
    baseline is returned for plotting.
    """
    by_id = {s.id: s for s in roster}
    missing = [d.student_id for d in diffs if d.student_id not in by_id]
    if missing:
        raise KeyError(f"no roster entry for students {missing[:5]}")
    students = [by_id[d.student_id] for d in diffs]
    y = np.array([d.d for d in diffs], dtype=float)
    n = y.size
    bz = _baseline_z(students)
    base = np.array([bz[s.id] for s in students])
    one = np.ones(n)

    cols = {"intercept": one}
    for name in ("gender", "urm", "ap_stats", "math_adv"):
        cols[name] = np.array([getattr(s, name) for s in students], dtype=float)
    cols["baseline"] = base
    years = sorted({s.class_year for s in students})
    for lvl in years[1:]:
        cols[f"class_year_{lvl}"] = np.array([s.class_year == lvl for s in students], dtype=float)
    names = tuple(cols)
    X = np.column_stack([cols[c] for c in names])

    null = ols(one[:, None], y, ["intercept"])

    def nested(extra):
        fit = ols(np.column_stack([one] + [cols[c] for c in extra]), y, ["intercept", *extra])
        return fit, f_test_nested(fit, null)

    full = f_test_nested(ols(X, y, names), null)
    _, gender = nested(["gender"])
    _, race = nested(["urm"])
    base_fit, base_test = nested(["baseline"])

    raw = np.array([s.baseline for s in students], dtype=float)
    curve = []
    if n >= 5:
        fitted = loess(base, y, span=span, degree=degree)
        lin = base_fit.coefficients[0] + base_fit.coefficients[1] * base
        order = np.argsort(base, kind="stable")
        for k in order:
            curve.append(
                {
                    "student_id": students[k].id,
                    "term": students[k].term,
                    "baseline": float(raw[k]),
                    "baseline_z": float(base[k]),
                    "d": float(y[k]),
                    "linear_fit": float(lin[k]),
                    "loess_fit": float(fitted[k]),
                }
            )
    return HeterogeneityReport(
        full=full,
        gender=gender,
        race=race,
        baseline=base_test,
        baseline_intercept=float(base_fit.coefficients[0]),
        baseline_slope=float(base_fit.coefficients[1]),
        columns=names,
        curve=curve,
    )


CORRELATES = (
    ("gender", "Gender achievement gap (1 = male)"),
    ("urm", "Racial achievement gap (1 = URM)"),
    ("ap_stats", "Statistics background (1 = passed AP stats)"),
    ("math_adv", "Math background (1 = course beyond calculus)"),
    ("upperclassman", "Class year (1 = upperclassman)"),
)


@dataclass(frozen=True)
class EffectRow:
    factor: str
    label: str
    column: str
    estimate: float | None
    se: float | None
    n: int
    report: EffectReport | None = None


def effect_table(diffs_short, diffs_long, roster: Roster, baseline_scores: Mapping[str, float] | None = None):
    """Effect sizes overall and per term.

    Peer-assessment rows come from the estimator. Correlate rows are the
    difference in mean baseline score between the covariate's 1 and 0
    groups, in SD units of the term's baseline (for the overall column, the
    within-term z-scores are pooled), with a Welch standard error.
    """
    students = list(roster)
    if baseline_scores is not None:
        from dataclasses import replace

        students = [replace(s, baseline=float(baseline_scores[s.id])) for s in students if s.id in baseline_scores]
    students = [s for s in students if math.isfinite(s.baseline)]
    terms = sorted({s.term for s in students} | {d.term for d in diffs_short})
    columns = ["overall"] + (terms if len(terms) > 1 else [])

    rows = []
    for factor, label, diffs in (
        ("peer_short", "Peer assessment (short term)", diffs_short),
        ("peer_long", "Peer assessment (long term)", diffs_long),
    ):
        if diffs is None:
            continue
        for col in columns:
            sub = list(diffs) if col == "overall" else [d for d in diffs if d.term == col]
            rep = _maybe_estimate(sub)
            rows.append(
                EffectRow(factor, label, col, rep.d_bar if rep else None, rep.se if rep else None, len(sub), rep)
            )

    bz = _baseline_z(students)
    for factor, label in CORRELATES:
        for col in columns:
            sub = students if col == "overall" else [s for s in students if s.term == col]
            if col == "overall" and len(terms) > 1:
                values = [bz[s.id] for s in sub]
            else:
                values = [s.baseline for s in sub]
            groups = [int(s.covariate(factor)) for s in sub]
            try:
                est, se = standardized_difference(values, groups)
            except DegenerateDataError:
                est = se = None
            rows.append(EffectRow(factor, label, col, est, se, len(sub)))
    return rows


__all__ = [
    "CarryoverReport",
    "EffectRow",
    "HeterogeneityReport",
    "SensitivityRow",
    "carryover_test",
    "compliance_filter",
    "compliance_sensitivity",
    "effect_table",
    "heterogeneity",
    "pool_terms",
    "quarter_effect_test",
]
