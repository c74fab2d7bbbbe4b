"""Command-line interface: ``crossover-rct {design,analyze,diagnose,simulate,power}``.

Every subcommand writes comma-separated outputs plus ``manifest.json`` into
``--out`` and exits 0 on success, or 1 with a one-line reason on failure.
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

from . import io
from .analysis import (
    carryover_test,
    compliance_filter,
    compliance_sensitivity,
    effect_estimate,
    effect_table,
    heterogeneity,
    permutation_test,
    quarter_effect_test,
    standardize,
    student_diffs,
    with_permutation,
)
from .design import DistanceConfig, balance_report, figure1_data, make_design
from .simulator import SimScenario, power_curve, simulate

SEED_ENV = "CROSSOVER_RCT_SEED"

EFFECT_COLUMNS = (
    "factor", "label", "column", "estimate", "se", "n",
    "t_stat", "df", "p_asymptotic", "p_permutation", "n_permutations",
)


def _default_seed() -> int:
    return int(os.environ.get(SEED_ENV, "0"))


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _distance_config(args) -> DistanceConfig:
    numeric = ["class_year"] if args.no_baseline else ["baseline", "class_year"]
    weights = {}
    for item in args.weight or []:
        name, _, value = item.partition("=")
        weights[name] = float(value)
    return DistanceConfig(numeric_fields=tuple(numeric), weights=weights)


def _balance_rows(design, roster):
    rows = []
    terms = sorted({s.term for s in roster})
    for term in terms:
        members = [s for s in roster if s.term == term]
        for r in balance_report(design, members):
            row = asdict(r)
            row["term"] = term
            rows.append(row)
    return rows


BALANCE_COLUMNS = ("term", "covariate", "test", "statistic", "df1", "df2", "p", "n", "note")


def cmd_design(args) -> int:
    roster = io.read_roster(args.roster)
    cfg = _distance_config(args)
    design = make_design(roster, args.seed, cfg, mode=args.mode, m=args.m, first_unit=args.first_unit)
    out = _out_dir(args.out)
    io.write_design(design, out / "design.json")
    io.write_csv(out / "balance.csv", _balance_rows(design, roster), BALANCE_COLUMNS)
    fig = figure1_data(design, roster, cfg)
    io.write_csv(out / "figure1_points.csv", fig.points, ("student_id", "pc1", "pc2", "pc3", "pattern"))
    io.write_csv(out / "figure1_edges.csv", fig.edges, ("scheme", "a", "b", "length"))
    io.write_manifest(out, "design", {"roster": args.roster}, args.seed, sys.argv)
    return 0


def _report_row(factor, label, column, rep, n=None):
    row = {"factor": factor, "label": label, "column": column}
    if rep is not None:
        row.update(
            estimate=rep.d_bar, se=rep.se, n=rep.n_used, t_stat=rep.t_stat, df=rep.df,
            p_asymptotic=rep.p_asymptotic, p_permutation=rep.p_permutation,
            n_permutations=rep.n_permutations,
        )
    else:
        row["n"] = n
    return row


def _load_common(args):
    design = io.read_design(args.design)
    scores = io.read_scores(args.scores, args.exams)
    records = io.read_compliance(args.compliance) if getattr(args, "compliance", None) else None
    roster = io.read_roster(args.roster) if getattr(args, "roster", None) else None
    return design, scores, records, roster


def cmd_analyze(args) -> int:
    design, scores, records, roster = _load_common(args)
    z = standardize(scores, design)
    kinds = {e.kind for e in scores.exams}
    diffs = {k: student_diffs(z, k) for k in ("quiz", "final_section") if k in kinds}
    if records is not None:
        diffs = {k: compliance_filter(v, records, args.threshold)[0] for k, v in diffs.items()}
    factor_of = {"quiz": "peer_short", "final_section": "peer_long"}

    rows, perm_rows = [], []
    if roster is not None:
        table = effect_table(diffs.get("quiz"), diffs.get("final_section"), roster)
        for r in table:
            if r.factor.startswith("peer"):
                continue
            rows.append({"factor": r.factor, "label": r.label, "column": r.column,
                         "estimate": r.estimate, "se": r.se, "n": r.n})
    peer_rows = []
    for kind, dl in diffs.items():
        columns = {"overall": dl}
        by_term = dl.by_term()
        if len(by_term) > 1:
            columns.update(by_term)
        for col, sub in columns.items():
            label = "Peer assessment (short term)" if kind == "quiz" else "Peer assessment (long term)"
            try:
                rep = effect_estimate(sub, args.alternative)
            except ValueError:
                peer_rows.append(_report_row(factor_of[kind], label, col, None, len(sub)))
                continue
            if args.permutations:
                perm = permutation_test(sub, design, args.permutations, args.seed, args.alternative)
                rep = with_permutation(rep, perm)
                if col == "overall":
                    perm_rows.extend(
                        {"factor": factor_of[kind], "replicate": i, "d_bar": float(v), "observed": perm.observed}
                        for i, v in enumerate(perm.distribution)
                    )
            peer_rows.append(_report_row(factor_of[kind], label, col, rep))
    rows = peer_rows + rows

    out = _out_dir(args.out)
    columns = EFFECT_COLUMNS if args.permutations else tuple(c for c in EFFECT_COLUMNS if c not in ("p_permutation", "n_permutations"))
    io.write_csv(out / "effect_report.csv", rows, columns)
    if args.permutations:
        io.write_csv(out / "permutation_distribution.csv", perm_rows, ("factor", "replicate", "d_bar", "observed"))

    W = scores.treatment_matrix(design)
    dist_rows = []
    for j, e in enumerate(scores.exams):
        for i, sid in enumerate(scores.student_ids):
            if W[i, j] < 0:
                continue
            dist_rows.append({
                "term": e.term, "exam_id": e.exam_id, "unit": e.unit, "kind": e.kind,
                "student_id": sid, "arm": "treatment" if W[i, j] else "control",
                "score": float(scores.values[i, j]),
            })
    io.write_csv(out / "score_distribution.csv", dist_rows,
                 ("term", "exam_id", "unit", "kind", "student_id", "arm", "score"))

    diff_rows = []
    for kind, dl in diffs.items():
        for d in dl:
            diff_rows.append({"factor": factor_of[kind], "student_id": d.student_id, "term": d.term,
                              "d": d.d, "n_treat": d.n_treat, "n_control": d.n_control})
    io.write_csv(out / "student_diffs.csv", diff_rows, ("factor", "student_id", "term", "d", "n_treat", "n_control"))
    io.write_manifest(
        out, "analyze",
        {"design": args.design, "scores": args.scores, "exams": args.exams,
         "compliance": args.compliance, "roster": args.roster},
        args.seed, sys.argv,
    )
    return 0


def _ftest_row(name, test, res):
    if res is None:
        return {"test": name, "kind": test}
    return {"test": name, "kind": test, "statistic": res.f, "df1": res.df1, "df2": res.df2, "p": res.p}


DIAG_COLUMNS = ("test", "kind", "statistic", "df1", "df2", "p", "estimate", "se", "note")


def cmd_diagnose(args) -> int:
    design, scores, records, roster = _load_common(args)
    out = _out_dir(args.out)
    z = standardize(scores, design)
    kinds = {e.kind for e in scores.exams}
    short = student_diffs(z, "quiz")
    long = student_diffs(z, "final_section") if "final_section" in kinds else None
    analysed = short
    if records is not None:
        analysed = compliance_filter(short, records, args.threshold)[0]

    io.write_csv(out / "balance.csv", _balance_rows(design, roster), BALANCE_COLUMNS)

    by_term = analysed.by_term()
    rows = []
    try:
        q = quarter_effect_test(by_term)
        rows.append({"test": "quarter", "kind": "welch_t", "statistic": q.t, "df1": q.df, "p": q.p,
                     "estimate": q.estimate, "se": q.se})
    except ValueError as exc:
        rows.append({"test": "quarter", "kind": "welch_t", "note": str(exc)})
    io.write_csv(out / "quarter_effect.csv", rows, DIAG_COLUMNS)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        carry = carryover_test(analysed, design)
    rows = [_ftest_row("carryover_groups", "anova", carry.anova),
            _ftest_row("carryover_family_contrast", "contrast", carry.contrast)]
    for g, mu in carry.group_means.items():
        rows.append({"test": f"group_mean_{g}", "kind": "mean", "estimate": mu,
                     "note": f"n={carry.group_sizes[g]}"})
    io.write_csv(out / "carryover.csv", rows, DIAG_COLUMNS)

    het = heterogeneity(analysed, roster, span=args.span)
    rows = [
        _ftest_row("full_model", "nested_f", het.full),
        _ftest_row("gender_only", "nested_f", het.gender),
        _ftest_row("race_only", "nested_f", het.race),
        _ftest_row("baseline_linear", "nested_f", het.baseline),
        {"test": "baseline_slope", "kind": "coefficient", "estimate": het.baseline_slope},
        {"test": "baseline_intercept", "kind": "coefficient", "estimate": het.baseline_intercept},
    ]
    io.write_csv(out / "heterogeneity.csv", rows, DIAG_COLUMNS)
    io.write_csv(out / "figure6_heterogeneity.csv", het.curve,
                 ("student_id", "term", "baseline", "baseline_z", "d", "linear_fit", "loess_fit"))

    if records is not None:
        sens = compliance_sensitivity(short, records, args.thresholds, long)
        srows = []
        for r in sens:
            row = {"threshold": r.threshold, "compliance_rate": r.compliance_rate, "n_compliers": r.n_compliers}
            for key in ("short", "long", "noncomplier_short", "noncomplier_long"):
                rep = getattr(r, key)
                row[f"{key}_d"] = rep.d_bar if rep else None
                row[f"{key}_se"] = rep.se if rep else None
                row[f"{key}_t"] = rep.t_stat if rep else None
                row[f"{key}_p"] = rep.p_asymptotic if rep else None
            srows.append(row)
        cols = ["threshold", "compliance_rate", "n_compliers"] + [
            f"{k}_{s}" for k in ("short", "long", "noncomplier_short", "noncomplier_long") for s in ("d", "se", "t", "p")
        ]
        io.write_csv(out / "compliance_sensitivity.csv", srows, cols)
        term_of = {s.id: s.term for s in roster}
        counts = {}
        for rec in records:
            key = (term_of.get(rec.student_id, ""), rec.completed)
            counts[key] = counts.get(key, 0) + 1
        hist = [{"term": t, "completed": c, "count": k} for (t, c), k in sorted(counts.items())]
        io.write_csv(out / "figure5_compliance.csv", hist, ("term", "completed", "count"))

    io.write_manifest(
        out, "diagnose",
        {"design": args.design, "scores": args.scores, "exams": args.exams,
         "compliance": args.compliance, "roster": args.roster},
        None, sys.argv,
    )
    return 0


def cmd_simulate(args) -> int:
    data = io.read_json(args.scenario)
    if args.seed is not None:
        data["seed"] = args.seed
    scenario = SimScenario.from_dict(data)
    ds = simulate(scenario, args.replicate)
    out = _out_dir(args.out)
    io.write_roster(ds.roster, out / "roster.csv")
    io.write_scores(ds.scores, out / "scores.csv", out / "exams.csv")
    io.write_compliance(ds.compliance, out / "compliance.csv")
    io.write_design(ds.design, out / "design.json")
    truth = [
        {"student_id": s.id, "term": s.term, "theta": float(ds.truth.theta[i]),
         "tau_i": float(ds.truth.tau_i[i]), "complier": int(ds.truth.complier[i]),
         "pattern": str(ds.design.assignment[s.id])}
        for i, s in enumerate(ds.roster)
    ]
    io.write_csv(out / "truth.csv", truth, ("student_id", "term", "theta", "tau_i", "complier", "pattern"))
    io.write_json(scenario.to_dict(), out / "scenario.json")
    io.write_manifest(out, "simulate", {"scenario": args.scenario}, scenario.seed, sys.argv)
    return 0


def _expand_grid(grid):
    if isinstance(grid, dict):
        keys = sorted(grid)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    return list(grid)


def cmd_power(args) -> int:
    spec = io.read_json(args.grid)
    base = SimScenario.from_dict(spec.get("base", {}))
    grid = _expand_grid(spec.get("grid", [{}]))
    n_reps = args.reps if args.reps is not None else int(spec.get("n_reps", 200))
    alpha = args.alpha if args.alpha is not None else float(spec.get("alpha", 0.05))
    test = spec.get("test", "asymptotic")
    rows = power_curve(base, grid, alpha=alpha, n_reps=n_reps, test=test, n_perm=int(spec.get("n_perm", 999)))
    out = _out_dir(args.out)
    io.write_csv(out / "power.csv", (asdict(r) for r in rows),
                 ("tau", "n_students", "design_kind", "power", "n_reps", "alpha"))
    io.write_manifest(out, "power", {"grid": args.grid}, base.seed, sys.argv)
    return 0


def _thresholds(text):
    return [int(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crossover-rct", description="Design and analyze matched-pairs crossover trials.")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", help="block, match and randomize a roster")
    d.add_argument("--roster", required=True)
    d.add_argument("--seed", type=int, default=None)
    d.add_argument("--mode", choices=("paper", "general"), default="paper")
    d.add_argument("--m", type=int, default=4, help="number of studied units")
    d.add_argument("--first-unit", type=int, default=2)
    d.add_argument("--no-baseline", action="store_true", help="do not match on the baseline score")
    d.add_argument("--weight", action="append", metavar="FIELD=W", help="distance weight for a covariate")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_design)

    for name, func, helptext in (
        ("analyze", cmd_analyze, "estimate the effect size with t and permutation p-values"),
        ("diagnose", cmd_diagnose, "balance, quarter, carryover, heterogeneity and compliance checks"),
    ):
        a = sub.add_parser(name, help=helptext)
        a.add_argument("--design", required=True)
        a.add_argument("--scores", required=True)
        a.add_argument("--exams", required=True)
        a.add_argument("--compliance")
        a.add_argument("--threshold", type=int, default=10, help="minimum completed assessments to count as a complier")
        a.add_argument("--roster", required=name == "diagnose")
        a.add_argument("--out", required=True)
        if name == "analyze":
            a.add_argument("--permutations", type=int, default=10_000)
            a.add_argument("--seed", type=int, default=None)
            a.add_argument("--alternative", choices=("two-sided", "greater", "less"), default="two-sided")
        else:
            a.add_argument("--thresholds", type=_thresholds, default=[8, 10, 12])
            a.add_argument("--span", type=float, default=0.75)
        a.set_defaults(func=func)

    s = sub.add_parser("simulate", help="generate a synthetic dataset from a scenario file")
    s.add_argument("--scenario", required=True)
    s.add_argument("--replicate", type=int, default=0)
    s.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("power", help="Monte Carlo power over a scenario grid")
    w.add_argument("--grid", required=True)
    w.add_argument("--reps", type=int, default=None)
    w.add_argument("--alpha", type=float, default=None)
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_power)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", "absent") is None and args.command in ("design", "analyze"):
        args.seed = _default_seed()
    if args.command == "analyze" and args.permutations and args.permutations < 100:
        print("error: --permutations must be 0 or at least 100", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        msg = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
