"""Matched-pairs randomization for the crossover design.

Students are blocked on the exact (gender, urm, ap_stats) tuple, paired
within each block by a minimum-total-distance perfect matching, and each
pair is then randomized to complementary arm patterns.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import groupby
from typing import Mapping, Sequence

import networkx as nx
import numpy as np

from .model import (
    ArmPattern,
    Design,
    Roster,
    Student,
    admissible_patterns,
    pattern_families,
    validate_roster,
)
from .stats import DegenerateDataError, chi2_independence, one_way_anova, pca_project
from .stats.pca import standardize_columns

BLOCK_FIELDS = ("gender", "urm", "ap_stats")
# distances are quantized to integers so the blossom solver runs in exact arithmetic
_QUANT = 2**40


@dataclass(frozen=True)
class DistanceConfig:
    numeric_fields: tuple[str, ...] = ("baseline", "class_year")
    categorical_fields: tuple[str, ...] = ("gender", "urm", "ap_stats", "math_adv")
    weights: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not (self.numeric_fields or self.categorical_fields):
            raise ValueError("DistanceConfig needs at least one field")
        for name, w in self.weights.items():
            if not (math.isfinite(w) and w >= 0):
                raise ValueError(f"weight for {name!r} must be finite and nonnegative")

    @property
    def fields(self) -> tuple[str, ...]:
        return tuple(self.numeric_fields) + tuple(self.categorical_fields)

    def weight(self, name: str) -> float:
        return float(self.weights.get(name, 1.0))


def roster_stats(roster: Roster, cfg: DistanceConfig) -> dict[str, tuple[float, float]]:
    """Mean and sample SD of each numeric field over the whole roster."""
    out = {}
    for name in cfg.numeric_fields:
        xs = np.array([s.covariate(name) for s in roster], dtype=float)
        sd = float(xs.std(ddof=1)) if xs.size > 1 else 0.0
        out[name] = (float(xs.mean()) if xs.size else 0.0, sd)
    return out


def encode(students: Sequence[Student], cfg: DistanceConfig, stats) -> np.ndarray:
    """Weighted, standardized covariate vectors; Euclidean distance on these rows
    is the matching distance."""
    cols = []
    for name in cfg.numeric_fields:
        mu, sd = stats[name]
        x = np.array([s.covariate(name) for s in students], dtype=float)
        if sd > 0:
            cols.append((x - mu) / sd * math.sqrt(cfg.weight(name)))
        else:
            warnings.warn(f"numeric field {name!r} has zero variance; it contributes 0 to distances")
            cols.append(np.zeros(len(students)))
    for name in cfg.categorical_fields:
        x = np.array([s.covariate(name) for s in students], dtype=float)
        cols.append(x * math.sqrt(cfg.weight(name)))
    return np.column_stack(cols) if cols else np.zeros((len(students), 0))


def covariate_distance(a: Student, b: Student, cfg: DistanceConfig, stats) -> float:
    va, vb = encode([a, b], cfg, stats)
    return float(np.sqrt(np.sum((va - vb) ** 2)))


def distance_matrix(students: Sequence[Student], cfg: DistanceConfig, stats) -> np.ndarray:
    X = encode(students, cfg, stats)
    diff = X[:, None, :] - X[None, :, :]
    return np.sqrt(np.sum(diff**2, axis=-1))


def block(roster: Roster) -> list[list[Student]]:
    """Partition by the exact (gender, urm, ap_stats) tuple.

    Blocks come out ordered by tuple and members ordered by id.
    """
    key = lambda s: tuple(getattr(s, f) for f in BLOCK_FIELDS)
    ordered = sorted(roster, key=lambda s: (key(s), s.id))
    return [list(g) for _, g in groupby(ordered, key=key)]


def min_weight_perfect_matching(D, tie_rank=None) -> tuple[list[tuple[int, int]], int | None]:
    """Exact minimum-cost perfect matching on a complete graph with costs ``D``.

    For an odd number of vertices a zero-cost dummy vertex absorbs exactly one
    of them; among equally cheap choices the vertex with the smallest
    ``tie_rank`` (default: index) is left out. Returns index pairs and the
    leftover index (or None).
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    if n == 0:
        return [], None
    if n == 1:
        return [], 0
    if n == 2:
        return [(0, 1)], None
    if tie_rank is None:
        tie_rank = list(range(n))
    odd = n % 2 == 1
    dmax = float(D.max())
    q = np.zeros_like(D, dtype=object)
    if dmax > 0:
        q = np.rint(D / dmax * _QUANT).astype(np.int64).astype(object)
    # lexicographic objective: quantized cost first, then the leftover's rank
    mult = n + 1 if odd else 1
    costs = {}
    for i in range(n):
        for j in range(i + 1, n):
            costs[(i, j)] = int(q[i, j]) * mult
    if odd:
        for i in range(n):
            costs[(i, n)] = int(tie_rank[i])
    top = max(costs.values()) + 1
    G = nx.Graph()
    G.add_nodes_from(range(n + odd))
    for (i, j), c in costs.items():
        G.add_edge(i, j, weight=2 * (top - c))
    mate = nx.max_weight_matching(G, maxcardinality=True, weight="weight")
    pairs = []
    leftover = None
    for i, j in mate:
        i, j = min(i, j), max(i, j)
        if j == n:
            leftover = i
        else:
            pairs.append((i, j))
    if len(pairs) * 2 + (leftover is not None) != n:
        raise RuntimeError("matching is not perfect")
    if odd and leftover is None:
        raise RuntimeError("odd block produced no leftover")
    return sorted(pairs), leftover


def matching_cost(D, pairs) -> float:
    return float(sum(D[i, j] for i, j in pairs))


def optimal_pairing(students: Sequence[Student], distances) -> tuple[list[tuple[str, str]], list[str]]:
    """Globally optimal pairing within one block.

    ``distances`` is the matrix aligned with ``students``. Odd blocks drop the
    student whose removal gives the cheapest matching of the rest, ties going
    to the smallest id.
    """
    ids = [s.id for s in students]
    rank = {sid: r for r, sid in enumerate(sorted(ids))}
    idx_pairs, left = min_weight_perfect_matching(distances, [rank[s] for s in ids])
    pairs = sorted(tuple(sorted((ids[i], ids[j]))) for i, j in idx_pairs)
    leftovers = [] if left is None else [ids[left]]
    return pairs, leftovers


def match_roster(roster: Roster, cfg: DistanceConfig | None = None):
    """Block the roster and pair within each block.

    Students from different terms are never blocked together, and numeric
    covariates are standardized within each term. Returns ``(blocks, pairs,
    leftovers)`` with blocks as id tuples.
    """
    cfg = cfg or DistanceConfig()
    problems = validate_roster(roster)
    if problems:
        raise ValueError("invalid roster: " + "; ".join(problems[:5]))
    blocks, pairs, leftovers = [], [], []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for term in sorted({s.term for s in roster}):
            members = [s for s in roster if s.term == term]
            stats = roster_stats(members, cfg)
            for blk in block(members):
                D = distance_matrix(blk, cfg, stats)
                p, left = optimal_pairing(blk, D)
                blocks.append(tuple(s.id for s in blk))
                pairs.extend(p)
                leftovers.extend(left)
    for msg in {str(w.message) for w in caught}:
        warnings.warn(msg)
    return tuple(blocks), tuple(sorted(pairs)), tuple(sorted(leftovers))


def assign_arms(
    pairs,
    leftovers,
    seed: int,
    mode: str = "paper",
    m: int = 4,
    blocks=(),
    first_unit: int = 2,
) -> Design:
    """Randomize matched pairs to complementary arm patterns.

    Per pair (taken in sorted order) one fair draw picks the pattern family
    (in paper mode groups 0/1 versus 2/3) and a second coin decides which
    member takes which pattern. Leftovers, in id order, draw uniformly from
    all admissible patterns.
    """
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    families = pattern_families(m, mode)
    patterns = admissible_patterns(m, mode)
    rng = np.random.default_rng(seed)
    assignment: dict[str, ArmPattern] = {}
    norm_pairs = tuple(sorted(tuple(sorted(p)) for p in pairs))
    for a, b in norm_pairs:
        fam = families[int(rng.integers(len(families)))]
        flip = int(rng.integers(2))
        assignment[a] = ArmPattern(fam[flip])
        assignment[b] = ArmPattern(fam[1 - flip])
    left = tuple(sorted(leftovers))
    for sid in left:
        assignment[sid] = ArmPattern(patterns[int(rng.integers(len(patterns)))])
    if not blocks:
        blocks = (tuple(sorted(assignment)),)
    return Design(
        seed=seed,
        blocks=tuple(tuple(b) for b in blocks),
        pairs=norm_pairs,
        leftovers=left,
        assignment=assignment,
        m=m,
        mode=mode,
        first_unit=first_unit,
    )


def make_design(
    roster: Roster,
    seed: int,
    cfg: DistanceConfig | None = None,
    mode: str = "paper",
    m: int = 4,
    first_unit: int = 2,
) -> Design:
    blocks, pairs, leftovers = match_roster(roster, cfg)
    return assign_arms(pairs, leftovers, seed, mode=mode, m=m, blocks=blocks, first_unit=first_unit)


@dataclass(frozen=True)
class BalanceRow:
    covariate: str
    test: str
    statistic: float | None
    df1: int | None
    df2: int | None
    p: float | None
    n: int
    note: str = ""


def balance_report(design: Design, roster: Roster, baseline_scores: Mapping[str, float] | None = None):
    """Covariate balance across arm-pattern groups.

    One-way ANOVA for the baseline score, chi-square independence tests for
    class year and each binary covariate. Students without a finite baseline
    are left out of the ANOVA only.
    """
    missing = [s.id for s in roster if s.id not in design.assignment]
    if missing:
        raise ValueError(f"students without an assignment: {missing[:5]}")
    groups = sorted({str(design.assignment[s.id]) for s in roster})
    expected = admissible_patterns(design.m, design.mode) if design.mode == "paper" else groups
    empty = [p for p in expected if p not in groups]
    if empty:
        raise ValueError(f"arm pattern group(s) {empty} have no students")
    group_of = {s.id: str(design.assignment[s.id]) for s in roster}

    rows = []
    base = {}
    for s in roster:
        y = s.baseline if baseline_scores is None else baseline_scores.get(s.id, float("nan"))
        if y is not None and math.isfinite(y):
            base[s.id] = float(y)
    samples = [[base[sid] for sid in base if group_of[sid] == g] for g in expected]
    try:
        res = one_way_anova(samples)
        rows.append(BalanceRow("baseline", "F", res.f, res.df1, res.df2, res.p, len(base)))
    except ValueError as exc:
        rows.append(BalanceRow("baseline", "F", None, None, None, None, len(base), str(exc)))

    for name in ("class_year", "gender", "urm", "ap_stats", "math_adv"):
        labels = [getattr(s, name) for s in roster]
        arms = [group_of[s.id] for s in roster]
        try:
            res = chi2_independence(labels, arms)
            rows.append(BalanceRow(name, "chi2", res.statistic, res.df, None, res.p, len(roster)))
        except DegenerateDataError as exc:
            rows.append(BalanceRow(name, "chi2", None, None, None, None, len(roster), str(exc)))
    return rows


@dataclass(frozen=True)
class Figure1Data:
    points: list[dict]
    edges: list[dict]

    def mean_edge_length(self, scheme: str) -> float:
        lengths = [e["length"] for e in self.edges if e["scheme"] == scheme]
        return float(np.mean(lengths)) if lengths else float("nan")


def random_pairing(ids, seed: int) -> list[tuple[str, str]]:
    """Pairs formed by complete randomization: shuffle, then pair neighbours."""
    ids = sorted(ids)
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[k] for k in order]
    return [tuple(sorted(shuffled[k : k + 2])) for k in range(0, len(shuffled) - 1, 2)]


def figure1_data(design: Design, roster: Roster, cfg: DistanceConfig | None = None, seed: int | None = None):
    """Per-student top-3 principal component scores and the pair edges of the
    matched design and of a complete-randomization pairing."""
    cfg = cfg or DistanceConfig()
    students = sorted(roster, key=lambda s: s.id)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        X = encode(students, cfg, roster_stats(students, cfg))
    k = min(3, X.shape[1])
    scores = pca_project(standardize_columns(X), k)
    pos = {s.id: scores[i] for i, s in enumerate(students)}
    points = []
    for i, s in enumerate(students):
        row = {"student_id": s.id}
        for c in range(3):
            row[f"pc{c + 1}"] = float(scores[i, c]) if c < k else 0.0
        pat = design.assignment.get(s.id)
        row["pattern"] = str(pat) if pat is not None else ""
        points.append(row)
    edges = []
    strawman_seed = design.seed if seed is None else seed
    for scheme, pairs in (
        ("matched", design.pairs),
        ("random", random_pairing(pos, strawman_seed)),
    ):
        for a, b in pairs:
            if a in pos and b in pos:
                edges.append(
                    {"scheme": scheme, "a": a, "b": b, "length": float(np.linalg.norm(pos[a] - pos[b]))}
                )
    return Figure1Data(points, edges)
