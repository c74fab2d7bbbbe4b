"""Generative model for crossover trial data.

A student's score on exam j is ``sigma_j * (theta_i + tau_i * W_ij + eps_ij) + mu_j``
with ``Var(theta) + Var(eps) = 1``. Latent ability depends partly on the
covariates so that baseline gaps between groups are realistic.

Simulation is split in two stages. The *cohort* (roster, latent ability,
compliance type and the covariate matching) depends only on the scenario
seed and is cached. Each *replicate* then redraws the randomization coins
and the exam noise, so Monte Carlo loops do not re-solve the matching.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .design import DistanceConfig, assign_arms, match_roster
from .model import CLASS_YEARS, ComplianceRecord, Design, ExamMeta, ScoreTable, Student

TERM_LABELS = ("autumn", "winter")

# pooled marginals of the two cohorts
MARGINALS = {"gender": 0.38, "urm": 0.28, "ap_stats": 0.19, "math_adv": 0.36}
CLASS_YEAR_PROBS = (0.17, 0.23, 0.27, 0.305, 0.025)

DEFAULT_COVARIATE_EFFECTS = (
    ("ap_stats", 0.4),
    ("gender", 0.25),
    ("math_adv", 0.5),
    ("upperclassman", 0.15),
    ("urm", -0.45),
)


def _as_items(value) -> tuple[tuple[str, float], ...]:
    if isinstance(value, Mapping):
        value = value.items()
    return tuple(sorted((str(k), float(v)) for k, v in value))


def _as_floats(value, name) -> tuple[float, ...]:
    if value is None:
        return ()
    if isinstance(value, (int, float)):
        raise ValueError(f"{name} must be a sequence")
    return tuple(float(v) for v in value)


@dataclass(frozen=True)
class SimScenario:
    n_students: int = 300
    m_units: int = 4
    tau: float = 0.115
    theta_var: float = 0.7
    exam_mu: tuple[float, ...] = (200.0, 200.0, 200.0, 200.0)
    exam_sigma: tuple[float, ...] = (20.0, 20.0, 20.0, 20.0)
    exam_points: float = 400.0
    noncompliance_rate: float = 0.0
    carryover_delta: float = 0.0
    tau_by_covariate: tuple = ()
    terms: int = 1
    seed: int = 0
    noise: str = "normal"
    final_exams: bool = False
    final_mu: tuple[float, ...] = ()
    final_sigma: tuple[float, ...] = ()
    tau_term_offsets: tuple[float, ...] = ()
    covariate_effects: tuple = DEFAULT_COVARIATE_EFFECTS
    baseline_mu: float = 200.0
    baseline_sigma: float = 20.0
    compliance_threshold: int = 10
    assigned: int = 12
    mode: str = "paper"
    first_unit: int = 2
    design_kind: str = "crossover"
    match_on_baseline: bool = True

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)
        for name in ("exam_mu", "exam_sigma", "final_mu", "final_sigma", "tau_term_offsets"):
            set_(name, _as_floats(getattr(self, name), name))
        set_("tau_by_covariate", _as_items(self.tau_by_covariate))
        set_("covariate_effects", _as_items(self.covariate_effects))
        if self.n_students < 2:
            raise ValueError("n_students must be at least 2")
        if self.m_units < 2 or self.m_units % 2:
            raise ValueError("m_units must be a positive even integer")
        if self.mode == "paper" and self.m_units != 4:
            raise ValueError("paper mode requires m_units = 4")
        if not 0.0 <= self.theta_var <= 1.0:
            raise ValueError("theta_var must lie in [0, 1]")
        m = self.m_units
        if len(self.exam_mu) != m or len(self.exam_sigma) != m:
            raise ValueError(f"exam_mu and exam_sigma must have length m_units={m}")
        if self.final_exams:
            if not self.final_mu:
                set_("final_mu", self.exam_mu)
            if not self.final_sigma:
                set_("final_sigma", self.exam_sigma)
            if len(self.final_mu) != m or len(self.final_sigma) != m:
                raise ValueError(f"final_mu and final_sigma must have length m_units={m}")
        if any(s <= 0 for s in self.exam_sigma + self.final_sigma) or self.baseline_sigma <= 0:
            raise ValueError("exam standard deviations must be positive")
        if self.terms not in (1, 2):
            raise ValueError("terms must be 1 or 2")
        if self.tau_term_offsets and len(self.tau_term_offsets) != self.terms:
            raise ValueError("tau_term_offsets needs one entry per term")
        if not 0.0 <= self.noncompliance_rate <= 1.0:
            raise ValueError("noncompliance_rate must be a probability")
        if self.noise not in ("normal", "uniform"):
            raise ValueError("noise must be 'normal' or 'uniform'")
        if self.design_kind not in ("crossover", "parallel"):
            raise ValueError("design_kind must be 'crossover' or 'parallel'")
        if not 0 < self.compliance_threshold <= self.assigned:
            raise ValueError("compliance_threshold must lie in [1, assigned]")
        known = set(MARGINALS) | {"upperclassman"}
        for name, _ in self.tau_by_covariate + self.covariate_effects:
            if name not in known:
                raise ValueError(f"unknown covariate {name!r}")

    @property
    def eps_var(self) -> float:
        return 1.0 - self.theta_var

    @property
    def term_labels(self) -> tuple[str, ...]:
        return TERM_LABELS[: self.terms]

    @classmethod
    def from_dict(cls, data: Mapping) -> SimScenario:
        names = set(cls.__dataclass_fields__)
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        data = dict(data)
        for key in ("exam_mu", "exam_sigma"):
            if key in data and isinstance(data[key], (int, float)):
                data[key] = [data[key]] * int(data.get("m_units", 4))
        return cls(**data)

    def to_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            if name in ("tau_by_covariate", "covariate_effects"):
                v = dict(v)
            elif isinstance(v, tuple):
                v = list(v)
            out[name] = v
        return out


def _draw(rng, noise, var, size):
    if var <= 0:
        return np.zeros(size)
    if noise == "normal":
        return rng.normal(0.0, math.sqrt(var), size)
    half = math.sqrt(3.0 * var)
    return rng.uniform(-half, half, size)


def synthetic_roster(n: int, rng, term: str = "", prefix: str = "s", baseline=None) -> list[Student]:
    """Students with covariates drawn independently from the pooled marginals."""
    out = []
    for i in range(n):
        out.append(
            Student(
                id=f"{prefix}{i + 1:04d}",
                gender=int(rng.random() < MARGINALS["gender"]),
                urm=int(rng.random() < MARGINALS["urm"]),
                ap_stats=int(rng.random() < MARGINALS["ap_stats"]),
                math_adv=int(rng.random() < MARGINALS["math_adv"]),
                class_year=int(rng.choice(len(CLASS_YEARS), p=CLASS_YEAR_PROBS)),
                baseline=float(baseline[i]) if baseline is not None else float(rng.normal(70, 15)),
                term=term,
            )
        )
    return out


def _covariate_matrix(students, names):
    return np.array([[s.covariate(k) for k in names] for s in students], dtype=float).reshape(len(students), len(names))


def _population_moments(names):
    p = []
    for k in names:
        if k == "upperclassman":
            p.append(sum(CLASS_YEAR_PROBS[2:]))
        else:
            p.append(MARGINALS[k])
    p = np.array(p)
    return p, p * (1 - p)


def _completed_counts(rng, complier, assigned, threshold):
    out = np.empty(complier.size, dtype=int)
    for i, ok in enumerate(complier):
        if ok:
            if threshold < assigned and rng.random() >= 0.9:
                out[i] = int(rng.integers(threshold, assigned))
            else:
                out[i] = assigned
        else:
            u = rng.random()
            if u < 0.45 or threshold < 3:
                out[i] = threshold - 1
            elif u < 0.59:
                out[i] = threshold - 2
            else:
                out[i] = int(rng.integers(0, threshold - 2))
    return out


@dataclass(frozen=True, eq=False)
class Cohort:
    students: tuple[Student, ...]
    theta: np.ndarray = field(repr=False)
    complier: np.ndarray = field(repr=False)
    completed: np.ndarray = field(repr=False)
    blocks: tuple
    pairs: tuple
    leftovers: tuple


@functools.lru_cache(maxsize=32)
def build_cohort(scenario: SimScenario) -> Cohort:
    """Draw the roster, latent abilities and compliance types, and match pairs."""
    sc = scenario
    rng = np.random.default_rng([int(sc.seed), 0xC0])
    sizes = [sc.n_students // sc.terms] * sc.terms
    sizes[-1] += sc.n_students - sum(sizes)

    students = []
    for term, size in zip(sc.term_labels, sizes):
        students.extend(synthetic_roster(size, rng, term=term, prefix=f"{term[0]}"))
    n = len(students)

    names = [k for k, _ in sc.covariate_effects]
    beta = np.array([v for _, v in sc.covariate_effects])
    signal = np.zeros(n)
    if names:
        p, var = _population_moments(names)
        pop_var = float(np.sum(beta**2 * var))
        scale = 1.0
        if pop_var > sc.theta_var / 2 and pop_var > 0:
            scale = math.sqrt(sc.theta_var / (2 * pop_var))
        signal = scale * (_covariate_matrix(students, names) - p) @ beta
        pop_var *= scale**2
    else:
        pop_var = 0.0
    theta = signal + _draw(rng, sc.noise, sc.theta_var - pop_var, n)
    eps0 = _draw(rng, sc.noise, sc.eps_var, n)
    baseline = sc.baseline_sigma * (theta + eps0) + sc.baseline_mu
    students = [replace(s, baseline=float(b)) for s, b in zip(students, baseline)]

    complier = rng.random(n) >= sc.noncompliance_rate
    completed = _completed_counts(rng, complier, sc.assigned, sc.compliance_threshold)

    cfg = DistanceConfig()
    if not sc.match_on_baseline:
        cfg = DistanceConfig(numeric_fields=("class_year",))
    blocks, pairs, leftovers = match_roster(students, cfg)
    return Cohort(tuple(students), theta, complier, completed, blocks, pairs, leftovers)


@dataclass(frozen=True, eq=False)
class SimTruth:
    theta: np.ndarray
    tau_i: np.ndarray
    complier: np.ndarray
    eps: np.ndarray
    treatment: np.ndarray
    carryover: np.ndarray
    n_clipped: int = 0


@dataclass(frozen=True, eq=False)
class SimDataset:
    roster: list[Student]
    design: Design
    scores: ScoreTable
    compliance: list[ComplianceRecord]
    truth: SimTruth
    scenario: SimScenario
    replicate: int = 0


def exam_list(sc: SimScenario) -> list[ExamMeta]:
    exams = []
    for term in sc.term_labels:
        for j in range(sc.m_units):
            unit = sc.first_unit + j
            exams.append(ExamMeta(f"{term}-quiz{unit}", unit, term, "quiz", sc.exam_points))
        if sc.final_exams:
            for j in range(sc.m_units):
                unit = sc.first_unit + j
                exams.append(ExamMeta(f"{term}-final{unit}", unit, term, "final_section", sc.exam_points))
    return exams


def replicate_seed(seed: int, replicate: int) -> int:
    """64-bit design seed for one replicate."""
    return int(np.random.SeedSequence([int(seed), int(replicate), 0xD5]).generate_state(1, np.uint64)[0])


def _individual_tau(sc: SimScenario, cohort: Cohort) -> np.ndarray:
    students = cohort.students
    tau = np.full(len(students), sc.tau)
    if sc.tau_term_offsets:
        offsets = dict(zip(sc.term_labels, sc.tau_term_offsets))
        tau += np.array([offsets[s.term] for s in students])
    for name, extra in sc.tau_by_covariate:
        tau += extra * np.array([s.covariate(name) for s in students])
    return np.where(cohort.complier, tau, 0.0)


def _generate_scores(sc, cohort, W_units, rng):
    """Scores for every exam given per-unit treatment ``W_units`` (n x m)."""
    exams = exam_list(sc)
    students = cohort.students
    n = len(students)
    tau_i = _individual_tau(sc, cohort)
    term_of = np.array([s.term for s in students])
    eps = _draw(rng, sc.noise, sc.eps_var, (n, len(exams)))
    values = np.full((n, len(exams)), np.nan)
    W = np.full((n, len(exams)), -1, dtype=int)
    carry = np.zeros((n, len(exams)))
    for col, exam in enumerate(exams):
        j = exam.unit - sc.first_unit
        rows = term_of == exam.term
        if exam.kind == "quiz":
            mu, sigma = sc.exam_mu[j], sc.exam_sigma[j]
            if j > 0 and sc.carryover_delta:
                carry[:, col] = sc.carryover_delta * W_units[:, j - 1] * cohort.complier
        else:
            mu, sigma = sc.final_mu[j], sc.final_sigma[j]
        latent = cohort.theta + tau_i * W_units[:, j] + carry[:, col] + eps[:, col]
        values[rows, col] = sigma * latent[rows] + mu
        W[rows, col] = W_units[rows, j]
    carry[W < 0] = 0.0
    return exams, values, W, eps, tau_i, carry


def _clip_scores(values, points):
    """Clamp draws to the valid score range; returns the clipped matrix and count."""
    finite = ~np.isnan(values)
    out = np.clip(values, 0.0, points)
    n_clipped = int(np.count_nonzero(finite & (out != values)))
    return out, n_clipped


def simulate(scenario: SimScenario, replicate: int = 0) -> SimDataset:
    """One synthetic trial: roster, design, scores, compliance records and truth."""
    sc = scenario
    if sc.design_kind != "crossover":
        raise ValueError("simulate() produces crossover data; use parallel_p_value for parallel groups")
    cohort = build_cohort(sc)
    design = assign_arms(
        cohort.pairs,
        cohort.leftovers,
        replicate_seed(sc.seed, replicate),
        mode=sc.mode,
        m=sc.m_units,
        blocks=cohort.blocks,
        first_unit=sc.first_unit,
    )
    students = cohort.students
    W_units = np.array([design.assignment[s.id].w for s in students], dtype=int)
    rng = np.random.default_rng([int(sc.seed), int(replicate), 0xE5])
    exams, values, W, eps, tau_i, carry = _generate_scores(sc, cohort, W_units, rng)
    values, n_clipped = _clip_scores(values, sc.exam_points)
    table = ScoreTable(tuple(s.id for s in students), tuple(exams), values)
    compliance = [
        ComplianceRecord(s.id, int(c), sc.assigned) for s, c in zip(students, cohort.completed)
    ]
    truth = SimTruth(cohort.theta, tau_i, cohort.complier, eps, W, carry, n_clipped)
    return SimDataset(list(students), design, table, compliance, truth, sc, replicate)


def parallel_p_value(scenario: SimScenario, replicate: int = 0) -> float:
    """Two-sided p-value of a parallel-groups analysis of the same cohort.

    Each matched pair's coin sends one member to treatment in every unit and
    the other to control in every unit; exams are standardized by their
    control group and arms compared by a Welch test on per-student mean z.
    """
    from .stats import mean_sd, welch_t

    sc = scenario
    cohort = build_cohort(sc)
    rng = np.random.default_rng(replicate_seed(sc.seed, replicate))
    index = {s.id: i for i, s in enumerate(cohort.students)}
    arm = np.zeros(len(index), dtype=int)
    for a, b in cohort.pairs:
        first = int(rng.integers(2))
        arm[index[a]], arm[index[b]] = first, 1 - first
    for sid in cohort.leftovers:
        arm[index[sid]] = int(rng.integers(2))
    W_units = np.repeat(arm[:, None], sc.m_units, axis=1)
    noise_rng = np.random.default_rng([int(sc.seed), int(replicate), 0xE5])
    exams, values, W, *_ = _generate_scores(sc, cohort, W_units, noise_rng)
    values, _ = _clip_scores(values, sc.exam_points)
    Z = np.full(values.shape, np.nan)
    for col, exam in enumerate(exams):
        if exam.kind != "quiz":
            continue
        ctrl = values[W[:, col] == 0, col]
        mu, sd = mean_sd(ctrl)
        Z[:, col] = (values[:, col] - mu) / sd
    zbar = np.nanmean(Z[:, [c for c, e in enumerate(exams) if e.kind == "quiz"]], axis=1)
    return welch_t(zbar[arm == 1], zbar[arm == 0]).p


@dataclass(frozen=True)
class PowerRow:
    tau: float
    n_students: int
    design_kind: str
    power: float
    n_reps: int
    alpha: float


def power_curve(base: SimScenario, grid: Sequence[Mapping], alpha: float = 0.05, n_reps: int = 200, test: str = "asymptotic", n_perm: int = 999) -> list[PowerRow]:
    """Monte Carlo power at each grid point.

    ``grid`` holds scenario overrides (e.g. ``{"tau": 0.1, "n_students": 200}``).
    Crossover points are analyzed with the full estimator using the
    asymptotic or permutation p-value; parallel points use
    :func:`parallel_p_value`.
    """
    from .analysis import analyze

    if n_reps < 100:
        raise ValueError("n_reps must be at least 100")
    if test not in ("asymptotic", "permutation"):
        raise ValueError("test must be 'asymptotic' or 'permutation'")
    rows = []
    for overrides in grid:
        sc = replace(base, **dict(overrides))
        hits = 0
        for r in range(n_reps):
            if sc.design_kind == "parallel":
                p = parallel_p_value(sc, r)
            else:
                data = simulate(sc, r)
                perm = n_perm if test == "permutation" else 0
                report, _, _ = analyze(data.scores, data.design, "quiz", n_perm=perm, seed=r)
                p = report.p_permutation if test == "permutation" else report.p_asymptotic
            hits += p <= alpha
        rows.append(PowerRow(sc.tau, sc.n_students, sc.design_kind, hits / n_reps, n_reps, alpha))
    return rows
