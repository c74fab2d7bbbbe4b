"""Domain types shared across the package.

Scores are kept in raw points everywhere; standardization happens only at
analysis time.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

CLASS_YEARS = ("freshman", "sophomore", "junior", "senior", "graduate")
BINARY_FIELDS = ("gender", "urm", "ap_stats", "math_adv")
EXAM_KINDS = ("quiz", "final_section")

# groups 0/1 and 2/3 of the four-arm crossover
PAPER_PATTERNS = ("TCTC", "CTCT", "TCCT", "CTTC")
PAPER_FAMILIES = (("TCTC", "CTCT"), ("TCCT", "CTTC"))


def class_year_code(value) -> int:
    """Ordinal code 0..4 for a class-year label or integer."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        if 0 <= value < len(CLASS_YEARS):
            return int(value)
        raise ValueError(f"class year code out of range: {value}")
    label = str(value).strip().lower()
    if label.isdigit():
        return class_year_code(int(label))
    try:
        return CLASS_YEARS.index(label)
    except ValueError:
        raise ValueError(f"unknown class year {value!r}") from None


@dataclass(frozen=True)
class Student:
    id: str
    gender: int
    urm: int
    ap_stats: int
    math_adv: int
    class_year: int
    baseline: float
    term: str = ""

    @property
    def upperclassman(self) -> int:
        # junior, senior, graduate
        return int(self.class_year >= 2)

    def covariate(self, name: str) -> float:
        if name == "upperclassman":
            return float(self.upperclassman)
        return float(getattr(self, name))


Roster = Sequence[Student]


def validate_roster(roster: Roster) -> list[str]:
    """Return a list of human-readable invariant violations (empty if valid)."""
    problems = []
    seen = set()
    reported = set()
    for row, s in enumerate(roster):
        if not s.id:
            problems.append(f"row {row}: empty student id")
        elif s.id in seen and s.id not in reported:
            problems.append(f"duplicate student id {s.id!r}")
            reported.add(s.id)
        seen.add(s.id)
        for name in BINARY_FIELDS:
            if getattr(s, name) not in (0, 1):
                problems.append(f"student {s.id!r}: {name} must be 0 or 1")
        if not (isinstance(s.class_year, (int, np.integer)) and 0 <= s.class_year < len(CLASS_YEARS)):
            problems.append(f"student {s.id!r}: class_year out of range")
        if not math.isfinite(s.baseline):
            problems.append(f"student {s.id!r}: baseline is not finite")
    return problems


@dataclass(frozen=True)
class ArmPattern:
    """Sequence of per-unit assignments, e.g. ``ArmPattern("TCTC")``."""

    pattern: str

    def __post_init__(self):
        p = self.pattern
        if not p or set(p) - {"T", "C"}:
            raise ValueError(f"invalid arm pattern {p!r}")
        if len(p) % 2 or p.count("T") != len(p) // 2:
            raise ValueError(f"arm pattern {p!r} is not balanced")

    def __str__(self) -> str:
        return self.pattern

    def __len__(self) -> int:
        return len(self.pattern)

    @property
    def w(self) -> tuple[int, ...]:
        return tuple(int(c == "T") for c in self.pattern)

    def complement(self) -> ArmPattern:
        return ArmPattern(self.pattern.translate(str.maketrans("TC", "CT")))


def admissible_patterns(m: int = 4, mode: str = "paper") -> tuple[str, ...]:
    if mode == "paper":
        if m != 4:
            raise ValueError("paper mode requires m = 4")
        return PAPER_PATTERNS
    if m < 2 or m % 2:
        raise ValueError(f"m must be a positive even integer, got {m}")
    out = []
    for treated in itertools.combinations(range(m), m // 2):
        out.append("".join("T" if j in treated else "C" for j in range(m)))
    return tuple(out)


def pattern_families(m: int = 4, mode: str = "paper") -> tuple[tuple[str, str], ...]:
    """Complementary pattern pairs. In paper mode these are groups 0/1 and 2/3."""
    if mode == "paper":
        return PAPER_FAMILIES if m == 4 else admissible_patterns(m, mode)
    fams = []
    seen = set()
    for p in admissible_patterns(m, mode):
        if p in seen:
            continue
        q = ArmPattern(p).complement().pattern
        seen.update((p, q))
        fams.append((p, q))
    return tuple(fams)


@dataclass(frozen=True)
class Design:
    """A realized matched-pairs crossover randomization.

    ``first_unit`` is the course unit that pattern position 0 refers to; with
    the default of 2, unit 1 is the baseline unit and units 2..5 are studied.
    """

    seed: int
    blocks: tuple[tuple[str, ...], ...]
    pairs: tuple[tuple[str, str], ...]
    leftovers: tuple[str, ...]
    assignment: Mapping[str, ArmPattern]
    m: int = 4
    mode: str = "paper"
    first_unit: int = 2

    def pattern(self, student_id: str) -> ArmPattern:
        return self.assignment[student_id]

    def treated(self, student_id: str, unit: int) -> int:
        j = unit - self.first_unit
        if not 0 <= j < self.m:
            raise ValueError(
                f"unit {unit} is outside the studied units "
                f"{self.first_unit}..{self.first_unit + self.m - 1}"
            )
        return int(self.assignment[student_id].pattern[j] == "T")

    def partner(self) -> dict[str, str]:
        out = {}
        for a, b in self.pairs:
            out[a] = b
            out[b] = a
        return out


def validate_design(design: Design, roster: Roster | None = None) -> list[str]:
    problems = []
    in_block: dict[str, int] = {}
    for blk in design.blocks:
        for sid in blk:
            in_block[sid] = in_block.get(sid, 0) + 1
    for sid, k in in_block.items():
        if k > 1:
            problems.append(f"student {sid!r} appears in {k} blocks")
    paired: set[str] = set()
    for a, b in design.pairs:
        for sid in (a, b):
            if sid in paired:
                problems.append(f"student {sid!r} is in more than one pair")
            paired.add(sid)
        pa, pb = design.assignment.get(a), design.assignment.get(b)
        if pa is None or pb is None or pb != pa.complement():
            problems.append(f"pair ({a!r}, {b!r}) does not hold complementary patterns")
    for sid, p in design.assignment.items():
        if len(p) != design.m:
            problems.append(f"student {sid!r}: pattern length {len(p)} != m={design.m}")
    if roster is not None:
        for s in roster:
            if s.id not in in_block:
                problems.append(f"student {s.id!r} is not in any block")
            if s.id not in design.assignment:
                problems.append(f"student {s.id!r} has no assignment")
    return problems


@dataclass(frozen=True)
class ExamMeta:
    exam_id: str
    unit: int
    term: str = ""
    kind: str = "quiz"
    points: float = 100.0

    def __post_init__(self):
        if not self.exam_id:
            raise ValueError("exam_id must be nonempty")
        if self.unit < 1:
            raise ValueError(f"exam {self.exam_id!r}: unit must be >= 1")
        if self.kind not in EXAM_KINDS:
            raise ValueError(f"exam {self.exam_id!r}: unknown kind {self.kind!r}")
        if not self.points > 0:
            raise ValueError(f"exam {self.exam_id!r}: points must be positive")


@dataclass(frozen=True, eq=False)
class ScoreTable:
    """(student, exam) scores in raw points; NaN marks a missing score.

    Stored densely as ``values[i, j]`` for ``student_ids[i]`` and
    ``exams[j]``; use :meth:`items` for the sparse view.
    """

    student_ids: tuple[str, ...]
    exams: tuple[ExamMeta, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (len(self.student_ids), len(self.exams)):
            raise ValueError(
                f"score matrix shape {values.shape} does not match "
                f"{len(self.student_ids)} students x {len(self.exams)} exams"
            )
        if len(set(self.student_ids)) != len(self.student_ids):
            raise ValueError("duplicate student ids in score table")
        ids = [e.exam_id for e in self.exams]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate exam ids in score table")
        for j, e in enumerate(self.exams):
            col = values[:, j]
            bad = np.flatnonzero(~np.isnan(col) & ((col < 0) | (col > e.points)))
            if bad.size:
                i = bad[0]
                raise ValueError(
                    f"score {col[i]} for student {self.student_ids[i]!r} on exam "
                    f"{e.exam_id!r} is outside [0, {e.points}]"
                )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def from_records(cls, exams: Sequence[ExamMeta], records) -> ScoreTable:
        """Build from ``(student_id, exam_id, score)`` triples."""
        records = list(records)
        col = {e.exam_id: j for j, e in enumerate(exams)}
        sids = sorted({r[0] for r in records})
        row = {s: i for i, s in enumerate(sids)}
        values = np.full((len(sids), len(exams)), np.nan)
        for sid, eid, y in records:
            if eid not in col:
                raise ValueError(f"score for unknown exam {eid!r}")
            if not np.isnan(values[row[sid], col[eid]]):
                raise ValueError(f"duplicate score for ({sid!r}, {eid!r})")
            values[row[sid], col[eid]] = float(y)
        return cls(tuple(sids), tuple(exams), values)

    def __len__(self) -> int:
        return int(np.count_nonzero(~np.isnan(self.values)))

    def get(self, student_id: str, exam_id: str) -> float | None:
        i = self.student_ids.index(student_id)
        j = self.exam_ids.index(exam_id)
        y = self.values[i, j]
        return None if np.isnan(y) else float(y)

    @property
    def exam_ids(self) -> tuple[str, ...]:
        return tuple(e.exam_id for e in self.exams)

    def items(self) -> Iterator[tuple[tuple[str, str], float]]:
        for i, j in zip(*np.nonzero(~np.isnan(self.values))):
            yield (self.student_ids[i], self.exams[j].exam_id), float(self.values[i, j])

    def treatment_matrix(self, design: Design) -> np.ndarray:
        """W[i, j] in {0, 1}; -1 where the score is missing."""
        missing = [s for s in self.student_ids if s not in design.assignment]
        if missing:
            raise ValueError(f"students without a design assignment: {missing[:5]}")
        W = np.empty(self.values.shape, dtype=int)
        for j, e in enumerate(self.exams):
            for i, sid in enumerate(self.student_ids):
                W[i, j] = design.treated(sid, e.unit)
        W[np.isnan(self.values)] = -1
        return W

    def treatment(self, design: Design) -> dict[tuple[str, str], int]:
        W = self.treatment_matrix(design)
        return {
            (self.student_ids[i], self.exams[j].exam_id): int(W[i, j])
            for i, j in zip(*np.nonzero(W >= 0))
        }


@dataclass(frozen=True)
class ComplianceRecord:
    student_id: str
    completed: int
    assigned: int = 12

    def __post_init__(self):
        if self.assigned < 1:
            raise ValueError(f"{self.student_id}: assigned must be positive")
        if not 0 <= self.completed <= self.assigned:
            raise ValueError(
                f"{self.student_id}: completed={self.completed} outside [0, {self.assigned}]"
            )


@dataclass(frozen=True)
class EffectReport:
    d_bar: float
    se: float
    n_used: int
    t_stat: float
    df: int
    p_asymptotic: float
    p_permutation: float | None = None
    n_permutations: int = 0
    alternative: str = "two-sided"
