"""File formats.

Tabular data is comma-separated UTF-8 text with a header row. Designs and
simulation scenarios are JSON. Every command also writes ``manifest.json``
next to its outputs.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
import os
import warnings
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import __version__
from .model import (
    CLASS_YEARS,
    ArmPattern,
    ComplianceRecord,
    Design,
    ExamMeta,
    ScoreTable,
    Student,
    class_year_code,
)

ROSTER_COLUMNS = ("student_id", "gender", "urm", "ap_stats", "math_adv", "class_year", "baseline", "term")
ROSTER_REQUIRED = ROSTER_COLUMNS[:-1]
SCORE_COLUMNS = ("student_id", "exam_id", "score")
EXAM_COLUMNS = ("exam_id", "unit", "term", "kind", "points")
COMPLIANCE_COLUMNS = ("student_id", "completed", "assigned")
DESIGN_FORMAT = "crossover-rct-design/1"


class FormatError(ValueError):
    def __init__(self, path, message, line=None):
        self.path = str(path)
        self.line = line
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(float(value))
    return str(value)


def write_csv(path, rows: Iterable[Mapping], columns: Sequence[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row.get(c)) for c in columns])


def _read_table(path, required, optional=()):
    """Yield ``(line_number, row_dict)``; the header is validated first."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(path, "file is empty (no header row)") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise FormatError(path, f"missing required column(s): {', '.join(missing)}", 1)
        unknown = [c for c in header if c not in required and c not in optional]
        if unknown:
            warnings.warn(f"{path}: ignoring unknown column(s): {', '.join(unknown)}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise FormatError(path, f"expected {len(header)} fields, found {len(row)}", line)
            yield line, {h: v.strip() for h, v in zip(header, row)}


def _binary(value, name):
    if value not in ("0", "1"):
        raise ValueError(f"{name} must be 0 or 1, got {value!r}")
    return int(value)


def _number(value, name):
    try:
        x = float(value)
    except ValueError:
        raise ValueError(f"{name} is not a number: {value!r}") from None
    if not math.isfinite(x):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return x


def read_roster(path) -> list[Student]:
    students = []
    seen = set()
    for line, row in _read_table(path, ROSTER_REQUIRED, ("term",)):
        try:
            sid = row["student_id"]
            if not sid:
                raise ValueError("student_id is empty")
            if sid in seen:
                raise ValueError(f"duplicate student_id {sid!r}")
            seen.add(sid)
            students.append(
                Student(
                    id=sid,
                    gender=_binary(row["gender"], "gender"),
                    urm=_binary(row["urm"], "urm"),
                    ap_stats=_binary(row["ap_stats"], "ap_stats"),
                    math_adv=_binary(row["math_adv"], "math_adv"),
                    class_year=class_year_code(row["class_year"]),
                    baseline=_number(row["baseline"], "baseline"),
                    term=row.get("term", ""),
                )
            )
        except ValueError as exc:
            raise FormatError(path, str(exc), line) from None
    return students


def write_roster(roster: Iterable[Student], path) -> None:
    rows = (
        {
            "student_id": s.id,
            "gender": s.gender,
            "urm": s.urm,
            "ap_stats": s.ap_stats,
            "math_adv": s.math_adv,
            "class_year": CLASS_YEARS[s.class_year],
            "baseline": float(s.baseline),
            "term": s.term,
        }
        for s in roster
    )
    write_csv(path, rows, ROSTER_COLUMNS)


def read_exams(path) -> list[ExamMeta]:
    exams = []
    for line, row in _read_table(path, EXAM_COLUMNS):
        try:
            unit = int(row["unit"])
            exams.append(ExamMeta(row["exam_id"], unit, row["term"], row["kind"], _number(row["points"], "points")))
        except ValueError as exc:
            raise FormatError(path, str(exc), line) from None
    ids = [e.exam_id for e in exams]
    if len(set(ids)) != len(ids):
        raise FormatError(path, "duplicate exam_id")
    return exams


def write_exams(exams: Iterable[ExamMeta], path) -> None:
    rows = ({"exam_id": e.exam_id, "unit": e.unit, "term": e.term, "kind": e.kind, "points": float(e.points)} for e in exams)
    write_csv(path, rows, EXAM_COLUMNS)


def read_scores(path, meta_path) -> ScoreTable:
    exams = read_exams(meta_path)
    by_id = {e.exam_id: e for e in exams}
    records = []
    seen = set()
    for line, row in _read_table(path, SCORE_COLUMNS):
        try:
            sid, eid = row["student_id"], row["exam_id"]
            if not sid:
                raise ValueError("student_id is empty")
            if eid not in by_id:
                raise ValueError(f"unknown exam_id {eid!r}")
            if (sid, eid) in seen:
                raise ValueError(f"duplicate score for ({sid!r}, {eid!r})")
            seen.add((sid, eid))
            y = _number(row["score"], "score")
            points = by_id[eid].points
            if not 0 <= y <= points:
                raise ValueError(f"score {y} outside [0, {points}] for exam {eid!r}")
        except ValueError as exc:
            raise FormatError(path, str(exc), line) from None
        records.append((sid, eid, y))
    return ScoreTable.from_records(exams, records)


def write_scores(table: ScoreTable, path, meta_path=None) -> None:
    rows = ({"student_id": s, "exam_id": e, "score": y} for (s, e), y in table.items())
    write_csv(path, rows, SCORE_COLUMNS)
    if meta_path is not None:
        write_exams(table.exams, meta_path)


def read_compliance(path) -> list[ComplianceRecord]:
    out = []
    for line, row in _read_table(path, COMPLIANCE_COLUMNS):
        try:
            out.append(ComplianceRecord(row["student_id"], int(row["completed"]), int(row["assigned"])))
        except ValueError as exc:
            raise FormatError(path, str(exc), line) from None
    return out


def write_compliance(records: Iterable[ComplianceRecord], path) -> None:
    rows = ({"student_id": r.student_id, "completed": r.completed, "assigned": r.assigned} for r in records)
    write_csv(path, rows, COMPLIANCE_COLUMNS)


def design_to_dict(design: Design) -> dict:
    return {
        "format": DESIGN_FORMAT,
        "seed": design.seed,
        "mode": design.mode,
        "m": design.m,
        "first_unit": design.first_unit,
        "blocks": [list(b) for b in design.blocks],
        "pairs": [list(p) for p in design.pairs],
        "leftovers": list(design.leftovers),
        "assignment": {k: str(v) for k, v in sorted(design.assignment.items())},
    }


def design_from_dict(data: Mapping) -> Design:
    if data.get("format") != DESIGN_FORMAT:
        raise ValueError(f"unsupported design format {data.get('format')!r}")
    return Design(
        seed=int(data["seed"]),
        blocks=tuple(tuple(b) for b in data["blocks"]),
        pairs=tuple(tuple(p) for p in data["pairs"]),
        leftovers=tuple(data["leftovers"]),
        assignment={k: ArmPattern(v) for k, v in data["assignment"].items()},
        m=int(data["m"]),
        mode=data["mode"],
        first_unit=int(data["first_unit"]),
    )


def write_design(design: Design, path) -> None:
    Path(path).write_text(json.dumps(design_to_dict(design), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_design(path) -> Design:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return design_from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(path, f"invalid design file: {exc}") from None


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except ValueError as exc:
        raise FormatError(path, f"invalid JSON: {exc}") from None


def write_json(data, path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command: str, inputs: Mapping[str, str | os.PathLike], seed=None, argv=None) -> Path:
    """Record tool version, inputs' SHA-256 digests, seed and timestamp.

    The timestamp honours ``SOURCE_DATE_EPOCH`` so manifests can be made
    reproducible too.
    """
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch else _dt.datetime.now(_dt.timezone.utc)
    manifest = {
        "tool": "crossover-rct",
        "version": __version__,
        "command": command,
        "argv": list(argv) if argv is not None else [],
        "inputs": {name: {"path": str(p), "sha256": file_digest(p)} for name, p in sorted(inputs.items()) if p},
        "seed": seed,
        "timestamp": when.replace(microsecond=0).isoformat(),
    }
    path = Path(out_dir) / "manifest.json"
    write_json(manifest, path)
    return path
