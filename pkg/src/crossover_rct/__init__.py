"""Design and analysis of matched-pairs crossover randomized trials."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    ArmPattern,
    ComplianceRecord,
    Design,
    EffectReport,
    ExamMeta,
    ScoreTable,
    Student,
    validate_design,
    validate_roster,
)

__all__ = [
    "ArmPattern",
    "ComplianceRecord",
    "Design",
    "EffectReport",
    "ExamMeta",
    "ScoreTable",
    "Student",
    "__version__",
    "validate_design",
    "validate_roster",
]
