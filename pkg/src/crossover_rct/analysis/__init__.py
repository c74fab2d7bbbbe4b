from .diagnostics import (
    CarryoverReport,
    EffectRow,
    HeterogeneityReport,
    SensitivityRow,
    carryover_test,
    compliance_filter,
    compliance_sensitivity,
    effect_table,
    heterogeneity,
    quarter_effect_test,
)
from .estimator import (
    DiffList,
    PermutationResult,
    StandardizationError,
    StandardizedScores,
    StudentDiff,
    analyze,
    diff_matrix,
    effect_estimate,
    kind_filter,
    permutation_test,
    pool_terms,
    standardize,
    student_diffs,
    with_permutation,
)

__all__ = [
    "CarryoverReport",
    "DiffList",
    "EffectRow",
    "HeterogeneityReport",
    "PermutationResult",
    "SensitivityRow",
    "StandardizationError",
    "StandardizedScores",
    "StudentDiff",
    "analyze",
    "carryover_test",
    "compliance_filter",
    "compliance_sensitivity",
    "diff_matrix",
    "effect_estimate",
    "effect_table",
    "heterogeneity",
    "kind_filter",
    "permutation_test",
    "pool_terms",
    "quarter_effect_test",
    "standardize",
    "student_diffs",
    "with_permutation",
]
