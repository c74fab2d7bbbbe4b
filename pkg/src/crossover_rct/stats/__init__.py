"""Self-contained statistics primitives used across the package."""

from .descriptive import (
    ChiSquareTest,
    DegenerateDataError,
    TTest,
    chi2_independence,
    chi2_table,
    mean_sd,
    pearson_r,
    standardized_difference,
    welch_t,
)
from .distributions import (
    chisq_tail,
    f_tail,
    normal_tail_two_sided,
    t_quantile,
    t_tail_one_sided,
    t_tail_two_sided,
)
from .pca import pca_project, standardize_columns
from .regression import (
    FTest,
    OlsFit,
    SingularDesignError,
    anova_contrast,
    f_test_nested,
    ols,
    one_way_anova,
)
from .smooth import loess
from .special import betainc, gammainc, gammaincc

__all__ = [
    "ChiSquareTest",
    "DegenerateDataError",
    "FTest",
    "OlsFit",
    "SingularDesignError",
    "TTest",
    "anova_contrast",
    "betainc",
    "chi2_independence",
    "chi2_table",
    "chisq_tail",
    "f_tail",
    "f_test_nested",
    "gammainc",
    "gammaincc",
    "loess",
    "mean_sd",
    "normal_tail_two_sided",
    "ols",
    "one_way_anova",
    "pca_project",
    "pearson_r",
    "standardize_columns",
    "standardized_difference",
    "t_quantile",
    "t_tail_one_sided",
    "t_tail_two_sided",
    "welch_t",
]
