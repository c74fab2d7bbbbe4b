import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossover_rct.stats import (
    DegenerateDataError,
    SingularDesignError,
    anova_contrast,
    betainc,
    chi2_independence,
    chi2_table,
    chisq_tail,
    f_tail,
    f_test_nested,
    gammainc,
    gammaincc,
    loess,
    mean_sd,
    normal_tail_two_sided,
    ols,
    one_way_anova,
    pca_project,
    pearson_r,
    standardized_difference,
    t_quantile,
    t_tail_one_sided,
    t_tail_two_sided,
    welch_t,
)

# Frozen from mpmath at 40 digits (regularized incomplete beta / gamma).
T_ORACLE = [
    (2.92, 298, 0.0037674360096213412),
    (0.5, 1, 0.70483276469913349),
    (1.0, 2, 0.4226497308103742),
    (2.0, 5, 0.10193947882985837),
    (3.5, 30, 0.0014768074376442518),
    (10.0, 3, 0.0021283990584141502),
    (2.0, 1e4, 0.045527260661432396),
    (1.96, 1e6, 0.049996067582829364),
    (0.72, 320, 0.47205054843946939),
    (0.44, 55, 0.66166138996374389),
]
F_ORACLE = [
    (0.17, 3, 120, 0.91646119057050704),
    (0.61, 1, 294, 0.43541624223842971),
    (0.67, 14, 277, 0.80303691655311178),
    (1.6, 1, 292, 0.20691176248576865),
    (2.5, 4, 10, 0.109375),
    (10.0, 2, 3, 0.047107507729214033),
    (0.01, 5, 5, 0.99994757086642145),
]
CHI_ORACLE = [
    (6.4, 9, 0.69931257086640817),
    (0.96, 3, 0.81092946908676821),
    (1.0, 1, 0.3173105078629141),
    (20.0, 12, 0.067085962879031782),
    (0.1, 2, 0.95122942450071401),
    (50.0, 30, 0.01240206071890058),
]


@pytest.mark.parametrize("t,df,expected", T_ORACLE)
def test_t_tail_matches_oracle(t, df, expected):
    assert t_tail_two_sided(t, df) == pytest.approx(expected, rel=1e-10)
    assert t_tail_two_sided(-t, df) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("f,df1,df2,expected", F_ORACLE)
def test_f_tail_matches_oracle(f, df1, df2, expected):
    assert f_tail(f, df1, df2) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("x,df,expected", CHI_ORACLE)
def test_chisq_tail_matches_oracle(x, df, expected):
    assert chisq_tail(x, df) == pytest.approx(expected, rel=1e-10)


def test_incomplete_functions_match_oracle():
    assert betainc(2.5, 3.5, 0.3) == pytest.approx(0.29675298929566638, rel=1e-12)
    assert betainc(50, 0.5, 0.99) == pytest.approx(0.31730439787419737, rel=1e-12)
    assert gammainc(3.5, 2.0) == pytest.approx(0.22022259152428408, rel=1e-12)
    assert gammainc(0.5, 10.0) == pytest.approx(0.99999225578356896, rel=1e-12)
    assert gammainc(2.0, 3.0) + gammaincc(2.0, 3.0) == pytest.approx(1.0, abs=1e-15)


def test_published_tail_values():
    # t(298) = 2.92 reported as one-sided p = .002
    assert 0.0018 <= t_tail_one_sided(2.92, 298) <= 0.0020
    assert f_tail(0.17, 3, 120) == pytest.approx(0.92, abs=0.005)
    assert f_tail(0.61, 1, 294) == pytest.approx(0.43, abs=0.01)
    assert chisq_tail(6.4, 9) == pytest.approx(0.70, abs=0.005)
    assert chisq_tail(0.96, 3) == pytest.approx(0.81, abs=0.005)


def test_tail_boundaries():
    assert t_tail_two_sided(0.0, 7) == 1.0
    assert f_tail(0.0, 2, 9) == 1.0
    assert chisq_tail(0.0, 4) == 1.0
    assert abs(t_tail_two_sided(1.96, 1e6) - 0.05) < 1e-3
    assert abs(t_tail_two_sided(1.96, 1e6) - normal_tail_two_sided(1.96)) < 1e-3


@pytest.mark.parametrize("bad", [0, 0.5, -1, float("nan")])
def test_t_tail_rejects_bad_df(bad):
    with pytest.raises(ValueError):
        t_tail_two_sided(1.0, bad)


def test_f_and_chisq_reject_bad_input():
    with pytest.raises(ValueError):
        f_tail(-1.0, 1, 2)
    with pytest.raises(ValueError):
        f_tail(1.0, 0, 2)
    with pytest.raises(ValueError):
        chisq_tail(-0.1, 3)
    with pytest.raises(ValueError):
        chisq_tail(1.0, 0)


@settings(max_examples=60, deadline=None)
@given(
    a=st.floats(0, 50),
    b=st.floats(0, 50),
    df=st.sampled_from([1, 2, 3, 7, 30, 298, 5000]),
)
def test_tails_monotone_and_bounded(a, b, df):
    lo, hi = sorted((a, b))
    for fn in (
        lambda x: t_tail_two_sided(x, df),
        lambda x: f_tail(x, 3, df),
        lambda x: chisq_tail(x, df),
    ):
        p_lo, p_hi = fn(lo), fn(hi)
        assert 0.0 <= p_hi <= p_lo <= 1.0


def test_tails_against_scipy_sweep():
    sps = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(1)
    for _ in range(300):
        df = float(rng.choice([1, 2, 5, 12, 40, 300, 1e4]))
        t = float(rng.uniform(0, 8))
        assert t_tail_two_sided(t, df) == pytest.approx(2 * sps.t.sf(t, df), rel=1e-9, abs=1e-300)
        d1, d2 = int(rng.integers(1, 20)), int(rng.integers(1, 400))
        f = float(rng.uniform(0, 6))
        assert f_tail(f, d1, d2) == pytest.approx(sps.f.sf(f, d1, d2), rel=1e-8, abs=1e-300)
        k = int(rng.integers(1, 60))
        x = float(rng.uniform(0, 100))
        assert chisq_tail(x, k) == pytest.approx(sps.chi2.sf(x, k), rel=1e-9, abs=1e-300)


def test_t_quantile_inverts_tail():
    for df in (1, 4, 29, 298):
        q = t_quantile(0.975, df)
        assert t_tail_two_sided(q, df) == pytest.approx(0.05, abs=1e-10)
    assert t_quantile(0.975, 1e6) == pytest.approx(1.959966, abs=1e-4)


# -- descriptive --------------------------------------------------------------


def test_mean_sd_examples():
    assert mean_sd([1, 1, 1]) == (1.0, 0.0)
    m, s = mean_sd([0, 2])
    assert m == 1.0 and s == pytest.approx(math.sqrt(2))
    with pytest.raises(ValueError):
        mean_sd([3.0])


def test_mean_sd_on_simulated_exam():
    from crossover_rct.simulator import SimScenario, simulate

    sc = SimScenario(
        n_students=1000, terms=2, exam_mu=(70.0,) * 4, exam_sigma=(20.0,) * 4, exam_points=200.0, tau=0.0, seed=5
    )
    ds = simulate(sc)
    cols = [j for j, e in enumerate(ds.scores.exams) if e.unit == 2]
    ys = ds.scores.values[:, cols]
    ys = ys[~np.isnan(ys)]
    assert ys.size == 1000
    m, s = mean_sd(ys)
    assert abs(m - 70) < 2 and abs(s - 20) < 1.5


def test_pearson_examples():
    xs = np.arange(10.0)
    assert pearson_r(xs, xs)[0] == pytest.approx(1.0)
    assert pearson_r(xs, -xs)[0] == pytest.approx(-1.0)
    with pytest.raises(DegenerateDataError):
        pearson_r(xs, np.ones(10))
    with pytest.raises(ValueError):
        pearson_r([1, 2], [1, 2])


def test_pearson_independent_samples_small():
    rng = np.random.default_rng(2)
    reps = 5000
    small = sum(abs(pearson_r(rng.normal(size=300), rng.normal(size=300))[0]) < 0.15 for _ in range(reps))
    # exact rate is about 0.990; allow three Monte Carlo standard errors
    assert small / reps >= 0.99 - 3 * math.sqrt(0.99 * 0.01 / reps)


def test_pearson_p_matches_scipy():
    sps = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(3)
    x = rng.normal(size=40)
    y = 0.3 * x + rng.normal(size=40)
    r, p = pearson_r(x, y)
    ref = sps.pearsonr(x, y)
    assert r == pytest.approx(ref[0], rel=1e-12)
    assert p == pytest.approx(ref[1], rel=1e-9)


def test_welch_t_matches_scipy():
    sps = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(4)
    a, b = rng.normal(0, 1, 30), rng.normal(0.4, 2, 45)
    res = welch_t(a, b)
    ref = sps.ttest_ind(a, b, equal_var=False)
    assert res.t == pytest.approx(ref.statistic, rel=1e-12)
    assert res.p == pytest.approx(ref.pvalue, rel=1e-9)
    assert res.estimate == pytest.approx(a.mean() - b.mean())


def test_chi2_independence_df_and_scipy():
    sps = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(5)
    years = rng.integers(0, 5, 300)
    arms = rng.integers(0, 4, 300)
    res = chi2_independence(years, arms)
    assert res.df == 12
    table = np.zeros((5, 4))
    np.add.at(table, (years, arms), 1)
    ref = sps.chi2_contingency(table, correction=False)
    assert res.statistic == pytest.approx(ref[0], rel=1e-12)
    assert res.p == pytest.approx(ref[1], rel=1e-9)
    assert chi2_table(table).statistic == pytest.approx(ref[0], rel=1e-12)


def test_standardized_difference_identical_groups():
    vals = [1.0, 2.0, 3.0, 1.0, 2.0, 3.0]
    est, se = standardized_difference(vals, [0, 0, 0, 1, 1, 1])
    assert est == 0.0 and se > 0


def test_standardized_difference_hand_value():
    vals = np.array([1.0, 2.0, 3.0, 3.0, 4.0, 5.0])
    est, _ = standardized_difference(vals, [0, 0, 0, 1, 1, 1])
    assert est == pytest.approx(2.0 / vals.std(ddof=1))


# -- regression ---------------------------------------------------------------


def test_ols_exact_line():
    X = np.column_stack([np.ones(3), [0.0, 1.0, 2.0]])
    fit = ols(X, [1.0, 2.0, 3.0])
    assert np.allclose(fit.coefficients, [1.0, 1.0], atol=1e-12)
    assert fit.residual_ss == pytest.approx(0.0, abs=1e-20)
    assert fit.df_residual == 1


def test_ols_matches_normal_equations():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(50, 3))
    y = rng.normal(size=50)
    beta = np.linalg.solve(X.T @ X, X.T @ y)
    fit = ols(X, y)
    assert np.allclose(fit.coefficients, beta, atol=1e-8)
    # residuals orthogonal to every column
    assert np.all(np.abs(X.T @ fit.residuals) < 1e-8 * np.abs(y).sum())
    assert fit.residual_ss >= 0


def test_ols_orthogonal_response():
    X = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]])
    fit = ols(X, [0.0, 0.0, 1.0, -2.0])
    assert np.allclose(fit.coefficients, 0.0)


def test_ols_rank_deficiency_names_column():
    x = np.arange(6.0)
    X = np.column_stack([np.ones(6), x, 2 * x + 1])
    with pytest.raises(SingularDesignError) as exc:
        ols(X, np.arange(6.0), names=["intercept", "x", "x_copy"])
    assert "x_copy" in str(exc.value)


def test_ols_needs_more_rows_than_columns():
    with pytest.raises(ValueError):
        ols(np.eye(3), [1.0, 2.0, 3.0])


def test_nested_f_hand_example():
    # exact rational arithmetic: F = 3249/2765 on (1, 3) df
    x = np.arange(1.0, 7.0)
    z = np.array([0.0, 1, 0, 1, 1, 0])
    y = np.array([2.0, 3, 5, 4, 7, 8])
    full = ols(np.column_stack([np.ones(6), x, z]), y)
    reduced = ols(np.column_stack([np.ones(6), x]), y)
    assert np.allclose(full.coefficients, [40 / 39, 31 / 26, -19 / 26], atol=1e-12)
    assert full.residual_ss == pytest.approx(79 / 39, rel=1e-12)
    assert reduced.residual_ss == pytest.approx(296 / 105, rel=1e-12)
    res = f_test_nested(full, reduced)
    assert (res.df1, res.df2) == (1, 3)
    assert res.f == pytest.approx(3249 / 2765, abs=1e-10)
    assert res.p == pytest.approx(0.357707578930130050604924180774, abs=1e-10)


def test_nested_f_identical_models_error():
    X = np.column_stack([np.ones(5), np.arange(5.0)])
    fit = ols(X, [1.0, 3.0, 2.0, 5.0, 4.0])
    with pytest.raises(ValueError):
        f_test_nested(fit, fit)


def test_nested_f_null_calibration():
    rng = np.random.default_rng(7)
    ps = []
    for _ in range(1000):
        X = np.column_stack([np.ones(40), rng.normal(size=(40, 3))])
        y = rng.normal(size=40)
        ps.append(f_test_nested(ols(X, y), ols(X[:, :1], y)).p)
    ps = np.sort(ps)
    ks = np.max(np.abs(ps - np.arange(1, 1001) / 1000))
    assert ks < 0.05


def test_anova_matches_scipy_and_identical_groups():
    sps = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(8)
    groups = [rng.normal(m, 1, n) for m, n in ((0, 10), (0.5, 12), (1, 9))]
    res = one_way_anova(groups)
    ref = sps.f_oneway(*groups)
    assert res.f == pytest.approx(ref.statistic, rel=1e-12)
    assert res.p == pytest.approx(ref.pvalue, rel=1e-9)
    same = one_way_anova([[1.0, 2.0, 3.0]] * 4)
    assert same.f == 0.0 and same.p == 1.0


def test_anova_contrast_equals_two_group_f():
    # a +/- contrast between two groups equals the pooled t squared
    rng = np.random.default_rng(9)
    a, b = rng.normal(0, 1, 20), rng.normal(0.3, 1, 25)
    res = anova_contrast([a, b], [1, -1])
    sp2 = ((a.size - 1) * a.var(ddof=1) + (b.size - 1) * b.var(ddof=1)) / (a.size + b.size - 2)
    t = (a.mean() - b.mean()) / math.sqrt(sp2 * (1 / a.size + 1 / b.size))
    assert res.f == pytest.approx(t * t, rel=1e-12)
    assert (res.df1, res.df2) == (1, a.size + b.size - 2)


# -- loess --------------------------------------------------------------------


def test_loess_reproduces_constant_and_line():
    rng = np.random.default_rng(10)
    xs = rng.uniform(0, 10, 40)
    assert np.allclose(loess(xs, np.full(40, 3.0)), 3.0)
    ys = 2 * xs - 1
    assert np.allclose(loess(xs, ys, degree=1), ys, atol=1e-8)
    assert np.allclose(loess(xs, np.full(40, 3.0), degree=0), 3.0)


def test_loess_smooths_noise():
    rng = np.random.default_rng(11)
    xs = np.sort(rng.uniform(0, 2 * np.pi, 200))
    noise = rng.normal(0, 0.5, 200)
    fit = loess(xs, np.sin(xs) + noise, span=0.3)
    assert np.std(fit - np.sin(xs)) < np.std(noise)


def test_loess_matches_pointwise_weighted_fit():
    rng = np.random.default_rng(14)
    xs = rng.uniform(-3, 3, 60)
    ys = xs**2 + rng.normal(0, 0.3, 60)
    k = int(np.ceil(0.4 * 60))
    expected = []
    for x0 in xs:
        d = np.abs(xs - x0)
        nbr = np.argsort(d)[:k]
        w = (1 - (d[nbr] / d[nbr].max()) ** 3) ** 3
        coef = np.polyfit(xs[nbr] - x0, ys[nbr], 1, w=np.sqrt(w))
        expected.append(coef[1])
    assert np.allclose(loess(xs, ys, span=0.4), expected, atol=1e-6)


def test_loess_errors():
    xs = np.arange(10.0)
    with pytest.raises(ValueError):
        loess(xs[:4], xs[:4])
    with pytest.raises(ValueError):
        loess(xs, xs, span=0.2, degree=1)
    with pytest.raises(ValueError):
        loess(xs, xs, span=0.0)


# -- pca ----------------------------------------------------------------------


def test_pca_single_axis():
    x = np.linspace(-2, 2, 9)
    rows = np.column_stack([x, np.zeros(9), np.zeros(9)])
    s = pca_project(rows, 3)
    assert np.allclose(np.abs(s[:, 0]), np.abs(x - x.mean()))
    assert np.allclose(s[:, 1:], 0.0, atol=1e-12)


def test_pca_variance_ordering_and_uncorrelated():
    rng = np.random.default_rng(12)
    z = rng.normal(size=(300, 2))
    rows = np.column_stack([z[:, 0], 0.8 * z[:, 0] + 0.3 * z[:, 1]])
    s = pca_project(rows, 2)
    assert s[:, 0].var() >= s[:, 1].var()
    assert abs(np.corrcoef(s.T)[0, 1]) < 1e-8


def test_pca_matches_svd_up_to_sign():
    rng = np.random.default_rng(13)
    rows = rng.normal(size=(20, 5))
    s = pca_project(rows, 3)
    centered = rows - rows.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    ref = centered @ vt[:3].T
    for c in range(3):
        sign = np.sign(ref[:, c] @ s[:, c])
        assert np.allclose(s[:, c], sign * ref[:, c], atol=1e-8)
    corr = np.corrcoef(s.T)
    assert np.all(np.abs(corr[np.triu_indices(3, 1)]) < 1e-8)


def test_pca_k_too_large():
    with pytest.raises(ValueError):
        pca_project(np.ones((5, 2)), 3)
