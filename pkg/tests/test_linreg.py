import math

import numpy as np
import pytest
from scipy import integrate

from merit.exceptions import CollinearityError, ParameterError, UndefinedCorrelationError
from merit.linreg import (
    ModelSpec,
    OLSRegressor,
    correlation_matrix,
    fit_ols,
    normal_p_value,
    p_value_t,
)


def t_density(x, dof):
    log_c = math.lgamma((dof + 1) / 2) - math.lgamma(dof / 2) - 0.5 * math.log(dof * math.pi)
    return math.exp(log_c - (dof + 1) / 2 * math.log1p(x * x / dof))


def p_value_quadrature(t, dof):
    """Adaptive-quadrature oracle for the two-sided t tail."""
    tail, _ = integrate.quad(t_density, abs(t), np.inf, args=(dof,), epsabs=1e-13, epsrel=1e-13)
    return 2.0 * tail


def normal_equations_oracle(X, y):
    """Independent inverse-based OLS with classical standard errors."""
    xtx_inv = np.linalg.inv(X.T @ X)
    beta = xtx_inv @ (X.T @ y)
    resid = y - X @ beta
    dof = X.shape[0] - X.shape[1]
    sigma2 = float(resid @ resid) / dof
    se = np.sqrt(np.diag(sigma2 * xtx_inv))
    return beta, se, dof


# ---------------------------------------------------------------------------
# ModelSpec
# ---------------------------------------------------------------------------


def test_model_spec_label_and_names():
    spec = ModelSpec("detrended_price", ("hydro_pct", "wind_pct", "solar_pct"))
    assert spec.label == "hydro+wind+solar"
    assert spec.coefficient_names == ("intercept", "hydro_pct", "wind_pct", "solar_pct")


@pytest.mark.parametrize(
    "kwargs",
    [
        {"response": "price", "regressors": ("hydro_pct",)},
        {"response": "detrended_price", "regressors": ()},
        {"response": "detrended_price", "regressors": ("hydro_pct", "hydro_pct")},
        {"response": "detrended_price", "regressors": ("volume",)},
    ],
)
def test_model_spec_validation(kwargs):
    with pytest.raises(ParameterError):
        ModelSpec(**kwargs)


# ---------------------------------------------------------------------------
# OLS
# ---------------------------------------------------------------------------


def test_exact_linear_data():
    x = np.arange(1.0, 11.0)
    X = np.column_stack([np.ones(10), x])
    fit = fit_ols(X, 2.0 * x)
    assert fit.params[1] == pytest.approx(2.0, abs=1e-12)
    assert fit.params[0] == pytest.approx(0.0, abs=1e-10)
    assert fit.rss == pytest.approx(0.0, abs=1e-18)


def test_duplicated_column_raises_collinearity():
    rng = np.random.default_rng(0)
    x = rng.normal(size=30)
    X = np.column_stack([np.ones(30), x, x])
    with pytest.raises(CollinearityError):
        fit_ols(X, rng.normal(size=30), names=("intercept", "a", "a_copy"))


def test_collinearity_error_names_offending_column():
    rng = np.random.default_rng(1)
    a = rng.normal(size=40)
    b = rng.normal(size=40)
    X = np.column_stack([np.ones(40), a, b, a + b])
    with pytest.raises(CollinearityError) as err:
        fit_ols(X, rng.normal(size=40), names=("intercept", "a", "b", "a_plus_b"))
    assert err.value.column in ("a", "b", "a_plus_b")


@pytest.mark.parametrize("seed", range(20))
def test_matches_normal_equations_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(20, 201))
    p = int(rng.integers(2, 7))
    X = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    y = X @ rng.normal(size=p) + rng.normal(size=n)
    fit = fit_ols(X, y)
    beta, se, dof = normal_equations_oracle(X, y)
    np.testing.assert_allclose(fit.params, beta, atol=1e-8)
    np.testing.assert_allclose(fit.std_errors, se, atol=1e-8)
    p_oracle = [p_value_quadrature(b / s, dof) for b, s in zip(beta, se)]
    np.testing.assert_allclose(fit.p_values, p_oracle, atol=1e-9)


def test_residual_orthogonality():
    rng = np.random.default_rng(9)
    X = np.column_stack([np.ones(150), rng.normal(size=(150, 4))])
    y = rng.normal(size=150)
    fit = fit_ols(X, y)
    resid = y - X @ fit.params
    scaled = np.abs(X.T @ resid) / np.linalg.norm(X, axis=0)
    assert scaled.max() < 1e-8


def test_prediction_invariant_to_column_rescaling():
    rng = np.random.default_rng(10)
    X = np.column_stack([np.ones(80), rng.normal(size=(80, 2))])
    y = rng.normal(size=80)
    fit = fit_ols(X, y)
    X2 = X.copy()
    X2[:, 1] *= 100.0
    fit2 = fit_ols(X2, y)
    assert fit2.params[1] == pytest.approx(fit.params[1] / 100.0, rel=1e-9)
    np.testing.assert_allclose(X2 @ fit2.params, X @ fit.params, atol=1e-9 * np.abs(y).max())


def test_needs_more_rows_than_columns():
    with pytest.raises(ParameterError):
        fit_ols(np.ones((3, 3)), np.zeros(3))


# ---------------------------------------------------------------------------
# Student-t tail
# ---------------------------------------------------------------------------


def test_p_value_t_at_zero():
    for dof in (1, 2, 10, 1000):
        assert p_value_t(0.0, dof) == 1.0


def test_p_value_t_cauchy_quartile():
    assert p_value_t(1.0, 1) == pytest.approx(0.5, abs=1e-12)


def test_p_value_t_matches_quadrature():
    assert p_value_t(2.0, 10) == pytest.approx(p_value_quadrature(2.0, 10), abs=1e-9)


@pytest.mark.parametrize("dof", [1, 2, 5, 30, 200, 5000, 10**6])
@pytest.mark.parametrize("t", [1e-4, 0.1, 0.5, 1.0, 2.5, 6.0, 30.0])
def test_p_value_t_matches_mpmath(dof, t):
    import mpmath

    mpmath.mp.dps = 40
    x = mpmath.mpf(dof) / (dof + mpmath.mpf(t) ** 2)
    expected = float(mpmath.betainc(dof / 2, mpmath.mpf(1) / 2, 0, x, regularized=True))
    assert p_value_t(t, dof) == pytest.approx(expected, abs=1e-10)


def test_p_value_t_monotone_in_t():
    grid = np.linspace(0.0, 12.0, 200)
    for dof in (1, 7, 500):
        values = [p_value_t(t, dof) for t in grid]
        assert all(a >= b - 1e-15 for a, b in zip(values, values[1:]))


def test_p_value_t_edge_cases():
    assert p_value_t(np.inf, 5) == 0.0
    with pytest.raises(ParameterError):
        p_value_t(1.0, 0.5)
    with pytest.raises(ParameterError):
        p_value_t(np.nan, 5)


def test_normal_p_value():
    assert normal_p_value(0.0) == 1.0
    assert normal_p_value(1.959963984540054) == pytest.approx(0.05, abs=1e-12)


# ---------------------------------------------------------------------------
# correlation
# ---------------------------------------------------------------------------


def test_correlation_self_and_negation():
    rng = np.random.default_rng(11)
    x = rng.normal(size=60)
    names, r = correlation_matrix(np.column_stack([x, x, -x]), ("a", "b", "c"))
    assert r[0, 0] == 1.0
    assert r[0, 1] == pytest.approx(1.0, abs=1e-12)
    assert r[0, 2] == pytest.approx(-1.0, abs=1e-12)


def test_correlation_matches_direct_formula():
    rng = np.random.default_rng(12)
    data = rng.normal(size=(50, 4))
    _, r = correlation_matrix(data)
    for i in range(4):
        for j in range(4):
            xi, xj = data[:, i] - data[:, i].mean(), data[:, j] - data[:, j].mean()
            direct = (xi @ xj) / np.sqrt((xi @ xi) * (xj @ xj))
            if i == j:
                direct = 1.0
            assert r[i, j] == pytest.approx(direct, abs=1e-12)


def test_correlation_constant_column_raises():
    data = np.column_stack([np.ones(10), np.arange(10.0)])
    with pytest.raises(UndefinedCorrelationError, match="col0"):
        correlation_matrix(data)


def test_correlation_needs_two_rows():
    with pytest.raises(ParameterError):
        correlation_matrix(np.ones((1, 2)))


# ---------------------------------------------------------------------------
# estimator wrapper
# ---------------------------------------------------------------------------


def test_ols_regressor_estimator():
    rng = np.random.default_rng(13)
    X = rng.normal(size=(100, 3))
    y = 1.5 + X @ np.array([2.0, -1.0, 0.5]) + rng.normal(scale=0.1, size=100)
    est = OLSRegressor().fit(X, y)
    assert est.get_params() == {"fit_intercept": True}
    np.testing.assert_allclose(est.coef_, [2.0, -1.0, 0.5], atol=0.05)
    assert est.intercept_ == pytest.approx(1.5, abs=0.05)
    assert len(est.p_values_) == 4
    np.testing.assert_allclose(est.predict(X), np.column_stack([np.ones(100), X]) @ est.params_)
    assert est.score(X, y) > 0.99
