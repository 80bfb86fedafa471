import itertools

import numpy as np
import pytest

from merit.exceptions import CollinearityError, ParameterError, SolverError
from merit.quantreg import (
    QuantileRegressor,
    bootstrap_se,
    fit_quantile,
    pinball_loss,
    subgradient_violation,
)


def enumerate_optimum(X, y, tau):
    """Exhaustive basic-solution oracle: best interpolant of p rows."""
    n, p = X.shape
    best = np.inf
    for comb in itertools.combinations(range(n), p):
        A = X[list(comb)]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        beta = np.linalg.solve(A, y[list(comb)])
        loss = pinball_loss(y - X @ beta, tau)
        best = min(best, loss)
    return best


def test_pinball_loss_examples():
    assert pinball_loss([1.0, -1.0], 0.5) == pytest.approx(1.0)
    assert pinball_loss([2.0], 0.9) == pytest.approx(1.8)
    assert pinball_loss([-2.0], 0.9) == pytest.approx(0.2)


def test_pinball_tau_validation():
    with pytest.raises(ParameterError):
        pinball_loss([1.0], 0.0)
    with pytest.raises(ParameterError):
        fit_quantile(np.ones((5, 1)), np.arange(5.0), 1.0)


def test_intercept_only_median_small():
    fit = fit_quantile(np.ones((3, 1)), np.array([1.0, 2.0, 9.0]), 0.5)
    assert fit.params[0] == pytest.approx(2.0, abs=1e-10)
    assert fit.objective == pytest.approx(4.0, abs=1e-8)
    assert fit.converged


def test_intercept_only_median_odd():
    fit = fit_quantile(np.ones((5, 1)), np.array([1.0, 2.0, 3.0, 4.0, 5.0]), 0.5)
    assert fit.params[0] == pytest.approx(3.0, abs=1e-10)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("tau", [0.25, 0.5, 0.9])
def test_objective_matches_enumeration(seed, tau):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(10, 31))
    X = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
    y = X @ np.array([1.0, 2.0, -0.5]) + rng.standard_t(3, size=n)
    fit = fit_quantile(X, y, tau)
    best = enumerate_optimum(X, y, tau)
    assert abs(fit.objective - best) <= 1e-6 * max(1.0, best)


def test_subgradient_bound_holds_and_detects_nonoptimum():
    rng = np.random.default_rng(7)
    X = np.column_stack([np.ones(200), rng.normal(size=(200, 2))])
    y = X @ np.array([1.0, -2.0, 0.5]) + rng.normal(size=200)
    fit = fit_quantile(X, y, 0.75)
    assert subgradient_violation(X, y, fit.params, 0.75).max() <= 1e-6
    off = fit.params + np.array([0.5, 0.0, 0.0])
    assert subgradient_violation(X, y, off, 0.75).max() > 1.0


def test_fitted_centroid_monotone_in_tau():
    rng = np.random.default_rng(8)
    X = np.column_stack([np.ones(300), rng.uniform(0, 10, size=(300, 2))])
    y = X @ np.array([5.0, 1.0, -0.5]) + rng.normal(scale=3.0, size=300)
    center = X.mean(axis=0)
    fitted = [center @ fit_quantile(X, y, tau).params for tau in (0.1, 0.25, 0.5, 0.75, 0.9)]
    assert all(b >= a - 1e-6 for a, b in zip(fitted, fitted[1:]))


def test_equivariance_response_and_column_scaling():
    rng = np.random.default_rng(9)
    X = np.column_stack([np.ones(120), rng.normal(size=(120, 2))])
    y = X @ np.array([1.0, 2.0, -1.0]) + rng.normal(size=120)
    base = fit_quantile(X, y, 0.7).params

    scaled_y = fit_quantile(X, 3.0 * y, 0.7).params
    np.testing.assert_allclose(scaled_y, 3.0 * base, atol=1e-8 * np.abs(base).max() * 3)

    X2 = X.copy()
    X2[:, 2] *= 50.0
    scaled_col = fit_quantile(X2, y, 0.7).params
    assert scaled_col[2] == pytest.approx(base[2] / 50.0, rel=1e-8)
    np.testing.assert_allclose(scaled_col[:2], base[:2], atol=1e-8)


def test_rank_deficient_design_raises():
    rng = np.random.default_rng(10)
    x = rng.normal(size=40)
    X = np.column_stack([np.ones(40), x, 2.0 * x])
    with pytest.raises(CollinearityError):
        fit_quantile(X, rng.normal(size=40), 0.5)


def test_nonconvergence_raises_solver_error_with_residuals():
    rng = np.random.default_rng(11)
    X = np.column_stack([np.ones(50), rng.normal(size=50)])
    y = rng.normal(size=50)
    with pytest.raises(SolverError) as err:
        fit_quantile(X, y, 0.5, max_iter=1)
    assert "primal" in err.value.residuals


def test_polish_returns_interpolating_vertex():
    rng = np.random.default_rng(12)
    X = np.column_stack([np.ones(60), rng.normal(size=(60, 2))])
    y = X @ np.array([1.0, 2.0, -0.5]) + rng.normal(size=60)
    fit = fit_quantile(X, y, 0.3)
    assert fit.polished
    assert fit.basis is not None and len(fit.basis) == 3
    resid = y - X @ fit.params
    assert np.max(np.abs(resid[fit.basis])) < 1e-9


# ---------------------------------------------------------------------------
# bootstrap
# ---------------------------------------------------------------------------


def test_bootstrap_degenerate_exact_fit():
    rng = np.random.default_rng(13)
    X = np.column_stack([np.ones(40), rng.normal(size=40)])
    y = X @ np.array([2.0, -1.0])  # exact linear response
    inference = bootstrap_se(X, y, 0.5, n_replicates=100, seed=5)
    np.testing.assert_allclose(inference.std_errors, 0.0, atol=1e-12)
    assert inference.degenerate
    assert inference.p_values[0] == 0.0  # nonzero estimate, zero spread


def test_bootstrap_same_seed_bit_identical():
    rng = np.random.default_rng(14)
    X = np.column_stack([np.ones(80), rng.normal(size=80)])
    y = X @ np.array([1.0, 0.5]) + rng.normal(size=80)
    a = bootstrap_se(X, y, 0.5, n_replicates=100, seed=21)
    b = bootstrap_se(X, y, 0.5, n_replicates=100, seed=21)
    assert np.array_equal(a.std_errors, b.std_errors)
    assert np.array_equal(a.p_values, b.p_values)
    c = bootstrap_se(X, y, 0.5, n_replicates=100, seed=22)
    assert not np.array_equal(a.std_errors, c.std_errors)


def test_bootstrap_needs_100_replicates():
    with pytest.raises(ParameterError):
        bootstrap_se(np.ones((10, 1)), np.arange(10.0), 0.5, n_replicates=50)


def test_bootstrap_redraws_rank_deficient_replicates():
    # a column that is zero in all but two rows: many resamples are deficient
    rng = np.random.default_rng(15)
    n = 12
    sparse = np.zeros(n)
    sparse[:2] = 1.0
    X = np.column_stack([np.ones(n), sparse])
    y = rng.normal(size=n)
    inference = bootstrap_se(X, y, 0.5, n_replicates=100, seed=3)
    assert np.all(np.isfinite(inference.std_errors))
    again = bootstrap_se(X, y, 0.5, n_replicates=100, seed=3)
    assert np.array_equal(inference.std_errors, again.std_errors)


def test_bootstrap_sanity_single_trial():
    rng = np.random.default_rng(np.random.SeedSequence((1234, 0)))
    y = rng.normal(size=500)
    inference = bootstrap_se(np.ones((500, 1)), y, 0.5, n_replicates=1000, seed=(1234, 0))
    asymptotic = 1.0 / (2.0 * 0.3989422804014327 * np.sqrt(500))
    assert abs(inference.std_errors[0] / asymptotic - 1.0) <= 0.2


def test_quantile_regressor_estimator():
    rng = np.random.default_rng(16)
    X = rng.normal(size=(200, 2))
    y = 1.0 + X @ np.array([2.0, -1.0]) + rng.normal(size=200)
    est = QuantileRegressor(tau=0.5).fit(X, y)
    assert est.get_params()["tau"] == 0.5
    assert est.converged_
    np.testing.assert_allclose(est.coef_, [2.0, -1.0], atol=0.3)
    pred = est.predict(X[:5])
    np.testing.assert_allclose(pred, est.intercept_ + X[:5] @ est.coef_)
