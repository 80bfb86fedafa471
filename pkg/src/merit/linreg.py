"""Ordinary least squares with classical inference.

Fits are solved through a QR decomposition of the design matrix (never
the raw normal equations), standard errors come from the homoskedastic
covariance sigma^2 (X'X)^-1, and two-sided p-values use a Student-t
tail implemented from scratch via the regularized incomplete beta
function. A Pearson correlation matrix is provided as the
multicollinearity diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import (
    CollinearityError,
    ParameterError,
    UndefinedCorrelationError,
)

RESPONSES = ("detrended_price", "detrended_volatility")
REGRESSORS = ("hydro_pct", "wind_pct", "solar_pct")

#: relative singular-value cutoff below which a design is treated as
#: rank deficient
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class ModelSpec:
    """One regression model of the study grid.

    ``regressors`` is an ordered subset of the penetration columns and
    ``response`` one of the two detrended series. An intercept is always
    included.
    """

    response: str
    regressors: tuple[str, ...]
    include_intercept: bool = True

    def __post_init__(self):
        if self.response not in RESPONSES:
            raise ParameterError(f"unknown response {self.response!r}")
        if not self.regressors:
            raise ParameterError("model spec needs at least one regressor")
        if len(set(self.regressors)) != len(self.regressors):
            raise ParameterError(f"duplicate regressors in {self.regressors}")
        for name in self.regressors:
            if name not in REGRESSORS:
                raise ParameterError(f"unknown regressor {name!r}")
        if not self.include_intercept:
            raise ParameterError("models are always fit with an intercept")

    @property
    def label(self) -> str:
        """Short model id, e.g. ``hydro+wind+solar``."""
        return "+".join(n.removesuffix("_pct") for n in self.regressors)

    @property
    def coefficient_names(self) -> tuple[str, ...]:
        return ("intercept",) + self.regressors


@dataclass
class RegressionResult:
    """A fitted model: point estimates plus classical or bootstrap inference."""

    spec: ModelSpec
    names: tuple[str, ...]
    estimates: np.ndarray
    std_errors: np.ndarray
    p_values: np.ndarray
    n_obs: int
    residual_dof: int
    method: str = "ols"
    tau: float | None = None

    def __post_init__(self):
        k = len(self.names)
        if not (len(self.estimates) == len(self.std_errors) == len(self.p_values) == k):
            raise ParameterError("estimate/se/p-value vectors must share one length")

    @property
    def method_label(self) -> str:
        if self.tau is None:
            return self.method
        return f"{self.method}(tau={self.tau:g})"

    def rows(self) -> list[dict]:
        """One serializable dict per coefficient, in design order."""
        return [
            {
                "model": self.spec.label,
                "coefficient": name,
                "estimate": float(est),
                "std_error": float(se),
                "p_value": float(p),
            }
            for name, est, se, p in zip(
                self.names, self.estimates, self.std_errors, self.p_values
            )
        ]


# ---------------------------------------------------------------------------
# Student-t tail probability
# ---------------------------------------------------------------------------

_BETACF_MAX_ITER = 600
_BETACF_EPS = 1e-15
_BETACF_TINY = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETACF_TINY:
        d = _BETACF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise ParameterError(
        f"incomplete beta continued fraction failed to converge (a={a}, b={b}, x={x})"
    )


def _betaln(a: float, b: float) -> float:
    """log B(a, b), stable when one argument is much larger than the other.

    For large arguments lgamma(a) - lgamma(a+b) cancels catastrophically
    (two ~1e6 values differing by ~10), so that difference is expanded
    analytically via Stirling instead.
    """
    if a < b:
        a, b = b, a
    if a < 1e4:
        return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    # lgamma(a+b) - lgamma(a), cancellation-free for a >= 1e4
    delta = (
        (a - 0.5) * math.log1p(b / a)
        + b * math.log(a + b)
        - b
        - b / (12.0 * a * (a + b))
    )
    return math.lgamma(b) - delta


def _betainc_reg(
    a: float, b: float, x: float, xc: float,
    log_x: float | None = None, log_xc: float | None = None,
) -> float:
    """Regularized incomplete beta I_x(a, b), with xc = 1 - x given exactly.

    ``log_x``/``log_xc`` may be supplied when the caller can compute them
    with less rounding than log(x) of the stored value allows (x near 1
    with a large first parameter).
    """
    if x <= 0.0:
        return 0.0
    if xc <= 0.0:
        return 1.0
    log_front = (
        a * (math.log(x) if log_x is None else log_x)
        + b * (math.log(xc) if log_xc is None else log_xc)
        - _betaln(a, b)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, xc) / b


def p_value_t(t_stat: float, dof: float) -> float:
    """Two-sided tail probability P(|T_dof| >= |t_stat|) of Student's t.

    Evaluated as the regularized incomplete beta I_x(dof/2, 1/2) at
    x = dof / (dof + t^2), via a continued fraction expansion.
    """
    if not dof >= 1:
        raise ParameterError(f"dof must be >= 1, got {dof}")
    t = float(t_stat)
    if math.isnan(t):
        raise ParameterError("t statistic is NaN")
    if math.isinf(t):
        return 0.0
    if t == 0.0:
        return 1.0
    t2 = t * t
    # 1 - x and log(x) computed directly to avoid cancellation at large dof
    xc = t2 / (dof + t2)
    x = dof / (dof + t2)
    log_x = -math.log1p(t2 / dof)
    return min(1.0, max(0.0, _betainc_reg(dof / 2.0, 0.5, x, xc, log_x=log_x)))


def normal_p_value(z: float) -> float:
    """Two-sided standard normal tail, used for bootstrap inference."""
    if math.isnan(z):
        raise ParameterError("z statistic is NaN")
    return math.erfc(abs(z) / math.sqrt(2.0))


# ---------------------------------------------------------------------------
# OLS core
# ---------------------------------------------------------------------------


@dataclass
class OlsFit:
    """Raw output of :func:`fit_ols` before it is wrapped in a RegressionResult."""

    params: np.ndarray
    std_errors: np.ndarray
    t_values: np.ndarray
    p_values: np.ndarray
    n_obs: int
    residual_dof: int
    rss: float
    sigma2: float
    cov_params: np.ndarray = field(repr=False, default=None)


def check_design(X, y=None, min_rows_over_cols: int = 1):
    """Validate and coerce a design matrix (and optional response) to float64."""
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim != 2:
        raise ParameterError(f"design must be 2-D, got shape {X.shape}")
    n, p = X.shape
    if not np.all(np.isfinite(X)):
        raise ParameterError("design matrix contains non-finite values")
    if y is None:
        return X
    y = np.ascontiguousarray(y, dtype=float).reshape(-1)
    if y.shape[0] != n:
        raise ParameterError(f"response length {y.shape[0]} != design rows {n}")
    if not np.all(np.isfinite(y)):
        raise ParameterError("response contains non-finite values")
    if n < p + min_rows_over_cols:
        raise ParameterError(f"need more observations than parameters (n={n}, p={p})")
    return X, y


def assert_full_rank(X, names=None, rtol: float = RANK_RTOL):
    """Raise :class:`CollinearityError` naming the offending column if X is deficient."""
    _, s, vt = np.linalg.svd(X, full_matrices=False)
    if s[0] == 0.0 or s[-1] < rtol * s[0]:
        col = int(np.argmax(np.abs(vt[-1])))
        label = names[col] if names is not None else col
        raise CollinearityError(
            f"design is rank deficient (s_min/s_max = {s[-1] / max(s[0], 1e-300):.2e}); "
            f"column {label!r} is closest to linearly dependent",
            column=label,
        )


def qr_lstsq(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least squares via reduced QR; returns (beta, R)."""
    Q, R = np.linalg.qr(X)
    beta = linalg.solve_triangular(R, Q.T @ y, check_finite=False)
    return beta, R


def fit_ols(X, y, names=None) -> OlsFit:
    """Ordinary least squares with classical standard errors and p-values.

    The system is solved through a QR factorization; the covariance is
    sigma^2 (X'X)^-1 with sigma^2 = RSS / (n - p).
    """
    X, y = check_design(X, y)
    n, p = X.shape
    assert_full_rank(X, names)
    beta, R = qr_lstsq(X, y)
    resid = y - X @ beta
    rss = float(resid @ resid)
    dof = n - p
    sigma2 = rss / dof
    r_inv = linalg.solve_triangular(R, np.eye(p), check_finite=False)
    cov = sigma2 * (r_inv @ r_inv.T)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_vals = beta / se
    t_vals[np.isnan(t_vals)] = 0.0  # 0/0 on exact-fit degenerate data
    p_vals = np.array([p_value_t(t, dof) for t in t_vals])
    return OlsFit(
        params=beta,
        std_errors=se,
        t_values=t_vals,
        p_values=p_vals,
        n_obs=n,
        residual_dof=dof,
        rss=rss,
        sigma2=sigma2,
        cov_params=cov,
    )


def correlation_matrix(data, names=None) -> tuple[tuple[str, ...], np.ndarray]:
    """Pearson correlations between the columns of ``data`` (n x k).

    The diagonal is exactly 1; a constant column raises
    :class:`UndefinedCorrelationError`.
    """
    data = np.ascontiguousarray(data, dtype=float)
    if data.ndim != 2:
        raise ParameterError("correlation input must be a 2-D column stack")
    n, k = data.shape
    if n < 2:
        raise ParameterError("correlation needs at least 2 rows")
    if names is None:
        names = tuple(f"col{j}" for j in range(k))
    names = tuple(names)
    centered = data - data.mean(axis=0)
    norms = np.sqrt((centered**2).sum(axis=0))
    for j in range(k):
        if np.ptp(data[:, j]) == 0.0:
            raise UndefinedCorrelationError(
                f"column {names[j]!r} is constant; correlation undefined"
            )
    r = (centered.T @ centered) / np.outer(norms, norms)
    np.fill_diagonal(r, 1.0)
    return names, np.clip(r, -1.0, 1.0)


class OLSRegressor(RegressorMixin, BaseEstimator):
    """Linear regression with classical (homoskedastic) inference.

    After ``fit``, exposes sklearn-style ``coef_`` / ``intercept_`` along
    with ``std_errors_``, ``t_values_`` and ``p_values_`` over the full
    parameter vector (intercept first when ``fit_intercept``).
    """

    def __init__(self, fit_intercept: bool = True):
        self.fit_intercept = fit_intercept

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        design = np.column_stack([np.ones(len(y)), X]) if self.fit_intercept else X
        core = fit_ols(design, y)
        self.params_ = core.params
        self.std_errors_ = core.std_errors
        self.t_values_ = core.t_values
        self.p_values_ = core.p_values
        self.n_obs_ = core.n_obs
        self.residual_dof_ = core.residual_dof
        self.rss_ = core.rss
        if self.fit_intercept:
            self.intercept_ = float(core.params[0])
            self.coef_ = core.params[1:]
        else:
            self.intercept_ = 0.0
            self.coef_ = core.params
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return self.intercept_ + X @ self.coef_
