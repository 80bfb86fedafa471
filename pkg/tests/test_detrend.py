from datetime import datetime, timedelta

import numpy as np
import pytest

from merit.detrend import (
    CalendarDetrender,
    CalendarFeatures,
    DetrendModel,
    N_PARAMS,
    calendar_design,
    coefficient_names,
    fit_calendar_model,
    season_of,
)
from merit.exceptions import FitError, ParameterError


@pytest.mark.parametrize(
    "ts,season",
    [
        (datetime(2015, 1, 15, 10), "winter"),
        (datetime(2015, 7, 4, 14), "summer"),
        (datetime(2015, 12, 1, 0), "winter"),
        (datetime(2015, 3, 1, 0), "spring"),
        (datetime(2015, 11, 30, 23), "fall"),
    ],
)
def test_season_of(ts, season):
    assert season_of(ts) == season


def test_calendar_features_from_timestamp():
    feat = CalendarFeatures.from_timestamp(datetime(2015, 8, 1, 13))  # a Saturday
    assert feat == CalendarFeatures(hour=13, season="summer", weekend=True)
    with pytest.raises(ParameterError):
        CalendarFeatures(hour=24, season="winter", weekend=False)


def full_year_timestamps(n=8760):
    start = datetime(2015, 1, 1)
    return [start + timedelta(hours=i) for i in range(n)]


def test_design_dimensions():
    ts = full_year_timestamps(200 * 24)
    X = calendar_design(ts)
    assert X.shape == (200 * 24, N_PARAMS)
    assert N_PARAMS == 97
    assert len(coefficient_names()) == 97


def test_constant_response_gives_zero_effects():
    ts = full_year_timestamps()
    y = np.full(len(ts), 42.5)
    model = fit_calendar_model(ts, y)
    assert model.intercept == pytest.approx(42.5, abs=1e-9)
    assert max(abs(v) for v in model.effects.values()) < 1e-9
    detrended = model.detrend(ts, y)
    np.testing.assert_allclose(detrended, 42.5, atol=1e-9)


def test_pure_summer_effect_recovered():
    ts = full_year_timestamps()
    summer = np.array([1.0 if season_of(t) == "summer" else 0.0 for t in ts])
    y = 10.0 + 5.0 * summer
    model = fit_calendar_model(ts, y)
    assert model.effects["season[summer]"] == pytest.approx(5.0, abs=1e-8)
    others = [v for k, v in model.effects.items() if k != "season[summer]"]
    assert max(abs(v) for v in others) < 1e-8
    # independent normal-equations oracle for the same design
    X = calendar_design(ts)
    beta = np.linalg.inv(X.T @ X) @ (X.T @ y)
    assert beta[coefficient_names().index("season[summer]")] == pytest.approx(5.0, abs=1e-8)


def test_random_panel_matches_normal_equations_oracle():
    rng = np.random.default_rng(42)
    ts = full_year_timestamps()
    y = rng.normal(30.0, 10.0, len(ts))
    model = fit_calendar_model(ts, y)
    X = calendar_design(ts)
    beta_oracle = np.linalg.solve(X.T @ X, X.T @ y)
    names = coefficient_names()
    fitted = np.array([model.intercept] + [model.effects[n] for n in names[1:]])
    np.testing.assert_allclose(fitted, beta_oracle, atol=1e-8)


def test_detrend_constant_plus_calendar_signal():
    rng = np.random.default_rng(1)
    ts = full_year_timestamps()
    hours = np.array([t.hour for t in ts])
    signal = 4.0 * np.sin(2 * np.pi * hours / 24)
    y = signal + 25.0
    model = fit_calendar_model(ts, y)
    detrended = model.detrend(ts, y)
    np.testing.assert_allclose(detrended, np.full(len(ts), y.mean()), atol=1e-8)


def test_detrend_mean_is_grand_mean():
    rng = np.random.default_rng(2)
    ts = full_year_timestamps()
    y = rng.normal(35.0, 12.0, len(ts))
    model = fit_calendar_model(ts, y)
    detrended = model.detrend(ts, y)
    assert detrended.mean() == pytest.approx(model.grand_mean, abs=1e-9)
    assert model.grand_mean == pytest.approx(y.mean())


def test_redetrending_is_idempotent():
    rng = np.random.default_rng(3)
    ts = full_year_timestamps()
    y = rng.normal(35.0, 12.0, len(ts))
    once = fit_calendar_model(ts, y).detrend(ts, y)
    twice = fit_calendar_model(ts, once).detrend(ts, once)
    assert np.max(np.abs(twice - once)) < 1e-8


def test_cell_orthogonality():
    rng = np.random.default_rng(4)
    ts = full_year_timestamps()
    y = rng.normal(35.0, 12.0, len(ts))
    model = fit_calendar_model(ts, y)
    centered = model.detrend(ts, y) - model.grand_mean
    keys = [(t.hour, season_of(t)) for t in ts]
    for cell in {(h, s) for h, s in keys}:
        mask = np.array([k == cell for k in keys])
        assert abs(centered[mask].mean()) < 1e-8
    weekend = np.array([t.weekday() >= 5 for t in ts])
    assert abs(centered[weekend].mean()) < 1e-8
    assert abs(centered[~weekend].mean()) < 1e-8


def test_affine_equivariance():
    rng = np.random.default_rng(5)
    ts = full_year_timestamps()
    y = rng.normal(35.0, 12.0, len(ts))
    base = fit_calendar_model(ts, y).detrend(ts, y)
    shifted = fit_calendar_model(ts, y + 100.0).detrend(ts, y + 100.0)
    np.testing.assert_allclose(shifted, base + 100.0, atol=1e-9 * 150.0)


def test_fitted_plus_residual_reconstructs():
    rng = np.random.default_rng(6)
    ts = full_year_timestamps()
    y = rng.normal(35.0, 12.0, len(ts))
    model = fit_calendar_model(ts, y)
    fitted = model.predict(ts)
    residual = y - fitted
    np.testing.assert_allclose(fitted + residual, y, rtol=1e-9)


def test_missing_cells_raise_naming_them():
    # winter mornings only: summer cells empty
    start = datetime(2015, 1, 5)
    ts = [start + timedelta(hours=i) for i in range(500)]
    with pytest.raises(FitError, match=r"season=summer"):
        fit_calendar_model(ts, np.zeros(len(ts)))


def test_weekend_coverage_required():
    # weekdays only
    ts = [t for t in full_year_timestamps() if t.weekday() < 5]
    with pytest.raises(FitError, match="weekend"):
        fit_calendar_model(ts, np.zeros(len(ts)))


def test_model_json_round_trip():
    rng = np.random.default_rng(7)
    ts = full_year_timestamps()
    y = rng.normal(35.0, 12.0, len(ts))
    model = fit_calendar_model(ts, y)
    back = DetrendModel.from_json(model.to_json())
    np.testing.assert_array_equal(back.predict(ts), model.predict(ts))
    assert back.residual_dof == model.residual_dof


def test_predict_missing_effect_raises():
    model = DetrendModel(intercept=1.0, effects={"weekend": 0.0}, grand_mean=1.0, residual_dof=1)
    with pytest.raises(FitError, match="missing effect"):
        model.predict([datetime(2015, 1, 1, 5)])


def test_estimator_wrapper():
    rng = np.random.default_rng(8)
    ts = full_year_timestamps()
    y = rng.normal(35.0, 12.0, len(ts))
    est = CalendarDetrender().fit(ts, y)
    assert est.get_params() == {}
    np.testing.assert_array_equal(est.detrend(ts, y), est.model_.detrend(ts, y))
    with pytest.raises(FitError):
        CalendarDetrender().predict(ts)
