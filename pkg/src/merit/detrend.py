"""Removal of deterministic calendar effects from the system price.

The adjustment model regresses the hourly price on categorical hour,
season, weekend, and hour x season terms with reference-cell coding
(hour 0, winter, weekday are the reference levels), giving
1 + 23 + 3 + 69 + 1 = 97 parameters. The detrended price is the fit
residual recentered at the grand mean, so the detrended series keeps
the sample's overall price level instead of averaging to zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import FitError, InsufficientDataError, ParameterError
from .linreg import check_design, qr_lstsq

SEASONS = ("winter", "spring", "summer", "fall")
_INTERACTION_SEASONS = SEASONS[1:]  # winter is the reference level

_SEASON_BY_MONTH = {
    12: "winter", 1: "winter", 2: "winter",
    3: "spring", 4: "spring", 5: "spring",
    6: "summer", 7: "summer", 8: "summer",
    9: "fall", 10: "fall", 11: "fall",
}

N_PARAMS = 1 + 23 + 3 + 69 + 1


def season_of(timestamp: datetime) -> str:
    """Meteorological season of a timestamp (month-based)."""
    return _SEASON_BY_MONTH[timestamp.month]


@dataclass(frozen=True)
class CalendarFeatures:
    """Categorical calendar position of one hour."""

    hour: int
    season: str
    weekend: bool

    def __post_init__(self):
        if not 0 <= self.hour <= 23:
            raise ParameterError(f"hour must be in [0, 23], got {self.hour}")
        if self.season not in SEASONS:
            raise ParameterError(f"unknown season {self.season!r}")

    @classmethod
    def from_timestamp(cls, ts: datetime) -> "CalendarFeatures":
        return cls(hour=ts.hour, season=season_of(ts), weekend=ts.weekday() >= 5)


def coefficient_names() -> list[str]:
    names = ["intercept"]
    names += [f"hour[{h}]" for h in range(1, 24)]
    names += [f"season[{s}]" for s in _INTERACTION_SEASONS]
    names += [
        f"hour[{h}]:season[{s}]" for h in range(1, 24) for s in _INTERACTION_SEASONS
    ]
    names.append("weekend")
    return names


def _feature_codes(timestamps) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    hours = np.fromiter((ts.hour for ts in timestamps), dtype=int, count=len(timestamps))
    seasons = np.fromiter(
        (SEASONS.index(season_of(ts)) for ts in timestamps), dtype=int, count=len(timestamps)
    )
    weekend = np.fromiter(
        (1.0 if ts.weekday() >= 5 else 0.0 for ts in timestamps),
        dtype=float,
        count=len(timestamps),
    )
    return hours, seasons, weekend


def calendar_design(timestamps) -> np.ndarray:
    """Reference-coded design matrix (n x 97) for the calendar model."""
    n = len(timestamps)
    hours, seasons, weekend = _feature_codes(timestamps)
    X = np.zeros((n, N_PARAMS))
    X[:, 0] = 1.0
    rows = np.arange(n)
    h_mask = hours >= 1
    X[rows[h_mask], hours[h_mask]] = 1.0  # columns 1..23
    s_mask = seasons >= 1
    X[rows[s_mask], 23 + seasons[s_mask]] = 1.0  # columns 24..26
    inter = h_mask & s_mask
    inter_col = 27 + (hours - 1) * 3 + (seasons - 1)
    X[rows[inter], inter_col[inter]] = 1.0  # columns 27..95
    X[:, 96] = weekend
    return X


def _check_coverage(timestamps):
    hours, seasons, weekend = _feature_codes(timestamps)
    occupied = np.zeros((24, 4), dtype=bool)
    occupied[hours, seasons] = True
    missing = [
        f"(hour={h}, season={SEASONS[s]})"
        for h in range(24)
        for s in range(4)
        if not occupied[h, s]
    ]
    if missing:
        raise FitError(
            f"calendar design is rank deficient; {len(missing)} empty cells: "
            + ", ".join(missing[:8])
            + (", ..." if len(missing) > 8 else "")
        )
    if weekend.min() == weekend.max():
        raise FitError("calendar design needs both weekend and weekday observations")


@dataclass
class DetrendModel:
    """Fitted calendar adjustment: reference-coded effects plus the grand mean."""

    intercept: float
    effects: dict[str, float]
    grand_mean: float
    residual_dof: int

    def _tables(self) -> tuple[np.ndarray, float]:
        """(24 x 4 x 2) fitted-value lookup by (hour, season, weekend)."""
        cell = np.empty((24, 4))
        for h in range(24):
            for s, season in enumerate(SEASONS):
                value = self.intercept
                if h >= 1:
                    value += self.effects[f"hour[{h}]"]
                if season != "winter":
                    value += self.effects[f"season[{season}]"]
                    if h >= 1:
                        value += self.effects[f"hour[{h}]:season[{season}]"]
                cell[h, s] = value
        return cell, self.effects["weekend"]

    def predict(self, timestamps) -> np.ndarray:
        """Fitted calendar effect for each timestamp."""
        try:
            cell, weekend_effect = self._tables()
        except KeyError as exc:
            raise FitError(f"detrend model is missing effect {exc}") from exc
        hours, seasons, weekend = _feature_codes(timestamps)
        return cell[hours, seasons] + weekend_effect * weekend

    def detrend(self, timestamps, values) -> np.ndarray:
        """Residual plus grand mean: the detrended price series."""
        values = np.asarray(values, dtype=float)
        return values - self.predict(timestamps) + self.grand_mean

    def to_json_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "effects": {k: self.effects[k] for k in sorted(self.effects)},
            "grand_mean": self.grand_mean,
            "residual_dof": self.residual_dof,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json_dict(cls, data: dict) -> "DetrendModel":
        return cls(
            intercept=float(data["intercept"]),
            effects={k: float(v) for k, v in data["effects"].items()},
            grand_mean=float(data["grand_mean"]),
            residual_dof=int(data["residual_dof"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "DetrendModel":
        return cls.from_json_dict(json.loads(text))


def fit_calendar_model(timestamps, values) -> DetrendModel:
    """Least-squares fit of the calendar adjustment model."""
    values = np.asarray(values, dtype=float)
    if len(timestamps) != len(values):
        raise ParameterError("timestamps and values must have equal length")
    if len(values) <= N_PARAMS:
        raise InsufficientDataError(
            f"calendar fit needs more than {N_PARAMS} observations, got {len(values)}"
        )
    _check_coverage(timestamps)
    X = calendar_design(timestamps)
    X, y = check_design(X, values)
    beta, _ = qr_lstsq(X, y)
    names = coefficient_names()
    return DetrendModel(
        intercept=float(beta[0]),
        effects={name: float(b) for name, b in zip(names[1:], beta[1:])},
        grand_mean=float(y.mean()),
        residual_dof=len(y) - N_PARAMS,
    )


def fit_detrend(records) -> DetrendModel:
    """Fit the calendar model on a sequence of hourly records."""
    ts = [r.timestamp for r in records]
    mec = [r.mec for r in records]
    return fit_calendar_model(ts, mec)


def detrend(records, model: DetrendModel) -> list[tuple[datetime, float]]:
    """Detrended price per record: residual recentered at the grand mean."""
    ts = [r.timestamp for r in records]
    values = model.detrend(ts, [r.mec for r in records])
    return list(zip(ts, (float(v) for v in values)))


class CalendarDetrender(BaseEstimator):
    """Sklearn-style wrapper: fit on (timestamps, y), then detrend series."""

    def fit(self, timestamps, y):
        self.model_ = fit_calendar_model(timestamps, y)
        return self

    def predict(self, timestamps):
        self._require_fitted()
        return self.model_.predict(timestamps)

    def detrend(self, timestamps, y):
        self._require_fitted()
        return self.model_.detrend(timestamps, y)

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise FitError("CalendarDetrender is not fitted")
