"""Derived hourly series: EWMSD volatility, penetration shares, summary stats.

The volatility estimator is the exponentially weighted moving standard
deviation with decay alpha = 2 / (span + 1): at time t the weight on the
observation i lags back is (1 - alpha)^i, the weighted mean and the
uncorrected weighted variance are taken over the full history, and the
first value is 0 by convention. The streaming implementation below is a
weight-scaled West update, numerically equivalent to the direct weighted
moments at better than 1e-10.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterator, Mapping

import numpy as np

from .exceptions import DomainError, InsufficientDataError, ParameterError

FRAME_COLUMNS = (
    "detrended_price",
    "detrended_volatility",
    "hydro_pct",
    "solar_pct",
    "wind_pct",
)

FRAME_CSV_HEADER = (
    "timestamp,detrended_price,detrended_volatility,hydro_pct,solar_pct,wind_pct"
)


def ewmsd(values, span: float) -> np.ndarray:
    """Exponentially weighted moving standard deviation of a series.

    Uncorrected (biased) weighted variance; value at index 0 is 0.
    """
    if not span >= 2:
        raise ParameterError(f"span must be >= 2, got {span}")
    x = np.asarray(values, dtype=float)
    if x.ndim != 1:
        raise ParameterError("ewmsd expects a 1-D series")
    if not np.all(np.isfinite(x)):
        raise DomainError("ewmsd input contains non-finite values")
    n = x.shape[0]
    out = np.zeros(n)
    if n == 0:
        return out
    lam = 1.0 - 2.0 / (span + 1.0)
    weight_sum = 1.0
    mean = x[0]
    m2 = 0.0  # weighted sum of squared deviations from the running mean
    for t in range(1, n):
        weight_sum *= lam
        m2 *= lam
        weight_sum += 1.0
        delta = x[t] - mean
        mean += delta / weight_sum
        m2 += delta * (x[t] - mean)
        out[t] = np.sqrt(max(m2 / weight_sum, 0.0))
    return out


@dataclass
class VolatilitySeries:
    """EWMSD values aligned with their timestamps."""

    timestamps: list[datetime]
    values: np.ndarray
    span: float

    def __post_init__(self):
        if len(self.timestamps) != len(self.values):
            raise ParameterError("timestamps and values must have equal length")


def penetration(gen_by_source: Mapping[str, float], total_gen: float) -> dict[str, float]:
    """Percent of hourly energy contributed by each source."""
    if not total_gen > 0.0:
        raise DomainError(f"total generation must be positive, got {total_gen}")
    return {source: 100.0 * mwh / total_gen for source, mwh in gen_by_source.items()}


def column_stats(values) -> tuple[dict[str, float], bool]:
    """(min/max/median/mean/std dict, degenerate flag) for one column.

    Sample standard deviation (n-1 denominator); a single observation
    reports std 0 and is flagged.
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise DomainError("cannot summarize an empty column")
    degenerate = x.size == 1
    std = 0.0 if degenerate else float(x.std(ddof=1))
    return (
        {
            "min": float(x.min()),
            "max": float(x.max()),
            "median": float(np.median(x)),
            "mean": float(x.mean()),
            "std": std,
        },
        degenerate,
    )


@dataclass
class StatsTable:
    """Descriptive statistics per column, plus degenerate-column flags."""

    columns: dict[str, dict[str, float]]
    flags: list[str] = field(default_factory=list)

    ROW_ORDER = ("min", "max", "median", "mean", "std")

    def rows(self) -> list[dict]:
        return [
            {"column": name, **{k: stats[k] for k in self.ROW_ORDER}}
            for name, stats in self.columns.items()
        ]


@dataclass
class StudyFrame:
    """Aligned hourly columns the regressions are fit on."""

    timestamps: list[datetime]
    detrended_price: np.ndarray
    detrended_volatility: np.ndarray
    hydro_pct: np.ndarray
    solar_pct: np.ndarray
    wind_pct: np.ndarray

    def __post_init__(self):
        n = len(self.timestamps)
        for name in FRAME_COLUMNS:
            col = np.asarray(getattr(self, name), dtype=float)
            if col.shape != (n,):
                raise ParameterError(f"column {name} length != timestamps length")
            setattr(self, name, col)
        for prev, cur in zip(self.timestamps, self.timestamps[1:]):
            if cur <= prev:
                raise ParameterError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.timestamps)

    def column(self, name: str) -> np.ndarray:
        if name not in FRAME_COLUMNS:
            raise ParameterError(f"unknown frame column {name!r}")
        return getattr(self, name)

    def select(self, mask: np.ndarray) -> "StudyFrame":
        ts = [t for t, keep in zip(self.timestamps, mask) if keep]
        return StudyFrame(ts, *(self.column(c)[mask] for c in FRAME_COLUMNS))

    def iter_csv_rows(self) -> Iterator[str]:
        yield FRAME_CSV_HEADER
        for i, ts in enumerate(self.timestamps):
            cols = ",".join(repr(float(self.column(c)[i])) for c in FRAME_COLUMNS)
            yield f"{ts.isoformat()},{cols}"

    @classmethod
    def from_csv(cls, path) -> "StudyFrame":
        import csv

        timestamps: list[datetime] = []
        cols: dict[str, list[float]] = {c: [] for c in FRAME_COLUMNS}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(FRAME_COLUMNS + ("timestamp",)) - set(reader.fieldnames or ())
            if missing:
                raise ParameterError(f"study frame csv missing columns {sorted(missing)}")
            for row in reader:
                timestamps.append(datetime.fromisoformat(row["timestamp"]))
                for c in FRAME_COLUMNS:
                    cols[c].append(float(row[c]))
        if not timestamps:
            raise InsufficientDataError(f"study frame {path} is empty")
        return cls(timestamps, *(np.array(cols[c]) for c in FRAME_COLUMNS))


def descriptive_stats(frame: StudyFrame) -> StatsTable:
    """Min/max/median/mean/std for every numeric column of the frame."""
    if len(frame) == 0:
        raise DomainError("cannot summarize an empty frame")
    columns: dict[str, dict[str, float]] = {}
    flags: list[str] = []
    for name in FRAME_COLUMNS:
        stats, degenerate = column_stats(frame.column(name))
        columns[name] = stats
        if degenerate:
            flags.append(f"{name}: single observation, std reported as 0")
    return StatsTable(columns=columns, flags=flags)
