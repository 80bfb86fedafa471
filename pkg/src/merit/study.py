"""End-to-end study: ingest, detrend, derive series, fit the model grid.

The grid covers four regressor sets — hydro, hydro+solar, hydro+wind,
hydro+wind+solar — fit against two responses (detrended price and its
EWMSD volatility), once by OLS and once per quantile level, with pairs
bootstrap inference on the quantile fits. Everything is deterministic
given the configuration, including the bootstrap, so two runs of the
same study serialize to byte-identical bundles.
"""

from __future__ import annotations

import hashlib
import json
import os
from functools import lru_cache
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from .detrend import fit_calendar_model, season_of, DetrendModel
from .exceptions import (
    ConfigError,
    DataError,
    InsufficientDataError,
    MeritError,
    ParameterError,
)
from .ingest import GenerationReading, HourlyRecord, IngestReport, PriceRow, ingest
from .linreg import (
    ModelSpec,
    RegressionResult,
    REGRESSORS,
    RESPONSES,
    correlation_matrix,
    fit_ols,
)
from .metrics import (
    FRAME_COLUMNS,
    StatsTable,
    StudyFrame,
    column_stats,
    descriptive_stats,
    ewmsd,
)
from .quantreg import bootstrap_se, fit_quantile, subgradient_violation
from .report import results_csv

MIN_STUDY_ROWS = 1000

DEFAULT_QUANTILES = (0.25, 0.5, 0.75, 0.9)

DEFAULT_SPEC_REGRESSORS = (
    ("hydro_pct",),
    ("hydro_pct", "solar_pct"),
    ("hydro_pct", "wind_pct"),
    ("hydro_pct", "wind_pct", "solar_pct"),
)

_RESPONSE_FILE_TAG = {"detrended_price": "price", "detrended_volatility": "volatility"}


@dataclass
class StudyConfig:
    """Inputs and knobs of one study run; serializable to/from JSON."""

    prices: str
    generation: str
    ewmsd_span: float = 24.0
    quantiles: tuple[float, ...] = DEFAULT_QUANTILES
    bootstrap_replicates: int = 1000
    seed: int = 0
    output_dir: str | None = None
    trim_inner: float | None = None
    workers: int = 1

    _FIELDS = (
        "prices", "generation", "ewmsd_span", "quantiles",
        "bootstrap_replicates", "seed", "output_dir", "trim_inner", "workers",
    )

    def validate(self) -> "StudyConfig":
        if not self.prices or not self.generation:
            raise ConfigError("config must name both a prices and a generation file")
        if not self.ewmsd_span >= 2:
            raise ConfigError(f"ewmsd_span must be >= 2, got {self.ewmsd_span}")
        taus = tuple(float(t) for t in self.quantiles)
        if len(set(taus)) != len(taus):
            raise ConfigError(f"duplicate quantiles in config: {taus}")
        if any(not 0.0 < t < 1.0 for t in taus):
            raise ConfigError(f"quantiles must lie in (0, 1): {taus}")
        if tuple(sorted(taus)) != taus:
            raise ConfigError(f"quantiles must be strictly increasing: {taus}")
        if self.bootstrap_replicates < 100:
            raise ConfigError("bootstrap_replicates must be at least 100")
        if self.trim_inner is not None and not 0.9 < self.trim_inner <= 1.0:
            raise ConfigError(f"trim_inner must lie in (0.9, 1.0], got {self.trim_inner}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    def to_json_dict(self) -> dict:
        data = {name: getattr(self, name) for name in self._FIELDS}
        data["quantiles"] = list(self.quantiles)
        return data

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_json_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()

    @classmethod
    def from_json_dict(cls, data: dict) -> "StudyConfig":
        unknown = set(data) - set(cls._FIELDS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "prices" not in data or "generation" not in data:
            raise ConfigError("config must name both a prices and a generation file")
        kwargs = dict(data)
        if "quantiles" in kwargs:
            kwargs["quantiles"] = tuple(float(t) for t in kwargs["quantiles"])
        return cls(**kwargs).validate()

    @classmethod
    def from_json_file(cls, path: str) -> "StudyConfig":
        if not os.path.exists(path):
            raise DataError(f"config file not found: {path}")
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        return cls.from_json_dict(data)


@dataclass(frozen=True)
class FitTask:
    """One cell of the model grid; ``tau`` None means a mean-effect fit."""

    index: int
    response: str
    spec: ModelSpec
    tau: float | None

    @property
    def label(self) -> str:
        kind = "ols" if self.tau is None else f"qr(tau={self.tau:g})"
        return f"{self.response}/{self.spec.label}/{kind}"


def model_grid(spec_regressors, quantiles, responses) -> list[FitTask]:
    """Deterministic fit-task list: response-major, spec-second, tau-minor.

    With an empty quantile list the grid degrades to one mean-effect
    task per (response, spec) pair.
    """
    if not spec_regressors:
        raise ParameterError("model grid needs at least one regressor set")
    if not responses:
        raise ParameterError("model grid needs at least one response")
    tasks: list[FitTask] = []
    for response in responses:
        for regs in spec_regressors:
            spec = ModelSpec(response=response, regressors=tuple(regs))
            if quantiles:
                for tau in quantiles:
                    tasks.append(FitTask(len(tasks), response, spec, float(tau)))
            else:
                tasks.append(FitTask(len(tasks), response, spec, None))
    return tasks


# ---------------------------------------------------------------------------
# frame assembly
# ---------------------------------------------------------------------------


@dataclass
class StudyData:
    """Derived per-hour series aligned with the retained study rows."""

    frame: StudyFrame
    detrend_model: DetrendModel
    mwh: dict[str, np.ndarray]


def prepare_study_data(records, span: float, trim_inner: float | None = None) -> StudyData:
    """Detrend the price, derive volatility and penetration, build the frame."""
    timestamps = [r.timestamp for r in records]
    mec = np.array([r.mec for r in records])
    model = fit_calendar_model(timestamps, mec)
    detrended = model.detrend(timestamps, mec)
    volatility = ewmsd(detrended, span)
    total = np.array([r.total_gen for r in records])
    mwh = {
        source: np.array([r.gen_by_source.get(source, 0.0) for r in records])
        for source in ("hydro", "solar", "wind")
    }
    frame = StudyFrame(
        timestamps=timestamps,
        detrended_price=detrended,
        detrended_volatility=volatility,
        hydro_pct=100.0 * mwh["hydro"] / total,
        solar_pct=100.0 * mwh["solar"] / total,
        wind_pct=100.0 * mwh["wind"] / total,
    )
    if trim_inner is not None:
        tail = (1.0 - trim_inner) / 2.0
        lo, hi = np.quantile(frame.detrended_price, [tail, 1.0 - tail])
        mask = (frame.detrended_price >= lo) & (frame.detrended_price <= hi)
        frame = frame.select(mask)
        mwh = {s: v[mask] for s, v in mwh.items()}
    return StudyData(frame=frame, detrend_model=model, mwh=mwh)


def study_stats(data: StudyData) -> StatsTable:
    """Descriptive statistics over generation MWh and the frame columns."""
    table = descriptive_stats(data.frame)
    columns: dict[str, dict[str, float]] = {}
    for source in ("hydro", "solar", "wind"):
        stats, _ = column_stats(data.mwh[source])
        columns[f"{source}_mwh"] = stats
    columns.update(table.columns)
    return StatsTable(columns=columns, flags=table.flags)


# ---------------------------------------------------------------------------
# grid execution
# ---------------------------------------------------------------------------


def _run_task(task: FitTask, columns: dict, seed: int, n_replicates: int,
              ) -> tuple[int, dict | None, RegressionResult | None, dict | None]:
    """Fit one grid cell; returns (index, failure, result, diagnostics)."""
    y = columns[task.response]
    design = np.column_stack(
        [np.ones(len(y))] + [columns[name] for name in task.spec.regressors]
    )
    names = task.spec.coefficient_names
    try:
        if task.tau is None:
            core = fit_ols(design, y, names=names)
            result = RegressionResult(
                spec=task.spec,
                names=names,
                estimates=core.params,
                std_errors=core.std_errors,
                p_values=core.p_values,
                n_obs=core.n_obs,
                residual_dof=core.residual_dof,
                method="ols",
            )
            return task.index, None, result, None
        fit = fit_quantile(design, y, task.tau)
        inference = bootstrap_se(
            design,
            y,
            task.tau,
            n_replicates=n_replicates,
            seed=(seed, 1, task.index),
            estimates=fit.params,
        )
        result = RegressionResult(
            spec=task.spec,
            names=names,
            estimates=fit.params,
            std_errors=inference.std_errors,
            p_values=inference.p_values,
            n_obs=len(y),
            residual_dof=len(y) - design.shape[1],
            method="quantile",
            tau=task.tau,
        )
        diag = {
            "task": task.label,
            "objective": fit.objective,
            "iterations": fit.iterations,
            "converged": fit.converged,
            "polished": fit.polished,
            "subgradient_violation": float(
                np.max(subgradient_violation(design, y, fit.params, task.tau))
            ),
            "bootstrap_degenerate": inference.degenerate,
        }
        return task.index, None, result, diag
    except (MeritError, np.linalg.LinAlgError) as exc:
        return task.index, {"task": task.label, "error": str(exc)}, None, None


@dataclass
class ResultsBundle:
    """Everything one study run produces, ready to serialize."""

    stats: StatsTable
    correlation_names: tuple[str, ...]
    correlation: np.ndarray
    mean_results: list[RegressionResult]
    quantile_results: list[RegressionResult]
    diagnostics: list[dict]
    failures: list[dict]
    provenance: dict
    detrend_model: DetrendModel
    frame: StudyFrame
    ingest_report: IngestReport | None = None

    @property
    def n_fits(self) -> int:
        return len(self.mean_results) + len(self.quantile_results)

    def write(self, outdir: str) -> list[str]:
        """Write the bundle directory; returns the file names written."""
        os.makedirs(outdir, exist_ok=True)
        written = []

        def emit(name: str, text: str):
            with open(os.path.join(outdir, name), "w", newline="") as fh:
                fh.write(text)
            written.append(name)

        emit("stats.csv", _stats_csv(self.stats))
        emit("correlation.csv", _correlation_csv(self.correlation_names, self.correlation))
        for response in RESPONSES:
            tag = _RESPONSE_FILE_TAG[response]
            mean_rows = [r for r in self.mean_results if r.spec.response == response]
            emit(f"mean_{tag}.csv", results_csv(mean_rows))
            taus = sorted({r.tau for r in self.quantile_results if r.spec.response == response})
            for tau in taus:
                rows = [
                    r
                    for r in self.quantile_results
                    if r.spec.response == response and r.tau == tau
                ]
                emit(f"qr_{tag}_tau{tau:g}.csv", results_csv(rows))
        emit("study_frame.csv", "\n".join(self.frame.iter_csv_rows()) + "\n")
        emit("detrend_model.json", self.detrend_model.to_json() + "\n")
        if self.ingest_report is not None:
            emit("ingest_report.json", self.ingest_report.to_json() + "\n")
        emit(
            "provenance.json",
            json.dumps(self.provenance, indent=2, sort_keys=True) + "\n",
        )
        return written


def _fmt(x: float) -> str:
    return repr(float(x))


def _stats_csv(table: StatsTable) -> str:
    lines = ["column,min,max,median,mean,std"]
    for row in table.rows():
        lines.append(
            ",".join([row["column"]] + [_fmt(row[k]) for k in StatsTable.ROW_ORDER])
        )
    return "\n".join(lines) + "\n"


def _correlation_csv(names, matrix) -> str:
    lines = ["," + ",".join(names)]
    for name, row in zip(names, matrix):
        lines.append(name + "," + ",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def run_study(config: StudyConfig) -> ResultsBundle:
    """Execute the configured study end to end."""
    config.validate()
    records, report = ingest(config.prices, config.generation)
    return _run_study_on_records(records, config, report)


def _run_study_on_records(
    records, config: StudyConfig, report: IngestReport | None
) -> ResultsBundle:
    if len(records) < MIN_STUDY_ROWS:
        raise InsufficientDataError(
            f"study needs at least {MIN_STUDY_ROWS} joined hourly rows, got {len(records)}"
        )
    data = prepare_study_data(records, config.ewmsd_span, config.trim_inner)
    frame = data.frame
    stats = study_stats(data)
    # constant columns make Pearson r undefined; keep the diagnostic over
    # the rest and record what was left out
    corr_usable = [c for c in FRAME_COLUMNS if np.ptp(frame.column(c)) > 0.0]
    corr_dropped = [c for c in FRAME_COLUMNS if c not in corr_usable]
    corr_names, corr = correlation_matrix(
        np.column_stack([frame.column(c) for c in corr_usable]), corr_usable
    )

    columns = {name: frame.column(name) for name in FRAME_COLUMNS}
    mean_tasks = model_grid(DEFAULT_SPEC_REGRESSORS, (), RESPONSES)
    q_tasks = model_grid(DEFAULT_SPEC_REGRESSORS, config.quantiles, RESPONSES)

    runner = Parallel(n_jobs=config.workers)
    mean_out = runner(
        delayed(_run_task)(t, columns, config.seed, config.bootstrap_replicates)
        for t in mean_tasks
    )
    q_out = runner(
        delayed(_run_task)(t, columns, config.seed, config.bootstrap_replicates)
        for t in q_tasks
    )

    failures: list[dict] = []
    mean_results: list[RegressionResult] = []
    quantile_results: list[RegressionResult] = []
    diagnostics: list[dict] = []
    for _, failure, result, _ in sorted(mean_out, key=lambda r: r[0]):
        if failure is not None:
            failures.append(failure)
        else:
            mean_results.append(result)
    for _, failure, result, diag in sorted(q_out, key=lambda r: r[0]):
        if failure is not None:
            failures.append(failure)
        else:
            quantile_results.append(result)
            diagnostics.append(diag)

    provenance = {
        "config": config.to_json_dict(),
        "config_hash": config.config_hash(),
        "package_version": __version__,
        "rows": {
            "hourly_records": len(records),
            "study_rows": len(frame),
        },
        "correlation_dropped_columns": corr_dropped,
        "ingest_report": report.to_json_dict() if report is not None else None,
        "fit_counts": {
            "mean": len(mean_results),
            "quantile": len(quantile_results),
            "failed": len(failures),
        },
        "failures": failures,
        "quantile_diagnostics": diagnostics,
    }
    return ResultsBundle(
        stats=stats,
        correlation_names=corr_names,
        correlation=corr,
        mean_results=mean_results,
        quantile_results=quantile_results,
        diagnostics=diagnostics,
        failures=failures,
        provenance=provenance,
        detrend_model=data.detrend_model,
        frame=frame,
        ingest_report=report,
    )


# ---------------------------------------------------------------------------
# synthetic fixture
# ---------------------------------------------------------------------------

DEFAULT_PLANTED = {"hydro_pct": -0.56, "wind_pct": -0.82, "solar_pct": -4.33}

_SEASON_INDEX = {"winter": 0, "spring": 1, "summer": 2, "fall": 3}

# per-season additive offsets; penetration offsets are deliberately small
# next to the idiosyncratic spread so that calendar detrending leaves the
# planted price coefficients recoverable (detrending removes the
# calendar-span share of the regressor signal, attenuating recovery by
# that variance fraction)
_PEN_SEASONAL = {
    "hydro": (-0.2, 0.25, -0.2, 0.15),
    "wind": (0.2, 0.0, -0.2, 0.0),
    "solar": (-0.05, 0.025, 0.05, -0.025),
}
_PEN_BASE = {"hydro": 25.0, "wind": 10.0, "solar": 1.6}
_PEN_SD = {"hydro": 4.0, "wind": 3.0, "solar": 0.8}
_PEN_CLIP = {"hydro": (5.0, 45.0), "wind": (0.0, 22.0), "solar": (0.0, 5.0)}

_PRICE_BASE = 70.0
_SEASON_PRICE = (4.0, -3.0, 6.0, 0.0)
_SEASON_DIURNAL_GAIN = (1.0, 0.8, 1.3, 0.9)
_WEEKEND_PRICE = -3.0

#: within-hour power shape for sub-hourly readings (mean exactly 1)
_INTRA_HOUR_SHAPE = {1: (1.0,), 4: (1.1, 0.9, 1.05, 0.95)}


@dataclass
class FixtureData:
    """A generated synthetic market: inputs plus the generating truth."""

    prices: list[PriceRow]
    readings: list[GenerationReading]
    truth: dict


@lru_cache(maxsize=4)
def _calendar_span_q(n_hours: int) -> np.ndarray:
    """Orthonormal basis of the calendar design span on the fixture grid.

    Idiosyncratic penetration draws are projected off this span so the
    planted coefficients survive detrending undistorted; cached because
    it depends only on the (deterministic) timestamp grid.
    """
    from .detrend import calendar_design

    q, _ = np.linalg.qr(calendar_design(_fixture_timestamps(n_hours)))
    return q


def _fixture_timestamps(n_hours: int) -> list[datetime]:
    """Hourly grid covering every (hour, season) cell.

    A full year or more runs contiguously from Jan 1; shorter samples
    are laid out as four equal blocks centered in the four seasons so
    the calendar fit stays full rank.
    """
    if n_hours >= 365 * 24:
        start = datetime(2014, 1, 1)
        return [start + timedelta(hours=i) for i in range(n_hours)]
    block = n_hours // 4
    lengths = [block, block, block, n_hours - 3 * block]
    starts = [
        datetime(2014, 1, 10),
        datetime(2014, 4, 10),
        datetime(2014, 7, 10),
        datetime(2014, 10, 10),
    ]
    timestamps: list[datetime] = []
    for start, length in zip(starts, lengths):
        timestamps.extend(start + timedelta(hours=i) for i in range(length))
    return timestamps


def synthetic_fixture(
    seed: int,
    n_hours: int = 8760,
    true_coefficients: dict | None = None,
    *,
    noise_std: float = 5.0,
    calendar_effects: bool = True,
    readings_per_hour: int = 4,
) -> FixtureData:
    """Generate a calendar-structured synthetic market.

    The hourly system price is calendar effects plus the planted linear
    penetration effects plus Gaussian noise; penetrations come from
    seasonally modulated generation with an independent idiosyncratic
    component. The generating coefficients are recorded in ``truth``.
    """
    if n_hours < 24 * 90:
        raise ParameterError(f"fixture needs at least {24 * 90} hours, got {n_hours}")
    if readings_per_hour not in _INTRA_HOUR_SHAPE:
        raise ParameterError(
            f"readings_per_hour must be one of {sorted(_INTRA_HOUR_SHAPE)}"
        )
    betas = dict(DEFAULT_PLANTED)
    if true_coefficients:
        unknown = set(true_coefficients) - set(DEFAULT_PLANTED)
        if unknown:
            raise ParameterError(f"unknown planted coefficients: {sorted(unknown)}")
        betas.update(true_coefficients)

    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    timestamps = _fixture_timestamps(n_hours)
    hours = np.array([ts.hour for ts in timestamps])
    season_idx = np.array([_SEASON_INDEX[season_of(ts)] for ts in timestamps])
    weekend = np.array([1.0 if ts.weekday() >= 5 else 0.0 for ts in timestamps])

    span_q = _calendar_span_q(n_hours)
    pen = {}
    for source in ("hydro", "wind", "solar"):
        seasonal = np.asarray(_PEN_SEASONAL[source])[season_idx]
        noise = rng.normal(0.0, _PEN_SD[source], n_hours)
        noise -= span_q @ (span_q.T @ noise)
        lo, hi = _PEN_CLIP[source]
        pen[source] = np.clip(_PEN_BASE[source] + seasonal + noise, lo, hi)

    total = np.clip(
        10000.0
        * (
            1.0
            + 0.1 * np.sin(2.0 * np.pi * (hours - 15) / 24.0)
            + np.asarray((0.05, -0.05, 0.10, 0.0))[season_idx]
        )
        + rng.normal(0.0, 300.0, n_hours),
        5000.0,
        None,
    )

    effect = (
        betas["hydro_pct"] * pen["hydro"]
        + betas["wind_pct"] * pen["wind"]
        + betas["solar_pct"] * pen["solar"]
    )
    mec = _PRICE_BASE + effect
    if calendar_effects:
        diurnal = 6.0 * np.sin(2.0 * np.pi * (hours - 9) / 24.0)
        mec = (
            mec
            + np.asarray(_SEASON_PRICE)[season_idx]
            + np.asarray(_SEASON_DIURNAL_GAIN)[season_idx] * diurnal
            + _WEEKEND_PRICE * weekend
        )
    if noise_std > 0.0:
        mec = mec + rng.normal(0.0, noise_std, n_hours)

    mcc = rng.uniform(-2.0, 5.0, n_hours)
    mlc = rng.uniform(-0.5, 1.5, n_hours)
    prices = [
        PriceRow(ts, lmp=float(m + c + l), mcc=float(c), mlc=float(l))
        for ts, m, c, l in zip(timestamps, mec, mcc, mlc)
    ]

    shape = _INTRA_HOUR_SHAPE[readings_per_hour]
    interval = 60 // readings_per_hour
    readings: list[GenerationReading] = []
    mwh = {s: pen[s] / 100.0 * total for s in ("hydro", "wind", "solar")}
    mwh["other"] = total - mwh["hydro"] - mwh["wind"] - mwh["solar"]
    for i, ts in enumerate(timestamps):
        for source in ("hydro", "solar", "wind", "other"):
            base_power = mwh[source][i]  # MWh over one hour == mean MW
            for k, gain in enumerate(shape):
                readings.append(
                    GenerationReading(
                        timestamp=ts + timedelta(minutes=k * interval),
                        source=source,
                        power_mw=float(base_power * gain),
                        interval_min=interval,
                    )
                )

    truth = {
        "seed": int(seed),
        "n_hours": int(n_hours),
        "planted_coefficients": betas,
        "price_base": _PRICE_BASE,
        "noise_std": noise_std,
        "calendar_effects": calendar_effects,
        "readings_per_hour": readings_per_hour,
    }
    return FixtureData(prices=prices, readings=readings, truth=truth)


def write_fixture(fixture: FixtureData, outdir: str) -> dict[str, str]:
    """Write prices.csv, generation.csv, and truth.json under ``outdir``."""
    os.makedirs(outdir, exist_ok=True)
    paths = {
        "prices": os.path.join(outdir, "prices.csv"),
        "generation": os.path.join(outdir, "generation.csv"),
        "truth": os.path.join(outdir, "truth.json"),
    }
    with open(paths["prices"], "w", newline="") as fh:
        fh.write("timestamp,lmp,mcc,mlc\n")
        for row in fixture.prices:
            fh.write(
                f"{row.timestamp.isoformat()},{_fmt(row.lmp)},{_fmt(row.mcc)},{_fmt(row.mlc)}\n"
            )
    with open(paths["generation"], "w", newline="") as fh:
        fh.write("timestamp,source,power_mw,interval_min\n")
        for r in fixture.readings:
            fh.write(
                f"{r.timestamp.isoformat()},{r.source},{_fmt(r.power_mw)},{r.interval_min}\n"
            )
    with open(paths["truth"], "w") as fh:
        json.dump(fixture.truth, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def records_from_fixture(fixture: FixtureData) -> tuple[list[HourlyRecord], IngestReport]:
    """Run the in-memory ingest path on a fixture (no files involved)."""
    from .ingest import aggregate_generation, join_hourly

    gen_rows, partial = aggregate_generation(fixture.readings)
    records, counts = join_hourly(fixture.prices, gen_rows)
    report = IngestReport(
        prices={"rows_read": len(fixture.prices), "duplicate_hours_dropped": 0},
        generation={
            "readings_read": len(fixture.readings),
            "duplicate_readings_dropped": 0,
            "sources_remapped_to_other": 0,
            "partial_coverage_hours": len(partial),
        },
        join={
            "hours_joined": counts.hours_joined,
            "price_hours_unmatched": counts.price_hours_unmatched,
            "generation_hours_unmatched": counts.generation_hours_unmatched,
            "zero_generation_dropped": counts.zero_generation_dropped,
        },
    )
    return records, report
