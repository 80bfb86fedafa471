"""Electricity market analytics around the merit-order effect.

Builds the hourly system price from locational components, removes
deterministic calendar structure, derives EWMSD volatility and
renewable penetration shares, and fits the mean- and quantile-effect
regression grid with inference, emitting tables and figures as files.
"""

__version__ = "0.1.0"

from .detrend import CalendarDetrender, DetrendModel, fit_detrend, detrend, season_of
from .ingest import (
    GenerationReading,
    HourlyRecord,
    PriceRow,
    aggregate_generation,
    compute_mec,
    ingest,
    join_hourly,
)
from .linreg import (
    ModelSpec,
    OLSRegressor,
    RegressionResult,
    correlation_matrix,
    fit_ols,
    p_value_t,
)
from .metrics import StudyFrame, descriptive_stats, ewmsd, penetration
from .quantreg import (
    BootstrapInference,
    QuantileFit,
    QuantileRegressor,
    bootstrap_se,
    fit_quantile,
    pinball_loss,
)
from .study import (
    FitTask,
    ResultsBundle,
    StudyConfig,
    model_grid,
    run_study,
    synthetic_fixture,
)

__all__ = [
    "BootstrapInference",
    "CalendarDetrender",
    "DetrendModel",
    "FitTask",
    "GenerationReading",
    "HourlyRecord",
    "ModelSpec",
    "OLSRegressor",
    "PriceRow",
    "QuantileFit",
    "QuantileRegressor",
    "RegressionResult",
    "ResultsBundle",
    "StudyConfig",
    "StudyFrame",
    "aggregate_generation",
    "bootstrap_se",
    "compute_mec",
    "correlation_matrix",
    "descriptive_stats",
    "detrend",
    "ewmsd",
    "fit_detrend",
    "fit_ols",
    "fit_quantile",
    "ingest",
    "join_hourly",
    "model_grid",
    "p_value_t",
    "penetration",
    "pinball_loss",
    "run_study",
    "season_of",
    "synthetic_fixture",
]
