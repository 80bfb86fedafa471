"""Exception hierarchy for the merit package.

Two broad families matter for the CLI exit code: validation errors
(bad parameters or configuration, exit 1) and data/estimation errors
(unreadable, inconsistent, or degenerate inputs, exit 2).
"""


class MeritError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(MeritError, ValueError):
    """A caller-supplied parameter is out of its documented range."""


class ConfigError(ParameterError):
    """A study configuration file or option set fails validation."""


class DataError(MeritError):
    """Input data is missing, malformed, or internally inconsistent."""


class MalformedRecordError(DataError):
    """A single input record cannot be parsed or violates its invariants."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)


class DataIntegrityError(DataError):
    """Records are individually valid but mutually inconsistent."""


class InsufficientDataError(DataError):
    """Too few observations to run the requested computation."""


class DomainError(DataError):
    """A value is outside the mathematical domain of an operation."""


class FitError(MeritError):
    """Model estimation failed on the given data."""


class CollinearityError(FitError):
    """Design matrix is rank deficient at the documented tolerance."""

    def __init__(self, message: str, column: int | str | None = None):
        self.column = column
        super().__init__(message)


class UndefinedCorrelationError(FitError):
    """Correlation is undefined because a column is constant."""


class SolverError(FitError):
    """An iterative solver failed to converge."""

    def __init__(self, message: str, residuals: dict | None = None):
        self.residuals = dict(residuals) if residuals else {}
        if self.residuals:
            detail = ", ".join(f"{k}={v:.3e}" for k, v in self.residuals.items())
            message = f"{message} [{detail}]"
        super().__init__(message)
