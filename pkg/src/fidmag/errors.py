"""Exception taxonomy shared across the package.

Two broad families matter for the CLI exit-code contract: configuration and
input problems (exit 2) versus numeric/estimation failures discovered while
processing valid inputs (exit 3).
"""


class FidmagError(Exception):
    """Base class for all package errors."""


class ValidationError(FidmagError):
    """Invalid configuration, schema violation, or bad input file."""

    exit_code = 2


class DomainError(ValidationError):
    """Argument outside the mathematical domain of an operation."""


class RangeError(ValidationError):
    """Argument inside the domain but outside the supported range."""


class AliasingError(ValidationError):
    """Sample rate too low for the requested synthesis content."""


class FilterDesignError(ValidationError):
    """Bandpass specification cannot be realised stably."""


class NumericError(FidmagError):
    """Numerical routine failed to converge or produced non-finite output."""

    exit_code = 3


class ResonanceError(NumericError):
    """Microwave dressing evaluated too close to a level-crossing resonance."""


class InfeasibleError(NumericError):
    """No solution exists within the searched bracket."""


class EstimationError(NumericError):
    """Statistical estimate could not be formed from the data given."""


class CalibrationError(EstimationError):
    """Required calibration segment or reference is missing."""


class ConditioningError(EstimationError):
    """Regression design matrix is rank deficient or ill conditioned."""


class EdgeError(EstimationError):
    """Record too short relative to the filter's transient length."""


class UnwrapFailure(EstimationError):
    """Phase reconstruction produced detected discontinuities."""

    def __init__(self, message, first_bad_time=None, n_flagged=0):
        super().__init__(message)
        self.first_bad_time = first_bad_time
        self.n_flagged = n_flagged


def exit_code_for(exc: BaseException) -> int:
    """Exit code the CLI should use for an exception."""
    if isinstance(exc, ValidationError):
        return 2
    if isinstance(exc, FidmagError):
        return 3
    return 3
