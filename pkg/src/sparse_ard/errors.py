"""Exception and warning types shared across the toolkit."""


class SparseArdError(Exception):
    """Base class for all toolkit errors."""


class NonFiniteError(SparseArdError, ValueError):
    """An input or iterate contains NaN or infinite entries."""


class MaxIterationsError(SparseArdError, RuntimeError):
    """An iterative solver hit its iteration cap before reaching tolerance."""


class SingularSystemError(SparseArdError, RuntimeError):
    """A linear system stayed numerically singular after jitter escalation."""


class DegenerateWeightError(SparseArdError, ValueError):
    """A coordinate with zero penalty weight was asked to be rescaled."""


class DomainError(SparseArdError, ValueError):
    """A parameter lies outside the valid domain of a rate function."""


class LengthMismatchError(SparseArdError, ValueError):
    """Two vectors that must share a length do not."""


class DimensionOverflowError(SparseArdError, ValueError):
    """A feature library would exceed the configured column cap."""


class GridTooSmallError(SparseArdError, ValueError):
    """A spatial grid is too short for the requested derivative stencil."""


class SeriesTooShortError(SparseArdError, ValueError):
    """A time series is too short for the requested difference stencil."""


class SampleTooLargeError(SparseArdError, ValueError):
    """A without-replacement sample exceeds the population size."""


class ConfigError(SparseArdError, ValueError):
    """An experiment configuration failed validation."""


class ClampedCurvatureWarning(UserWarning):
    """A regularizer subgradient pushed a curvature value to or below zero."""


class UndefinedRateWarning(UserWarning):
    """A false-negative rate was requested for a coefficient that is truly zero."""
