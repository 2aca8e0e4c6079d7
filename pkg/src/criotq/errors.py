"""Exception types shared across the package."""


class CriotqError(Exception):
    """Base class for all package-specific errors."""


class InvalidParameterError(CriotqError, ValueError):
    """A parameter record or argument violates its documented constraints."""


class NoConvergenceError(CriotqError, RuntimeError):
    """Iterative stationary solve failed to reach the target residual.

    Attributes:
        residual: infinity-norm of mu @ P - mu at the point of failure.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class UndefinedLoadError(CriotqError, ZeroDivisionError):
    """A load-based metric was requested with zero offered load."""


class UndefinedWaitError(CriotqError, ZeroDivisionError):
    """A waiting-time estimate was requested with zero effective admission rate."""


class DegenerateDistributionError(CriotqError, ValueError):
    """A conditional distribution was requested but its normalizer is zero."""


class MetricRangeError(CriotqError, ValueError):
    """A probability-valued metric landed outside [0, 1] beyond numerical tolerance."""
