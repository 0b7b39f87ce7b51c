"""Exception hierarchy shared across the package.

Each error type maps to a distinct process exit code in the command line
interface, so library code should raise the most specific type that
applies.
"""

from __future__ import annotations


class SGDInferError(Exception):
    """Base class for all package-specific errors."""

    exit_code = 1


class ConfigError(SGDInferError):
    """Invalid configuration: bad hyperparameters, malformed config files,
    contradictory options."""

    exit_code = 2


class DataError(SGDInferError):
    """Invalid data: empty streams, dimension changes mid-stream,
    unparseable records, labels outside the declared set."""

    exit_code = 3


class NumericalDivergenceError(SGDInferError):
    """A path exceeded the divergence cap or became non-finite."""

    exit_code = 4

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class PlugInUnavailableError(SGDInferError):
    """The plug-in covariance estimator is not defined for this model.

    Quantile regression is the canonical case: the Hessian involves the
    error density at zero, which a single pass over the data cannot
    estimate without extra machinery.
    """

    exit_code = 2
