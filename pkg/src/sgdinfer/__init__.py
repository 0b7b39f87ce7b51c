"""Streaming averaged-SGD estimation with perturbation-based resampling.

The package fits M-estimation style models (least squares, logistic,
quantile regression) by stochastic gradient descent in a single pass over
the data, while maintaining a bundle of randomly reweighted replicate
paths.  The spread of the replicate averages yields standard errors and
confidence intervals without storing the data or revisiting it.
"""

from .core import AveragedAccumulator, LearningRateSchedule, RunningCovariance
from .engine import EnsembleConfig, Observation, StreamingEnsemble, run_stream
from .errors import (
    ConfigError,
    DataError,
    NumericalDivergenceError,
    PlugInUnavailableError,
)
from .inference import (
    InferenceReport,
    build_report,
    confidence_intervals,
    replicate_covariance,
    sandwich_covariance,
)
from .models import LeastSquares, Logistic, Quantile, make_model

__all__ = [
    "AveragedAccumulator",
    "ConfigError",
    "DataError",
    "EnsembleConfig",
    "InferenceReport",
    "LearningRateSchedule",
    "LeastSquares",
    "Logistic",
    "NumericalDivergenceError",
    "Observation",
    "PlugInUnavailableError",
    "Quantile",
    "RunningCovariance",
    "StreamingEnsemble",
    "build_report",
    "confidence_intervals",
    "make_model",
    "replicate_covariance",
    "run_stream",
    "sandwich_covariance",
]

__version__ = "0.1.0"
