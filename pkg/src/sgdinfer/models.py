"""Loss families for streaming M-estimation.

Every model here has a gradient of the form ``scale(t, y) * x`` where
``t = x @ theta`` is the linear predictor.  The engine exploits that: it
computes the margins of all replicate paths in one shot and asks the
model for the vector of scalar multipliers, so models never see the
path matrix itself.  Sign convention: ``gradient`` returns the gradient
of the *loss*, and the engine always applies ``theta -= rate * w * g``.

Second derivatives (where they exist) are likewise ``hessian_scale(t) *
outer(x, x)``; quantile regression has no usable second derivative, so
its plug-in hooks raise :class:`PlugInUnavailableError`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError, DataError, PlugInUnavailableError

__all__ = [
    "Observation",
    "GradientModel",
    "LeastSquares",
    "Logistic",
    "Quantile",
    "make_model",
]


@dataclass(slots=True)
class Observation:
    """One (response, covariate-vector) pair, consumed exactly once."""

    y: float
    x: np.ndarray


class GradientModel:
    """Base interface; subclasses fill in the scalar pieces."""

    name: str = "?"
    has_hessian: bool = False

    def gradient_scale(self, t, y):
        """Multiplier m(t, y) such that the loss gradient is m * x.

        ``t`` may be a scalar or an array of margins (one per replicate
        path); the return value broadcasts accordingly.
        """
        raise NotImplementedError

    def hessian_scale(self, t):
        """Multiplier h(t) such that the loss Hessian is h * outer(x, x)."""
        raise PlugInUnavailableError(
            f"model {self.name!r} does not supply a Hessian"
        )

    def loss(self, t, y):
        """Loss value at margin t (diagnostic; not used by the updates)."""
        raise NotImplementedError

    def check_response(self, y: float) -> float:
        y = float(y)
        if not np.isfinite(y):
            raise DataError(f"non-finite response {y!r}")
        return y

    # Convenience forms over full vectors, used by tests and small-scale
    # callers; the engine goes through the *_scale fast path instead.
    def gradient(self, theta: np.ndarray, z: Observation) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        x = np.asarray(z.x, dtype=np.float64)
        if theta.shape != x.shape:
            raise DataError(
                f"dimension mismatch: theta {theta.shape} vs x {x.shape}"
            )
        y = self.check_response(z.y)
        t = float(np.dot(x, theta))
        return self.gradient_scale(t, y) * x

    def hessian(self, theta: np.ndarray, z: Observation) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        x = np.asarray(z.x, dtype=np.float64)
        if theta.shape != x.shape:
            raise DataError(
                f"dimension mismatch: theta {theta.shape} vs x {x.shape}"
            )
        t = float(np.dot(x, theta))
        return self.hessian_scale(t) * np.outer(x, x)

    def loss_value(self, theta: np.ndarray, z: Observation) -> float:
        theta = np.asarray(theta, dtype=np.float64)
        x = np.asarray(z.x, dtype=np.float64)
        y = self.check_response(z.y)
        return float(self.loss(float(np.dot(x, theta)), y))

    def state(self) -> dict:
        return {"kind": self.name}

    def __repr__(self) -> str:  # pragma: no cover - debugging nicety
        return f"{type(self).__name__}()"


class LeastSquares(GradientModel):
    """Squared-error loss (y - x@theta)**2."""

    name = "least_squares"
    has_hessian = True

    def gradient_scale(self, t, y):
        return -2.0 * (y - t)

    def hessian_scale(self, t):
        return 2.0

    def loss(self, t, y):
        r = y - t
        return r * r


class Logistic(GradientModel):
    """Logistic loss log(1 + exp(-y * x@theta)) with labels in {-1, +1}."""

    name = "logistic"
    has_hessian = True

    def gradient_scale(self, t, y):
        # -y / (1 + exp(y*t)) = -y * sigmoid(-y*t); expit is overflow-safe
        # on both tails, so the multiplier stays in [-1, 1].
        return -y * expit(-y * np.asarray(t, dtype=np.float64))

    def hessian_scale(self, t):
        s = expit(np.asarray(t, dtype=np.float64))
        return s * (1.0 - s)

    def loss(self, t, y):
        return np.logaddexp(0.0, -y * np.asarray(t, dtype=np.float64))

    def check_response(self, y: float) -> float:
        y = float(y)
        if y not in (-1.0, 1.0):
            raise DataError(f"logistic response must be -1 or +1, got {y!r}")
        return y


class Quantile(GradientModel):
    """Check loss rho_tau(u) = u * (tau - [u < 0]); tau=0.5 is LAD.

    The subgradient multiplier takes exactly two values, -tau when the
    residual is >= 0 and 1-tau when it is < 0 (the indicator uses the
    strict inequality, so a residual of exactly zero counts as >= 0).
    """

    name = "quantile"
    has_hessian = False

    def __init__(self, tau: float = 0.5):
        tau = float(tau)
        if not (0.0 < tau < 1.0):
            raise ConfigError(f"quantile level must be in (0, 1), got {tau!r}")
        self.tau = tau

    def gradient_scale(self, t, y):
        u = y - np.asarray(t, dtype=np.float64)
        return (u < 0.0).astype(np.float64) - self.tau

    def loss(self, t, y):
        u = y - np.asarray(t, dtype=np.float64)
        return u * (self.tau - (u < 0.0).astype(np.float64))

    def state(self) -> dict:
        return {"kind": self.name, "tau": self.tau}

    def __repr__(self) -> str:  # pragma: no cover
        return f"Quantile(tau={self.tau})"


def make_model(kind: str, tau: float | None = None) -> GradientModel:
    """Build a model by name: least_squares | logistic | quantile | lad."""
    kind = str(kind).lower()
    if kind in ("least_squares", "ls", "linear"):
        return LeastSquares()
    if kind == "logistic":
        return Logistic()
    if kind == "quantile":
        return Quantile(0.5 if tau is None else tau)
    if kind == "lad":
        return Quantile(0.5)
    raise ConfigError(f"unknown model {kind!r}")


def model_from_state(state: dict) -> GradientModel:
    return make_model(state["kind"], tau=state.get("tau"))
