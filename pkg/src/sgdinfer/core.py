"""Small numerical building blocks: step sizes and running statistics.

Everything here is shape-agnostic and stateful in a checkpointable way:
each class can dump its state to plain Python containers and be rebuilt
from them, which is what makes bitwise pause/resume possible further up
the stack.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

__all__ = ["LearningRateSchedule", "AveragedAccumulator", "RunningCovariance"]


@dataclass(frozen=True)
class LearningRateSchedule:
    """Polynomially decaying step size ``gamma * n**(-alpha)``.

    The decay exponent has to sit strictly between 0.5 and 1: slower decay
    breaks convergence of the averaged iterate, faster decay freezes the
    path before it has forgotten its starting point.
    """

    gamma: float = 1.0
    alpha: float = 2.0 / 3.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.gamma) or self.gamma <= 0.0:
            raise ConfigError(f"step size scale must be positive, got {self.gamma!r}")
        if not (0.5 < self.alpha < 1.0):
            raise ConfigError(
                f"step size exponent must lie in (0.5, 1), got {self.alpha!r}"
            )

    def rate(self, n: int) -> float:
        """Step size for observation ``n`` (1-based)."""
        if n < 1:
            raise ConfigError(f"observation index must be >= 1, got {n}")
        return self.gamma * float(n) ** (-self.alpha)

    def state(self) -> dict:
        return {"gamma": self.gamma, "alpha": self.alpha}

    @classmethod
    def from_state(cls, state: dict) -> "LearningRateSchedule":
        return cls(gamma=state["gamma"], alpha=state["alpha"])


class AveragedAccumulator:
    """Running mean of a sequence of arrays, ignoring a burn-in prefix.

    Values pushed while ``count_seen <= burn_in`` are remembered only as
    the "last raw value"; once past the burn-in the running mean is
    updated incrementally.  If the stream ends before any value clears
    the burn-in, :meth:`average` falls back to the last raw value, which
    is the best available guess rather than an arbitrary zero.
    """

    def __init__(self, burn_in: int = 0):
        if burn_in < 0:
            raise ConfigError(f"burn-in must be >= 0, got {burn_in}")
        self.burn_in = int(burn_in)
        self.count_seen = 0
        self.count_used = 0
        self._mean: np.ndarray | None = None
        self._last: np.ndarray | None = None

    def push(self, value: np.ndarray) -> None:
        value = np.asarray(value, dtype=np.float64)
        self.count_seen += 1
        self._last = value.copy()
        if self.count_seen <= self.burn_in:
            return
        self.count_used += 1
        if self._mean is None:
            self._mean = value.copy()
        else:
            self._mean += (value - self._mean) / self.count_used

    def average(self) -> np.ndarray:
        if self.count_used > 0:
            assert self._mean is not None
            return self._mean.copy()
        if self._last is not None:
            return self._last.copy()
        raise ValueError("no values have been pushed")

    def state(self) -> dict:
        return {
            "burn_in": self.burn_in,
            "count_seen": self.count_seen,
            "count_used": self.count_used,
            "mean": None if self._mean is None else self._mean.tolist(),
            "last": None if self._last is None else self._last.tolist(),
        }

    @classmethod
    def from_state(cls, state: dict) -> "AveragedAccumulator":
        acc = cls(burn_in=state["burn_in"])
        acc.count_seen = state["count_seen"]
        acc.count_used = state["count_used"]
        if state["mean"] is not None:
            acc._mean = np.asarray(state["mean"], dtype=np.float64)
        if state["last"] is not None:
            acc._last = np.asarray(state["last"], dtype=np.float64)
        return acc


class RunningCovariance:
    """One-pass mean and covariance of vectors (Welford's recurrence).

    The rank-one update is applied in symmetrized form,

        M2 += 0.5 * (outer(d_old, d_new) + outer(d_new, d_old))

    so the accumulated matrix is bitwise symmetric at every step, not
    just symmetric up to rounding.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ConfigError(f"dimension must be >= 1, got {dim}")
        self.dim = int(dim)
        self.count = 0
        self._mean = np.zeros(dim, dtype=np.float64)
        self._m2 = np.zeros((dim, dim), dtype=np.float64)

    def push(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise ValueError(f"expected shape ({self.dim},), got {x.shape}")
        self.count += 1
        d_old = x - self._mean
        self._mean += d_old / self.count
        d_new = x - self._mean
        self._m2 += 0.5 * (np.outer(d_old, d_new) + np.outer(d_new, d_old))

    @property
    def mean(self) -> np.ndarray:
        return self._mean.copy()

    def covariance(self, ddof: int = 1) -> np.ndarray:
        """Sample covariance; needs at least ``ddof + 1`` observations."""
        if self.count < ddof + 1:
            raise ValueError(
                f"need at least {ddof + 1} observations for covariance "
                f"with ddof={ddof}, have {self.count}"
            )
        return self._m2 / (self.count - ddof)

    def state(self) -> dict:
        return {
            "dim": self.dim,
            "count": self.count,
            "mean": self._mean.tolist(),
            "m2": self._m2.tolist(),
        }

    @classmethod
    def from_state(cls, state: dict) -> "RunningCovariance":
        rc = cls(dim=state["dim"])
        rc.count = state["count"]
        rc._mean = np.asarray(state["mean"], dtype=np.float64)
        rc._m2 = np.asarray(state["m2"], dtype=np.float64)
        return rc
