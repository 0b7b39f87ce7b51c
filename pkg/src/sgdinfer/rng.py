"""Deterministic counter-based random weight streams.

Replicate weights are produced by hashing ``(master_seed, step,
replicate_id)`` with a SplitMix64-style mixer, so the weight seen by
replicate ``b`` at step ``n`` is a pure function of those three integers.
That buys three properties the ensemble relies on:

* replaying a run (or resuming from a checkpoint) regenerates the exact
  same weights without storing generator state;
* replicates can be evaluated in any order, or in parallel, without
  changing their streams;
* adding or removing replicates never perturbs the others.

Distributions are restricted to the mean-one/variance-one family used by
the resampling procedure: ``exponential`` (Exp(1)), ``poisson``
(Poisson(1)), and ``degenerate`` (the constant 1, a test mode that must
collapse every replicate onto the main path bitwise).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError

__all__ = [
    "WEIGHT_DISTRIBUTIONS",
    "WeightStream",
    "derive_seed",
    "draw_weight",
    "step_weights",
]

WEIGHT_DISTRIBUTIONS = ("exponential", "poisson", "degenerate")

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)

# Poisson(1) CDF, long enough that the tail mass is far below float64
# resolution; the last entry is pinned to 1.0 so a uniform draw of exactly
# 1.0 cannot fall off the end of the table.
_POISSON1_CDF = np.cumsum([math.exp(-1.0) / math.factorial(k) for k in range(36)])
_POISSON1_CDF = np.clip(_POISSON1_CDF, 0.0, 1.0)
_POISSON1_CDF[-1] = 1.0


def _mix64(z: np.ndarray | np.uint64) -> np.ndarray | np.uint64:
    """SplitMix64 finalizer; wraps modulo 2**64 by construction."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX_A
        z = (z ^ (z >> np.uint64(27))) * _MIX_B
        return z ^ (z >> np.uint64(31))


def _uniforms(bits: np.ndarray) -> np.ndarray:
    """Map uint64 hashes to float64 uniforms in the half-open (0, 1]."""
    return ((bits >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * 2.0**-53


def derive_seed(*parts: int) -> int:
    """Hash-combine integers into a new 63-bit seed.

    Used to give each simulation repetition its own weight-stream master
    seed and data seed without any correlation between them.
    """
    h = _GOLDEN
    with np.errstate(over="ignore"):
        for part in parts:
            h = _mix64(h + _GOLDEN * np.uint64(int(part) & _MASK64))
    return int(h) & ((1 << 63) - 1)


def check_weight_distribution(name: str) -> str:
    if name not in WEIGHT_DISTRIBUTIONS:
        raise ConfigError(
            f"unknown weight distribution {name!r}; "
            f"choose one of {', '.join(WEIGHT_DISTRIBUTIONS)}"
        )
    return name


def step_weights(
    dist: str,
    master_seed: int,
    step: int,
    replicate_ids: np.ndarray,
) -> np.ndarray:
    """Weights for the given replicates at one step, as a float64 array.

    ``step`` is the 1-based observation index.  The result depends only on
    ``(master_seed, step, id)`` per element, never on call order.
    """
    check_weight_distribution(dist)
    ids = np.asarray(replicate_ids, dtype=np.uint64)
    if dist == "degenerate":
        return np.ones(ids.shape, dtype=np.float64)
    with np.errstate(over="ignore"):
        base = _mix64(
            np.uint64(int(master_seed) & _MASK64)
            + _GOLDEN * np.uint64(int(step) & _MASK64)
        )
        bits = _mix64(base + _GOLDEN * ids)
    u = _uniforms(bits)
    if dist == "exponential":
        return -np.log(u)
    # poisson: invert the CDF table; searchsorted finds the smallest k
    # with u <= cdf[k].
    return np.searchsorted(_POISSON1_CDF, u, side="left").astype(np.float64)


class WeightStream:
    """Sequential view of a single replicate's weight stream.

    Draws advance an internal step counter and delegate to the same hash
    as :func:`step_weights`, so a scalar stream and a vectorized call see
    bitwise-identical values.
    """

    def __init__(self, dist: str, master_seed: int, replicate_id: int, step: int = 0):
        self.dist = check_weight_distribution(dist)
        self.master_seed = int(master_seed)
        self.replicate_id = int(replicate_id)
        self.step = int(step)

    def draw(self) -> float:
        self.step += 1
        w = step_weights(
            self.dist,
            self.master_seed,
            self.step,
            np.asarray([self.replicate_id], dtype=np.uint64),
        )
        return float(w[0])


def draw_weight(stream: WeightStream) -> float:
    """Draw the next weight from a stream (mean 1, variance 1, or the
    degenerate constant 1)."""
    return stream.draw()
