"""One-pass streaming ensemble: main SGD path plus B reweighted replicates.

The whole ensemble lives in a single (B+1) x p matrix whose row 0 is the
main path and rows 1..B are the replicates.  Every observation triggers
one vectorized update of all rows:

    margins  t = (paths * x).sum(axis=1)
    scales   m = model.gradient_scale(t, y)
    update   paths -= (rate * w * m)[:, None] * x

with w[0] pinned to exactly 1.0 so row 0 is the unweighted recursion.
Because every row goes through the same elementwise operations and the
same per-row reduction, rows with equal contents and equal weights stay
bitwise equal forever — which is precisely the degenerate-weights
contract, and also why the margins are computed with an explicit
multiply-and-sum rather than a matrix-vector product (BLAS kernels may
reduce different rows in different orders).

Replicate weights come from counter-based streams keyed by
(master_seed, step, replicate_id); no generator state needs saving, so a
checkpoint is just the numbers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .core import AveragedAccumulator, LearningRateSchedule
from .errors import ConfigError, DataError, NumericalDivergenceError, PlugInUnavailableError
from .inference import SandwichAccumulator
from .models import GradientModel, Observation, model_from_state
from .rng import check_weight_distribution, step_weights

__all__ = [
    "EnsembleConfig",
    "Observation",
    "StreamingEnsemble",
    "load_checkpoint",
    "run_stream",
    "save_checkpoint",
    "sgd_step",
]

CHECKPOINT_FORMAT = "sgdinfer-ensemble"
CHECKPOINT_VERSION = 1


def sgd_step(
    iterate: np.ndarray,
    z: Observation,
    rate: float,
    weight: float,
    model: GradientModel,
) -> np.ndarray:
    """One weighted SGD update: iterate - rate * weight * grad(iterate; z).

    Scalar reference form of the ensemble update, used by tests and
    oracles; the engine applies the same arithmetic to all rows at once.
    """
    if rate <= 0.0:
        raise ConfigError(f"step size must be positive, got {rate!r}")
    if weight < 0.0:
        raise ConfigError(f"weight must be nonnegative, got {weight!r}")
    g = model.gradient(np.asarray(iterate, dtype=np.float64), z)
    if not np.all(np.isfinite(g)):
        raise NumericalDivergenceError("non-finite gradient in SGD step")
    return np.asarray(iterate, dtype=np.float64) - (rate * weight) * g


@dataclass
class EnsembleConfig:
    """Everything needed to (re)create a streaming run."""

    model: GradientModel
    dim: int
    n_replicates: int = 200
    burn_in: int = 0
    schedule: LearningRateSchedule = field(default_factory=LearningRateSchedule)
    weight_dist: str = "exponential"
    master_seed: int = 0
    theta0: np.ndarray | None = None
    plugin: bool | None = None  # None: enable iff the model has a Hessian
    plugin_at: str = "pre"  # evaluate plug-in terms at the pre- or post-update iterate
    divergence_cap: float = 1e8

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ConfigError(f"dimension must be >= 1, got {self.dim}")
        if self.n_replicates < 1:
            raise ConfigError(
                f"need at least 1 replicate, got {self.n_replicates}"
            )
        if self.burn_in < 0:
            raise ConfigError(f"burn-in must be >= 0, got {self.burn_in}")
        check_weight_distribution(self.weight_dist)
        if self.plugin_at not in ("pre", "post"):
            raise ConfigError(
                f"plugin_at must be 'pre' or 'post', got {self.plugin_at!r}"
            )
        if not (self.divergence_cap > 0.0):
            raise ConfigError("divergence cap must be positive")
        if self.theta0 is not None:
            theta0 = np.asarray(self.theta0, dtype=np.float64)
            if theta0.shape != (self.dim,):
                raise ConfigError(
                    f"theta0 has shape {theta0.shape}, expected ({self.dim},)"
                )
            if not np.all(np.isfinite(theta0)):
                raise ConfigError("theta0 must be finite")
            self.theta0 = theta0


class StreamingEnsemble:
    """Main path, B replicate paths, running averages, plug-in accumulators.

    All replicate starting points coincide with the main starting point;
    that is part of the resampling scheme, not a configurable choice.
    """

    def __init__(self, config: EnsembleConfig):
        self.config = config
        self.model = config.model
        self.dim = config.dim
        self.n_replicates = config.n_replicates
        self.n = 0

        theta0 = config.theta0
        if theta0 is None:
            theta0 = np.zeros(self.dim, dtype=np.float64)
        self._theta0 = theta0.copy()
        self.paths = np.tile(theta0, (self.n_replicates + 1, 1))
        self.averages = AveragedAccumulator(burn_in=config.burn_in)

        want_plugin = config.plugin
        if want_plugin is None:
            want_plugin = self.model.has_hessian
        if want_plugin and not self.model.has_hessian:
            raise PlugInUnavailableError(
                f"model {self.model.name!r} does not support the plug-in "
                f"covariance; rerun with the plug-in disabled"
            )
        self.plugin = SandwichAccumulator(self.dim) if want_plugin else None

        self._ids = np.arange(1, self.n_replicates + 1, dtype=np.uint64)
        self._w = np.ones(self.n_replicates + 1, dtype=np.float64)

    # -- accessors ---------------------------------------------------------

    def main_iterate(self) -> np.ndarray:
        return self.paths[0].copy()

    def replicate_iterates(self) -> np.ndarray:
        return self.paths[1:].copy()

    def _average_matrix(self) -> np.ndarray:
        if self.n == 0:
            return self.paths.copy()
        return self.averages.average()

    def main_average(self) -> np.ndarray:
        return self._average_matrix()[0]

    def replicate_averages(self) -> np.ndarray:
        return self._average_matrix()[1:]

    # -- the update --------------------------------------------------------

    def process(self, z: Observation) -> None:
        """Consume one observation: advance every path once."""
        x = np.asarray(z.x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise DataError(
                f"observation {self.n + 1} has dimension {x.shape}, "
                f"expected ({self.dim},)"
            )
        if not np.all(np.isfinite(x)):
            raise DataError(f"observation {self.n + 1} has non-finite covariates")
        y = self.model.check_response(z.y)

        step = self.n + 1
        rate = self.config.schedule.rate(step)

        t = (self.paths * x).sum(axis=1)
        scale = self.model.gradient_scale(t, y)

        if self.plugin is not None and self.config.plugin_at == "pre":
            self._push_plugin(float(t[0]), float(scale[0]), x)

        w = self._w
        if self.config.weight_dist != "degenerate":
            w[1:] = step_weights(
                self.config.weight_dist, self.config.master_seed, step, self._ids
            )

        self.paths -= (rate * w * scale)[:, None] * x

        m = float(np.abs(self.paths).max())
        if not (m < self.config.divergence_cap):
            raise NumericalDivergenceError(
                f"path magnitude {m:.3e} at step {step} exceeded the divergence "
                f"cap {self.config.divergence_cap:.1e} (or became non-finite); "
                f"a smaller step-size scale usually fixes this",
                step=step,
            )

        self.averages.push(self.paths)

        if self.plugin is not None and self.config.plugin_at == "post":
            t0 = float((self.paths[0] * x).sum())
            s0 = float(self.model.gradient_scale(t0, y))
            self._push_plugin(t0, s0, x)

        self.n = step

    def _push_plugin(self, t0: float, scale0: float, x: np.ndarray) -> None:
        grad = scale0 * x
        hess = self.model.hessian_scale(t0) * np.outer(x, x)
        self.plugin.update(grad, hess)

    def process_many(self, source: Iterable[Observation]) -> int:
        count = 0
        for z in source:
            self.process(z)
            count += 1
        return count

    # -- checkpointing -----------------------------------------------------

    def checkpoint(self) -> dict:
        """Complete run state as plain JSON-serializable containers.

        Weight streams are counter-based, so their "position" is just the
        observation count; nothing else needs saving to resume exactly.
        """
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "model": self.model.state(),
            "dim": self.dim,
            "n": self.n,
            "n_replicates": self.n_replicates,
            "burn_in": self.config.burn_in,
            "schedule": self.config.schedule.state(),
            "weight_dist": self.config.weight_dist,
            "master_seed": self.config.master_seed,
            "theta0": self._theta0.tolist(),
            "plugin_at": self.config.plugin_at,
            "divergence_cap": self.config.divergence_cap,
            "paths": self.paths.tolist(),
            "averages": self.averages.state(),
            "plugin": None if self.plugin is None else self.plugin.state(),
        }

    @classmethod
    def from_checkpoint(cls, data: dict) -> "StreamingEnsemble":
        if data.get("format") != CHECKPOINT_FORMAT:
            raise ConfigError("not an ensemble checkpoint file")
        if data.get("version") != CHECKPOINT_VERSION:
            raise ConfigError(
                f"checkpoint version {data.get('version')!r} is not supported "
                f"(this build reads version {CHECKPOINT_VERSION})"
            )
        config = EnsembleConfig(
            model=model_from_state(data["model"]),
            dim=data["dim"],
            n_replicates=data["n_replicates"],
            burn_in=data["burn_in"],
            schedule=LearningRateSchedule.from_state(data["schedule"]),
            weight_dist=data["weight_dist"],
            master_seed=data["master_seed"],
            theta0=np.asarray(data["theta0"], dtype=np.float64),
            plugin=data["plugin"] is not None,
            plugin_at=data["plugin_at"],
            divergence_cap=data["divergence_cap"],
        )
        ens = cls(config)
        paths = np.asarray(data["paths"], dtype=np.float64)
        if paths.shape != ens.paths.shape:
            raise ConfigError(
                f"checkpoint paths have shape {paths.shape}, expected "
                f"{ens.paths.shape}"
            )
        ens.paths = paths
        ens.n = int(data["n"])
        ens.averages = AveragedAccumulator.from_state(data["averages"])
        if data["plugin"] is not None:
            ens.plugin = SandwichAccumulator.from_state(data["plugin"])
        return ens


def run_stream(
    source: Iterable[Observation] | Iterator[Observation],
    config: EnsembleConfig,
) -> StreamingEnsemble:
    """Fold the whole stream through a fresh ensemble, exactly one pass."""
    ens = StreamingEnsemble(config)
    if ens.process_many(source) == 0:
        raise DataError("observation stream is empty")
    return ens


def save_checkpoint(ensemble: StreamingEnsemble, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(ensemble.checkpoint(), fh)
        fh.write("\n")


def load_checkpoint(path) -> StreamingEnsemble:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"unreadable checkpoint file {path}: {exc}") from exc
    return StreamingEnsemble.from_checkpoint(data)
