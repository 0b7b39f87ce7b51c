"""Monte-Carlo coverage studies on synthetic streams.

A scenario cell is (model, N, p, q, mu): the true coefficient vector has
q/2 entries at +mu, q/2 at -mu and the rest zero, covariates are
standard normal, and the error/response law depends on the model
(Gaussian errors for least squares, Bernoulli responses for logistic,
Laplace errors for the median-quantile cells).  Each repetition draws a
fresh data stream and fresh replicate weights, runs the one-pass
ensemble, and records whether each coordinate's interval covered the
truth; coverage, average estimated SE, and across-repetition empirical
SE are aggregated over repetitions.

The step-size constants are not dictated by the method, and the defaults
below matter: the least-squares update multiplies the iterate by
(1 - 2 gamma_n |x|^2) at every step, so a scale that is comfortable at
p=2 can amplify the first few iterates explosively at p=10 and beyond.
The per-model defaults were chosen by running the standard cells at
several scales and keeping values with near-nominal coverage and no
early blow-ups; override them per scenario when in doubt.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from .core import LearningRateSchedule
from .engine import EnsembleConfig, StreamingEnsemble
from .errors import ConfigError
from .inference import build_report
from .models import GradientModel, Observation, make_model
from .rng import check_weight_distribution, derive_seed

__all__ = [
    "CoverageReport",
    "ScenarioConfig",
    "generate_observation",
    "independent_main_paths",
    "parse_scenario_file",
    "report_columns",
    "run_scenario",
    "stream_observations",
    "true_theta",
    "write_synthetic_csv",
]

# Calibrated at the (N=10000, p=10, q=6) cells; see module docstring.
DEFAULT_GAMMA = {
    "least_squares": 0.1,
    "logistic": 1.0,
    "quantile": 0.25,
    "lad": 0.25,
}

_CHUNK = 512


def true_theta(p: int, q: int, mu: float) -> np.ndarray:
    """Coefficient vector (mu 1_{q/2}, -mu 1_{q/2}, 0_{p-q})."""
    if q % 2 != 0 or q < 2:
        raise ConfigError(f"q must be a positive even integer, got {q}")
    if q > p:
        raise ConfigError(f"q={q} exceeds the dimension p={p}")
    theta = np.zeros(p, dtype=np.float64)
    theta[: q // 2] = mu
    theta[q // 2 : q] = -mu
    return theta


def _generate_block(
    model_name: str, theta0: np.ndarray, size: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """One block of synthetic observations: (X, y) with X ~ N(0, I)."""
    p = theta0.shape[0]
    x = rng.standard_normal((size, p))
    signal = x @ theta0
    if model_name in ("least_squares", "ls", "linear"):
        y = signal + rng.standard_normal(size)
    elif model_name == "logistic":
        y = np.where(rng.random(size) < expit(signal), 1.0, -1.0)
    elif model_name in ("quantile", "lad"):
        y = signal + rng.laplace(0.0, 1.0, size)
    else:
        raise ConfigError(f"unknown model {model_name!r}")
    return x, y


def generate_observation(
    model_name: str, theta0: np.ndarray, rng: np.random.Generator
) -> Observation:
    """Draw a single synthetic observation (one-at-a-time form)."""
    x, y = _generate_block(model_name, np.asarray(theta0, dtype=np.float64), 1, rng)
    return Observation(y=float(y[0]), x=x[0])


def stream_observations(
    model_name: str, theta0: np.ndarray, n: int, rng: np.random.Generator
):
    """Yield n observations, generated in fixed-size blocks for speed.

    The block structure is part of the reproducibility contract: a given
    (generator state, n) always consumes random numbers in the same
    order.
    """
    theta0 = np.asarray(theta0, dtype=np.float64)
    remaining = n
    while remaining > 0:
        size = min(_CHUNK, remaining)
        x, y = _generate_block(model_name, theta0, size, rng)
        for i in range(size):
            yield Observation(y=float(y[i]), x=x[i])
        remaining -= size


@dataclass
class ScenarioConfig:
    """One simulation cell plus its run parameters."""

    model: str
    n_obs: int
    dim: int
    q: int
    mu: float
    tau: float = 0.5
    n_replicates: int = 200
    burn_in: int = 2000
    repetitions: int = 200
    level: float = 0.95
    gamma: float | None = None
    alpha: float = 2.0 / 3.0
    weight_dist: str = "exponential"
    master_seed: int = 0
    workers: int = 1
    label: str = ""

    def __post_init__(self) -> None:
        make_model(self.model, tau=self.tau)  # validates name and tau
        if self.n_obs < 1:
            raise ConfigError(f"n must be >= 1, got {self.n_obs}")
        true_theta(self.dim, self.q, self.mu)  # validates p/q relation
        if not (0 <= self.burn_in < self.n_obs):
            raise ConfigError(
                f"burn-in must lie in [0, n); got burn_in={self.burn_in}, "
                f"n={self.n_obs}"
            )
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        if not (0.0 < self.level < 1.0):
            raise ConfigError(f"level must be in (0, 1), got {self.level}")
        check_weight_distribution(self.weight_dist)
        if self.master_seed < 0:
            raise ConfigError("master seed must be a nonnegative integer")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.n_replicates < 2:
            raise ConfigError(
                f"coverage runs need at least 2 replicates, got {self.n_replicates}"
            )

    def resolved_gamma(self) -> float:
        if self.gamma is not None:
            return self.gamma
        return DEFAULT_GAMMA[self.model if self.model in DEFAULT_GAMMA else "least_squares"]

    def schedule(self) -> LearningRateSchedule:
        return LearningRateSchedule(self.resolved_gamma(), self.alpha)

    def model_instance(self) -> GradientModel:
        return make_model(self.model, tau=self.tau)

    def theta(self) -> np.ndarray:
        return true_theta(self.dim, self.q, self.mu)

    def cell_name(self) -> str:
        if self.label:
            return self.label
        return f"{self.model}_N{self.n_obs}_p{self.dim}_q{self.q}_mu{self.mu:g}"


@dataclass
class CoverageReport:
    """Aggregated Monte-Carlo results for one scenario cell."""

    config: ScenarioConfig
    true_theta: np.ndarray
    repetitions: int
    rw_coverage: np.ndarray
    rw_se_mean: np.ndarray
    empirical_se: np.ndarray
    points_mean: np.ndarray
    points: np.ndarray
    plugin_coverage: np.ndarray | None = None
    plugin_se_mean: np.ndarray | None = None

    def to_dict(self) -> dict:
        out = {
            "cell": self.config.cell_name(),
            "config": asdict(self.config),
            "true_theta": self.true_theta.tolist(),
            "repetitions": self.repetitions,
            "rw_coverage": self.rw_coverage.tolist(),
            "rw_se_mean": self.rw_se_mean.tolist(),
            "empirical_se": self.empirical_se.tolist(),
            "points_mean": self.points_mean.tolist(),
            "plugin_coverage": None
            if self.plugin_coverage is None
            else self.plugin_coverage.tolist(),
            "plugin_se_mean": None
            if self.plugin_se_mean is None
            else self.plugin_se_mean.tolist(),
        }
        return out


def _run_repetition(config: ScenarioConfig, rep: int) -> dict:
    theta0 = config.theta()
    model = config.model_instance()
    data_rng = np.random.default_rng(
        np.random.SeedSequence([config.master_seed, 0x5EED, rep])
    )
    ens_cfg = EnsembleConfig(
        model=model,
        dim=config.dim,
        n_replicates=config.n_replicates,
        burn_in=config.burn_in,
        schedule=config.schedule(),
        weight_dist=config.weight_dist,
        master_seed=derive_seed(config.master_seed, rep),
    )
    ens = StreamingEnsemble(ens_cfg)
    for z in stream_observations(config.model, theta0, config.n_obs, data_rng):
        ens.process(z)

    rw = build_report(ens, level=config.level)
    out = {
        "point": rw.point,
        "rw_se": rw.se,
        "rw_hit": (rw.ci_lower <= theta0) & (theta0 <= rw.ci_upper),
    }
    if ens.plugin is not None:
        pi = build_report(ens, level=config.level, method="plug-in")
        out["plugin_se"] = pi.se
        out["plugin_hit"] = (pi.ci_lower <= theta0) & (theta0 <= pi.ci_upper)
    return out


def _repetition_task(args: tuple[dict, int]) -> dict:
    state, rep = args
    return _run_repetition(ScenarioConfig(**state), rep)


def run_scenario(config: ScenarioConfig) -> CoverageReport:
    """All repetitions of one cell; scheduling never affects the result.

    Repetition r derives its data stream and weight streams from
    (master_seed, r) alone, and results are aggregated in repetition
    order, so any worker count produces the identical report.
    """
    reps = range(config.repetitions)
    if config.workers > 1:
        tasks = [(asdict(config), r) for r in reps]
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_repetition_task, tasks, chunksize=1))
    else:
        results = [_run_repetition(config, r) for r in reps]

    points = np.stack([r["point"] for r in results])
    rw_se = np.stack([r["rw_se"] for r in results])
    rw_hits = np.stack([r["rw_hit"] for r in results])
    report = CoverageReport(
        config=config,
        true_theta=config.theta(),
        repetitions=config.repetitions,
        rw_coverage=rw_hits.mean(axis=0),
        rw_se_mean=rw_se.mean(axis=0),
        empirical_se=points.std(axis=0, ddof=1) if len(results) > 1
        else np.zeros(config.dim),
        points_mean=points.mean(axis=0),
        points=points,
    )
    if "plugin_se" in results[0]:
        report.plugin_se_mean = np.stack([r["plugin_se"] for r in results]).mean(axis=0)
        report.plugin_coverage = np.stack([r["plugin_hit"] for r in results]).mean(axis=0)
    return report


def default_report_indices(p: int, q: int) -> list[int]:
    """1-based coordinate picks: one +mu, one -mu, one null coordinate."""
    return [1, q // 2 + 1, q + 1] if q < p else [1, q // 2 + 1, q]


def report_columns(
    report: CoverageReport, coordinate_indices: list[int] | None = None
) -> list[list[str]]:
    """Rows of the coverage/SE summary table for selected coordinates.

    Indices are 1-based.  The default picks the first coordinate of each
    block of the true vector: a +mu entry, a -mu entry, and a zero entry.
    """
    cfg = report.config
    if coordinate_indices is None:
        coordinate_indices = default_report_indices(cfg.dim, cfg.q)
    for idx in coordinate_indices:
        if not (1 <= idx <= cfg.dim):
            raise ConfigError(
                f"coordinate index {idx} out of range 1..{cfg.dim}"
            )
    cols = [i - 1 for i in coordinate_indices]

    def fmt(values, pattern):
        return [pattern.format(values[c]) for c in cols]

    rows = [["dim"] + [str(i) for i in coordinate_indices]]
    rows.append(["rw_coverage"] + fmt(report.rw_coverage, "{:.3f}"))
    if report.plugin_coverage is not None:
        rows.append(["plugin_coverage"] + fmt(report.plugin_coverage, "{:.3f}"))
    else:
        rows.append(["plugin_coverage"] + ["-"] * len(cols))
    rows.append(["rw_se"] + fmt(report.rw_se_mean, "{:.4f}"))
    if report.plugin_se_mean is not None:
        rows.append(["plugin_se"] + fmt(report.plugin_se_mean, "{:.4f}"))
    else:
        rows.append(["plugin_se"] + ["-"] * len(cols))
    rows.append(["empirical_se"] + fmt(report.empirical_se, "{:.4f}"))
    return rows


def independent_main_paths(
    model_name: str,
    theta0: np.ndarray,
    n_obs: int,
    n_runs: int,
    schedule: LearningRateSchedule,
    burn_in: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Averaged estimates from n_runs fully independent unweighted runs.

    Each row gets its own data stream; all rows advance in lockstep so
    the whole Monte-Carlo experiment is a handful of array operations per
    step.  Used for sampling-distribution diagnostics where the object
    of interest is the spread of the point estimate itself.
    """
    theta0 = np.asarray(theta0, dtype=np.float64)
    p = theta0.shape[0]
    model = make_model(model_name)
    paths = np.tile(theta0, (n_runs, 1))
    mean = np.zeros_like(paths)
    used = 0
    for step in range(1, n_obs + 1):
        x, y = _generate_block(model_name, theta0, n_runs, rng)
        # x rows are per-run covariates; same update as the ensemble, but
        # every row sees its own observation
        t = (paths * x).sum(axis=1)
        scale = model.gradient_scale(t, y)
        paths -= schedule.rate(step) * scale[:, None] * x
        if step > burn_in:
            used += 1
            mean += (paths - mean) / used
    return mean if used > 0 else paths.copy()


# ---------------------------------------------------------------------------
# scenario files and synthetic exports

_SCENARIO_KEYS = {
    "model": ("model", str),
    "n": ("n_obs", int),
    "p": ("dim", int),
    "q": ("q", int),
    "mu": ("mu", float),
    "tau": ("tau", float),
    "replicates": ("n_replicates", int),
    "burn_in": ("burn_in", int),
    "repetitions": ("repetitions", int),
    "level": ("level", float),
    "gamma": ("gamma", float),
    "alpha": ("alpha", float),
    "weights": ("weight_dist", str),
    "seed": ("master_seed", int),
    "workers": ("workers", int),
    "label": ("label", str),
}

_REQUIRED_KEYS = ("model", "n", "p", "q", "mu")


def parse_scenario_file(path) -> list[ScenarioConfig]:
    """Read scenario cells from a line-oriented key = value file.

    Blank lines separate cells; '#' starts a comment.  Keys: model, n,
    p, q, mu, and optionally tau, replicates, burn_in, repetitions,
    level, gamma, alpha, weights, seed, workers, label.
    """
    blocks: list[dict] = []
    current: dict = {}
    current_lines: list[int] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                if current:
                    blocks.append(current)
                    current = {}
                continue
            if "=" not in line:
                raise ConfigError(
                    f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}"
                )
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in _SCENARIO_KEYS:
                raise ConfigError(
                    f"{path}:{lineno}: unknown scenario key {key!r}; known keys: "
                    + ", ".join(sorted(_SCENARIO_KEYS))
                )
            field_name, typ = _SCENARIO_KEYS[key]
            try:
                current[field_name] = typ(value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}")
            current_lines.append(lineno)
    if current:
        blocks.append(current)
    if not blocks:
        raise ConfigError(f"{path}: no scenario cells found")

    configs = []
    for i, block in enumerate(blocks, start=1):
        missing = [k for k in _REQUIRED_KEYS if _SCENARIO_KEYS[k][0] not in block]
        if missing:
            raise ConfigError(
                f"{path}: scenario cell {i} is missing required keys: "
                + ", ".join(missing)
            )
        configs.append(ScenarioConfig(**block))
    return configs


def write_synthetic_csv(config: ScenarioConfig, path, rep: int = 0) -> int:
    """Write one repetition's data stream as a CSV (y, x1..xp); returns rows.

    Uses the same seeding as run_scenario's repetition ``rep``, so a fit
    on the exported file sees exactly the stream the scenario would.
    """
    theta0 = config.theta()
    rng = np.random.default_rng(
        np.random.SeedSequence([config.master_seed, 0x5EED, rep])
    )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y"] + [f"x{j + 1}" for j in range(config.dim)])
        for z in stream_observations(config.model, theta0, config.n_obs, rng):
            writer.writerow([repr(z.y)] + [repr(float(v)) for v in z.x])
    return config.n_obs
