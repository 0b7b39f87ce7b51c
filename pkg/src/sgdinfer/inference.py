"""Statistical output: covariances, intervals, diagnostics, serialization.

The primary route to a standard error is the spread of the replicate
averages ("RW" below, for randomly-weighted): the sample covariance of
the B replicate averages estimates the sampling covariance of the point
estimate directly.  The plug-in sandwich route is kept alongside it for
the smooth losses, both because it is the classical comparator and
because the two-route disagreement is itself informative.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.stats import norm

from .errors import ConfigError, DataError, PlugInUnavailableError

__all__ = [
    "InferenceReport",
    "SandwichAccumulator",
    "build_report",
    "confidence_intervals",
    "histogram_export",
    "ks_distance",
    "percentile_intervals",
    "replicate_covariance",
    "sandwich_covariance",
    "theoretical_covariance",
]

METHOD_RW = "RW"
METHOD_PLUGIN = "plug-in"


def replicate_covariance(replicate_averages: np.ndarray) -> np.ndarray:
    """Sample covariance across the rows of a B x p matrix (B >= 2)."""
    reps = np.atleast_2d(np.asarray(replicate_averages, dtype=np.float64))
    b = reps.shape[0]
    if b < 2:
        raise ConfigError(f"need at least 2 replicates for a covariance, got {b}")
    # shifting by the first row costs nothing, improves conditioning, and
    # makes an ensemble of identical rows come out exactly zero
    shifted = reps - reps[0]
    centered = shifted - shifted.mean(axis=0)
    cov = centered.T @ centered / (b - 1)
    return 0.5 * (cov + cov.T)


def confidence_intervals(
    point: np.ndarray, se: np.ndarray, level: float = 0.95
) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric normal-quantile intervals point +/- z * se."""
    if not (0.0 < level < 1.0):
        raise ConfigError(f"confidence level must be in (0, 1), got {level!r}")
    point = np.asarray(point, dtype=np.float64)
    se = np.asarray(se, dtype=np.float64)
    if np.any(se < 0.0):
        raise ConfigError("standard errors must be nonnegative")
    z = float(norm.ppf(0.5 * (1.0 + level)))
    return point - z * se, point + z * se


def percentile_intervals(
    replicate_averages: np.ndarray, level: float = 0.95
) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate percentile intervals of the replicate averages.

    Offered as an alternative to the normal-quantile construction since
    the replicates estimate the whole sampling distribution, not just its
    width.  Not used by the default reports.
    """
    if not (0.0 < level < 1.0):
        raise ConfigError(f"confidence level must be in (0, 1), got {level!r}")
    reps = np.atleast_2d(np.asarray(replicate_averages, dtype=np.float64))
    lo = np.quantile(reps, 0.5 * (1.0 - level), axis=0)
    hi = np.quantile(reps, 0.5 * (1.0 + level), axis=0)
    return lo, hi


class SandwichAccumulator:
    """Running means of Hessian entries and gradient outer products.

    ``s_mean`` approaches the mean Hessian and ``v_mean`` the mean
    gradient outer product; :func:`sandwich_covariance` turns the pair
    into a per-estimate covariance.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ConfigError(f"dimension must be >= 1, got {dim}")
        self.dim = int(dim)
        self.count = 0
        self.s_mean = np.zeros((dim, dim), dtype=np.float64)
        self.v_mean = np.zeros((dim, dim), dtype=np.float64)

    def update(self, grad: np.ndarray, hess: np.ndarray) -> None:
        grad = np.asarray(grad, dtype=np.float64)
        hess = np.asarray(hess, dtype=np.float64)
        if grad.shape != (self.dim,) or hess.shape != (self.dim, self.dim):
            raise DataError(
                f"plug-in update shapes {grad.shape}/{hess.shape} do not "
                f"match dimension {self.dim}"
            )
        self.count += 1
        self.s_mean += (hess - self.s_mean) / self.count
        self.v_mean += (np.outer(grad, grad) - self.v_mean) / self.count

    def state(self) -> dict:
        return {
            "dim": self.dim,
            "count": self.count,
            "s_mean": self.s_mean.tolist(),
            "v_mean": self.v_mean.tolist(),
        }

    @classmethod
    def from_state(cls, state: dict) -> "SandwichAccumulator":
        acc = cls(dim=state["dim"])
        acc.count = state["count"]
        acc.s_mean = np.asarray(state["s_mean"], dtype=np.float64)
        acc.v_mean = np.asarray(state["v_mean"], dtype=np.float64)
        return acc


def sandwich_covariance(
    acc: SandwichAccumulator, cond_cap: float = 1e12
) -> np.ndarray:
    """Per-estimate covariance S^-1 V S^-1 / n from accumulated means.

    S is inverted through a symmetric positive-definite factorization; a
    singular or badly conditioned S is refused rather than silently
    inverted.
    """
    if acc.count < 1:
        raise DataError("plug-in accumulator has seen no observations")
    s, v = acc.s_mean, acc.v_mean
    cond = float(np.linalg.cond(s))
    if not np.isfinite(cond) or cond > cond_cap:
        raise DataError(
            f"curvature matrix is ill-conditioned (condition number "
            f"{cond:.3e} exceeds cap {cond_cap:.1e})"
        )
    try:
        factor = cho_factor(s)
    except np.linalg.LinAlgError as exc:
        raise DataError(f"curvature matrix is not positive definite: {exc}") from exc
    inner = cho_solve(factor, v)
    cov = cho_solve(factor, inner.T).T / acc.count
    return 0.5 * (cov + cov.T)


def theoretical_covariance(
    kind: str,
    gram: np.ndarray,
    sigma2: float | None = None,
    tau: float | None = None,
    density_at_zero: float | None = None,
    score_variance_at_zero: float | None = None,
    score_slope_at_zero: float | None = None,
) -> np.ndarray:
    """Closed-form asymptotic covariance of the averaged estimate.

    Used as an oracle in tests and simulation summaries; divide by n for
    the per-estimate covariance.

    kind="least_squares": sigma2 * inv(gram).
    kind="quantile": inv(gram) * tau*(1-tau) / density_at_zero**2, where
        density_at_zero is the error density at its tau-quantile.
    kind="subgradient": inv(gram) * score_variance_at_zero /
        score_slope_at_zero**2, the general form for non-smooth losses
        whose expected score has slope score_slope_at_zero at the truth.
    """
    gram = np.asarray(gram, dtype=np.float64)
    ginv = np.linalg.inv(gram)
    if kind == "least_squares":
        if sigma2 is None or sigma2 < 0.0:
            raise ConfigError("least_squares needs a nonnegative error variance")
        return sigma2 * ginv
    if kind == "quantile":
        if tau is None or not (0.0 < tau < 1.0):
            raise ConfigError(f"quantile level must be in (0, 1), got {tau!r}")
        if density_at_zero is None or density_at_zero <= 0.0:
            raise ConfigError(
                f"error density at the quantile must be positive, got "
                f"{density_at_zero!r}"
            )
        return ginv * (tau * (1.0 - tau) / density_at_zero**2)
    if kind == "subgradient":
        if score_slope_at_zero is None or score_slope_at_zero == 0.0:
            raise ConfigError("score slope at zero must be nonzero")
        if score_variance_at_zero is None or score_variance_at_zero < 0.0:
            raise ConfigError("score variance at zero must be nonnegative")
        return ginv * (score_variance_at_zero / score_slope_at_zero**2)
    raise ConfigError(f"no closed-form covariance for model kind {kind!r}")


def ks_distance(sample_a: np.ndarray, sample_b: np.ndarray) -> float:
    """Sup-norm distance between two empirical distribution functions."""
    a = np.sort(np.asarray(sample_a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(sample_b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise DataError("ks_distance needs two nonempty samples")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    return float(np.abs(cdf_a - cdf_b).max())


def histogram_export(
    values: np.ndarray, bins: int = 30
) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width histogram (edges, counts); counts sum to len(values)."""
    if bins < 1:
        raise ConfigError(f"bins must be >= 1, got {bins}")
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise DataError("cannot histogram an empty sample")
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        pad = max(0.5, abs(lo) * 1e-9)
        lo, hi = lo - pad, hi + pad
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    return edges, counts


@dataclass
class InferenceReport:
    """Point estimate with uncertainty, ready for rendering."""

    point: np.ndarray
    se: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    level: float
    method: str
    n_used: int
    covariance: np.ndarray | None = None
    replicate_averages: np.ndarray | None = None
    names: list[str] = field(default_factory=list)

    def coordinate_names(self) -> list[str]:
        if self.names:
            return list(self.names)
        return [f"coef_{j + 1}" for j in range(self.point.shape[0])]

    def to_dict(self) -> dict:
        out = {
            "point": self.point.tolist(),
            "se": self.se.tolist(),
            "ci_lower": self.ci_lower.tolist(),
            "ci_upper": self.ci_upper.tolist(),
            "level": self.level,
            "method": self.method,
            "n_used": self.n_used,
            "names": self.coordinate_names(),
        }
        if self.covariance is not None:
            out["covariance"] = self.covariance.tolist()
        if self.replicate_averages is not None:
            out["replicate_averages"] = self.replicate_averages.tolist()
        return out


def build_report(
    ensemble,
    level: float = 0.95,
    method: str = METHOD_RW,
    names: list[str] | None = None,
) -> InferenceReport:
    """Turn a finished ensemble into an InferenceReport.

    method="RW" uses the replicate-average covariance; method="plug-in"
    uses the sandwich accumulators (and raises PlugInUnavailableError for
    models without a Hessian or runs with the plug-in disabled).
    """
    point = ensemble.main_average()
    reps = ensemble.replicate_averages()
    if method == METHOD_RW:
        cov = replicate_covariance(reps)
    elif method == METHOD_PLUGIN:
        if ensemble.plugin is None:
            raise PlugInUnavailableError(
                "plug-in covariance is not available for this run"
            )
        cov = sandwich_covariance(ensemble.plugin)
    else:
        raise ConfigError(f"unknown inference method {method!r}")
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    lo, hi = confidence_intervals(point, se, level)
    return InferenceReport(
        point=point,
        se=se,
        ci_lower=lo,
        ci_upper=hi,
        level=level,
        method=method,
        n_used=ensemble.averages.count_used,
        covariance=cov,
        replicate_averages=reps if method == METHOD_RW else None,
        names=list(names) if names else [],
    )


# ---------------------------------------------------------------------------
# serialization


def format_report_table(report: InferenceReport, delimiter: str = "\t") -> str:
    header = ["coordinate", "estimate", "se", "ci_lower", "ci_upper", "method"]
    lines = [delimiter.join(header)]
    for name, est, se, lo, hi in zip(
        report.coordinate_names(),
        report.point,
        report.se,
        report.ci_lower,
        report.ci_upper,
    ):
        lines.append(
            delimiter.join(
                [name, f"{est:.6g}", f"{se:.6g}", f"{lo:.6g}", f"{hi:.6g}",
                 report.method]
            )
        )
    return "\n".join(lines) + "\n"


def write_report_table(report: InferenceReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_report_table(report))


def write_report_json(report: InferenceReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=1)
        fh.write("\n")


def write_covariance(matrix: np.ndarray, path, delimiter: str = "\t") -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        for row in matrix:
            fh.write(delimiter.join(f"{v:.12g}" for v in row))
            fh.write("\n")


def write_histogram(values: np.ndarray, path, bins: int = 30) -> None:
    """Two-column (bin_left, count) delimited histogram file."""
    edges, counts = histogram_export(values, bins=bins)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("bin_left\tcount\n")
        for left, count in zip(edges[:-1], counts):
            fh.write(f"{left:.12g}\t{int(count)}\n")
