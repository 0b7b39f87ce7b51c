"""Figure rendering for the report command.

Renders one histogram per coordinate from the replicate averages stored
in a machine-readable report, with the point estimate marked.  Uses the
non-interactive backend so it works headless; files land next to the
delimited tables.
"""

from __future__ import annotations

import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import DataError

__all__ = ["render_replicate_histograms"]


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name)


def render_replicate_histograms(
    report_data: dict, out_dir, bins: int = 30, dpi: int = 150
) -> list[Path]:
    """Write hist_<coordinate>.png files; returns the paths written."""
    reps = report_data.get("replicate_averages")
    if not reps:
        raise DataError(
            "report carries no replicate averages to plot (plug-in-only "
            "reports have none)"
        )
    reps = np.asarray(reps, dtype=np.float64)
    point = np.asarray(report_data["point"], dtype=np.float64)
    names = report_data.get("names") or [
        f"coef_{j + 1}" for j in range(point.shape[0])
    ]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    written = []
    for j, name in enumerate(names):
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        ax.hist(reps[:, j], bins=bins, color="#4878a8", edgecolor="white")
        ax.axvline(point[j], color="#b02428", linewidth=1.6,
                   label=f"estimate {point[j]:.4g}")
        ax.set_xlabel(name)
        ax.set_ylabel("replicates")
        ax.legend(frameon=False, fontsize=8)
        fig.tight_layout()
        path = out_dir / f"hist_{_safe_name(name)}.png"
        fig.savefig(path, dpi=dpi)
        plt.close(fig)
        written.append(path)
    return written
