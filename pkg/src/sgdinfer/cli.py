"""Command-line frontend.

Subcommands:

* ``fit``      stream a CSV through the ensemble, write report files
* ``simulate`` run Monte-Carlo scenario cells from a scenario file
* ``resume``   continue a checkpointed run on more data
* ``report``   render figures and tables from a saved report

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure (divergence circuit breaker).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .core import LearningRateSchedule
from .engine import EnsembleConfig, load_checkpoint, run_stream, save_checkpoint
from .errors import ConfigError, DataError, SGDInferError
from .inference import (
    build_report,
    format_report_table,
    write_covariance,
    write_histogram,
    write_report_json,
    write_report_table,
)
from .ingest import CsvSource, parse_ingestion_file
from .models import make_model
from .rng import WEIGHT_DISTRIBUTIONS
from .simulate import parse_scenario_file, report_columns, run_scenario, write_synthetic_csv

__all__ = ["main"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgdinfer",
        description="Streaming averaged-SGD estimation with replicate-based "
        "standard errors, in one pass over the data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a model to a CSV stream")
    fit.add_argument("--input", required=True, help="CSV data file")
    fit.add_argument("--config", required=True, help="ingestion config file")
    fit.add_argument("--out", required=True, help="output directory")
    fit.add_argument("--model", default="least_squares",
                     choices=["least_squares", "logistic", "quantile", "lad"])
    fit.add_argument("--tau", type=float, default=0.5,
                     help="quantile level for --model quantile")
    fit.add_argument("--replicates", type=int, default=200, metavar="B")
    fit.add_argument("--burn-in", type=int, default=0)
    fit.add_argument("--gamma", type=float, default=1.0,
                     help="step-size scale gamma in gamma * n**(-alpha)")
    fit.add_argument("--alpha", type=float, default=2.0 / 3.0,
                     help="step-size decay exponent, in (0.5, 1)")
    fit.add_argument("--weights", default="exponential",
                     choices=list(WEIGHT_DISTRIBUTIONS))
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--level", type=float, default=0.95)
    fit.add_argument("--bins", type=int, default=30,
                     help="bins for the histogram data files")
    fit.add_argument("--no-plugin", action="store_true",
                     help="skip the plug-in covariance accumulators")
    fit.add_argument("--plugin-at", default="pre", choices=["pre", "post"],
                     help="evaluate plug-in terms at the pre- or post-update iterate")
    fit.set_defaults(func=cmd_fit)

    sim = sub.add_parser("simulate", help="run Monte-Carlo scenario cells")
    sim.add_argument("--scenarios", required=True, help="scenario config file")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--workers", type=int, default=None,
                     help="override the worker count of every cell")
    sim.add_argument("--export-data", action="store_true",
                     help="also write each cell's first data stream as CSV")
    sim.set_defaults(func=cmd_simulate)

    res = sub.add_parser("resume", help="continue a checkpointed run")
    res.add_argument("--checkpoint", required=True)
    res.add_argument("--input", required=True, help="CSV file with further rows")
    res.add_argument("--config", required=True, help="ingestion config file")
    res.add_argument("--out", required=True)
    res.add_argument("--level", type=float, default=0.95)
    res.add_argument("--bins", type=int, default=30)
    res.set_defaults(func=cmd_resume)

    rep = sub.add_parser("report", help="render tables and figures from a run")
    rep.add_argument("--run", required=True,
                     help="run directory containing report.json")
    rep.add_argument("--out", default=None,
                     help="where to write (default: the run directory)")
    rep.add_argument("--bins", type=int, default=30)
    rep.set_defaults(func=cmd_report)

    return parser


def _write_run_outputs(ens, report, out_dir: Path, bins: int, extra: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report_table(report, out_dir / "report.txt")
    write_report_json(report, out_dir / "report.json")
    write_covariance(report.covariance, out_dir / "covariance.txt")
    names = report.coordinate_names()
    reps = report.replicate_averages
    if reps is not None:
        from .plots import _safe_name  # file naming shared with the figures

        for j, name in enumerate(names):
            write_histogram(reps[:, j], out_dir / f"hist_{_safe_name(name)}.txt",
                            bins=bins)
    if ens.plugin is not None:
        try:
            plugin_report = build_report(ens, level=report.level, method="plug-in",
                                         names=names)
            write_report_table(plugin_report, out_dir / "report_plugin.txt")
        except (DataError, SGDInferError) as err:
            (out_dir / "report_plugin.txt").write_text(
                f"# plug-in covariance unavailable: {err}\n"
            )
    save_checkpoint(ens, out_dir / "checkpoint.json")
    lines = [f"{k} = {v}" for k, v in extra.items()]
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")


def cmd_fit(args) -> int:
    t0 = time.perf_counter()
    spec = parse_ingestion_file(args.config)
    source = CsvSource(args.input, spec)
    model = make_model(args.model, tau=args.tau)
    cfg = EnsembleConfig(
        model=model,
        dim=source.dimension(),
        n_replicates=args.replicates,
        burn_in=args.burn_in,
        schedule=LearningRateSchedule(args.gamma, args.alpha),
        weight_dist=args.weights,
        master_seed=args.seed,
        plugin=False if args.no_plugin else None,
        plugin_at=args.plugin_at,
    )
    ens = run_stream(iter(source), cfg)
    report = build_report(ens, level=args.level, names=source.feature_names())
    summary = {
        "command": "fit",
        "input": args.input,
        "model": model.name,
        "n": ens.n,
        **source.summary(),
        "replicates": args.replicates,
        "burn_in": args.burn_in,
        "gamma": args.gamma,
        "alpha": args.alpha,
        "weights": args.weights,
        "seed": args.seed,
        "level": args.level,
        "elapsed_seconds": round(time.perf_counter() - t0, 3),
    }
    _write_run_outputs(ens, report, Path(args.out), args.bins, summary)
    print(format_report_table(report), end="")
    print(f"# n={ens.n} rows_skipped={source.rows_skipped} -> {args.out}")
    return 0


def cmd_simulate(args) -> int:
    configs = parse_scenario_file(args.scenarios)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = []
    for config in configs:
        if args.workers is not None:
            config.workers = args.workers
        cell = config.cell_name()
        if args.export_data:
            write_synthetic_csv(config, out_dir / f"{cell}.csv")
        t0 = time.perf_counter()
        report = run_scenario(config)
        elapsed = time.perf_counter() - t0
        rows = report_columns(report)
        table = "\n".join("\t".join(r) for r in rows) + "\n"
        (out_dir / f"{cell}_coverage.txt").write_text(table)
        with open(out_dir / f"{cell}.json", "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=1)
        index.append({"cell": cell, "repetitions": config.repetitions,
                      "elapsed_seconds": round(elapsed, 3)})
        print(f"== {cell} ({elapsed:.1f}s)")
        print(table, end="")
    with open(out_dir / "cells.json", "w", encoding="utf-8") as fh:
        json.dump(index, fh, indent=1)
    return 0


def cmd_resume(args) -> int:
    t0 = time.perf_counter()
    ens = load_checkpoint(args.checkpoint)
    spec = parse_ingestion_file(args.config)
    source = CsvSource(args.input, spec)
    if source.dimension() != ens.dim:
        raise ConfigError(
            f"checkpoint was built for dimension {ens.dim}, but the ingestion "
            f"config yields {source.dimension()} features"
        )
    n_before = ens.n
    ens.process_many(iter(source))
    report = build_report(ens, level=args.level, names=source.feature_names())
    summary = {
        "command": "resume",
        "checkpoint": args.checkpoint,
        "input": args.input,
        "model": ens.model.name,
        "n_before_resume": n_before,
        "n": ens.n,
        **source.summary(),
        "level": args.level,
        "elapsed_seconds": round(time.perf_counter() - t0, 3),
    }
    _write_run_outputs(ens, report, Path(args.out), args.bins, summary)
    print(format_report_table(report), end="")
    print(f"# resumed {n_before} -> {ens.n} observations -> {args.out}")
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    report_path = run_dir / "report.json"
    if not report_path.exists():
        raise ConfigError(f"no report.json under {run_dir}")
    with open(report_path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    out_dir = Path(args.out) if args.out else run_dir

    # delimited table regenerated from the machine-readable report
    import numpy as np

    from .inference import InferenceReport

    report = InferenceReport(
        point=np.asarray(data["point"]),
        se=np.asarray(data["se"]),
        ci_lower=np.asarray(data["ci_lower"]),
        ci_upper=np.asarray(data["ci_upper"]),
        level=data["level"],
        method=data["method"],
        n_used=data["n_used"],
        names=data.get("names") or [],
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report_table(report, out_dir / "report.txt")

    from .plots import render_replicate_histograms

    written = render_replicate_histograms(data, out_dir, bins=args.bins)
    print(f"wrote report.txt and {len(written)} figure(s) to {out_dir}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SGDInferError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code
    except OSError as err:
        # unreadable/missing files get the data exit code
        print(f"error: {err}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
