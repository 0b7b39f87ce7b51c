import json
import subprocess
import sys

import numpy as np
import pytest

from sgdinfer.cli import main
from sgdinfer.simulate import ScenarioConfig, write_synthetic_csv

INGEST_CONF = "response = y\ncovariate = x1\ncovariate = x2\ncovariate = x3\n"


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    """A 1000-row synthetic least-squares CSV plus its ingestion config."""
    root = tmp_path_factory.mktemp("cli_data")
    config = ScenarioConfig(model="least_squares", n_obs=1000, dim=3, q=2,
                            mu=0.5, burn_in=0, repetitions=1, master_seed=42,
                            gamma=0.2)
    write_synthetic_csv(config, root / "data.csv")
    (root / "ingest.conf").write_text(INGEST_CONF)
    lines = (root / "data.csv").read_text().strip().split("\n")
    (root / "head.csv").write_text("\n".join(lines[:601]) + "\n")
    (root / "tail.csv").write_text("\n".join([lines[0]] + lines[601:]) + "\n")
    return root


def fit_args(data_dir, out, **flags):
    base = {"replicates": "16", "burn-in": "100", "gamma": "0.2", "seed": "5"}
    base.update({k.replace("_", "-"): v for k, v in flags.items()})
    argv = ["fit", "--input", str(data_dir / "data.csv"),
            "--config", str(data_dir / "ingest.conf"), "--out", str(out)]
    for key, value in base.items():
        argv += [f"--{key}", value]
    return argv


# ---------------------------------------------------------------------------
# fit


def test_fit_writes_all_outputs(data_dir, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(fit_args(data_dir, out)) == 0
    for name in ("report.txt", "report.json", "covariance.txt", "hist_x1.txt",
                 "hist_x2.txt", "hist_x3.txt", "report_plugin.txt",
                 "checkpoint.json", "summary.txt"):
        assert (out / name).exists(), name
    data = json.loads((out / "report.json").read_text())
    assert data["names"] == ["x1", "x2", "x3"]
    assert data["n_used"] == 900
    assert data["method"] == "RW"
    point = np.asarray(data["point"])
    np.testing.assert_allclose(point, [0.5, -0.5, 0.0], atol=0.2)
    assert np.all(np.asarray(data["se"]) > 0.0)
    summary = (out / "summary.txt").read_text()
    assert "rows_read = 1000" in summary
    assert "rows_skipped = 0" in summary
    stdout = capsys.readouterr().out
    assert "estimate" in stdout and "x1" in stdout


def test_fit_degenerate_weights_collapse_intervals(data_dir, tmp_path):
    out = tmp_path / "run"
    assert main(fit_args(data_dir, out, weights="degenerate")) == 0
    data = json.loads((out / "report.json").read_text())
    assert data["se"] == [0.0, 0.0, 0.0]
    assert data["ci_lower"] == data["point"] == data["ci_upper"]


# ---------------------------------------------------------------------------
# resume


def test_resume_matches_one_shot_fit_bitwise(data_dir, tmp_path):
    conf = str(data_dir / "ingest.conf")
    full, head, resumed = (tmp_path / d for d in ("full", "head", "resumed"))

    # burn-in deliberately crosses the split point (600 < 700 < 1000)
    assert main(fit_args(data_dir, full, **{"burn_in": "700"})) == 0
    argv = fit_args(data_dir, head, **{"burn_in": "700"})
    argv[argv.index("--input") + 1] = str(data_dir / "head.csv")
    assert main(argv) == 0
    assert main(["resume", "--checkpoint", str(head / "checkpoint.json"),
                 "--input", str(data_dir / "tail.csv"),
                 "--config", conf, "--out", str(resumed)]) == 0

    one_shot = json.loads((full / "report.json").read_text())
    stitched = json.loads((resumed / "report.json").read_text())
    assert one_shot == stitched
    assert (full / "checkpoint.json").read_bytes() == \
        (resumed / "checkpoint.json").read_bytes()


def test_resume_dimension_mismatch(data_dir, tmp_path, capsys):
    run = tmp_path / "run"
    assert main(fit_args(data_dir, run)) == 0
    narrow = tmp_path / "narrow.conf"
    narrow.write_text("response = y\ncovariate = x1\ncovariate = x2\n")
    rc = main(["resume", "--checkpoint", str(run / "checkpoint.json"),
               "--input", str(data_dir / "tail.csv"),
               "--config", str(narrow), "--out", str(tmp_path / "res")])
    assert rc == 2
    assert "dimension" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# simulate


SCENARIOS = """\
model = least_squares
n = 300
p = 3
q = 2
mu = 0.5
replicates = 8
burn_in = 30
repetitions = 3
gamma = 0.2
seed = 11
label = cli_ls

model = quantile
n = 300
p = 3
q = 2
mu = 0.4
replicates = 8
burn_in = 30
repetitions = 2
gamma = 0.3
seed = 12
label = cli_lad
"""


def test_simulate_command(tmp_path, capsys):
    scen = tmp_path / "cells.conf"
    scen.write_text(SCENARIOS)
    out = tmp_path / "sim"
    rc = main(["simulate", "--scenarios", str(scen), "--out", str(out),
               "--export-data"])
    assert rc == 0
    for name in ("cli_ls_coverage.txt", "cli_ls.json", "cli_ls.csv",
                 "cli_lad_coverage.txt", "cli_lad.json", "cli_lad.csv",
                 "cells.json"):
        assert (out / name).exists(), name
    index = json.loads((out / "cells.json").read_text())
    assert [c["cell"] for c in index] == ["cli_ls", "cli_lad"]
    lad_table = (out / "cli_lad_coverage.txt").read_text()
    assert "plugin_coverage\t-\t-\t-" in lad_table
    assert "plugin_se\t-\t-\t-" in lad_table
    ls_table = (out / "cli_ls_coverage.txt").read_text()
    assert ls_table.startswith("dim\t1\t2\t3")
    assert len((out / "cli_ls.csv").read_text().strip().split("\n")) == 301
    assert "== cli_ls" in capsys.readouterr().out


def test_simulate_unknown_scenario_key(tmp_path, capsys):
    scen = tmp_path / "bad.conf"
    scen.write_text("model = least_squares\nn = 10\np = 2\nq = 2\nmu = 0\nzap = 1\n")
    rc = main(["simulate", "--scenarios", str(scen), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "zap" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# report


def test_report_renders_figures(data_dir, tmp_path, capsys):
    run = tmp_path / "run"
    assert main(fit_args(data_dir, run)) == 0
    figs = tmp_path / "figs"
    rc = main(["report", "--run", str(run), "--out", str(figs)])
    assert rc == 0
    for name in ("hist_x1.png", "hist_x2.png", "hist_x3.png", "report.txt"):
        assert (figs / name).exists(), name
    assert "3 figure(s)" in capsys.readouterr().out
    # default output location is the run directory itself
    assert main(["report", "--run", str(run)]) == 0
    assert (run / "hist_x2.png").exists()


def test_report_without_report_json(tmp_path, capsys):
    rc = main(["report", "--run", str(tmp_path)])
    assert rc == 2
    assert "report.json" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# exit codes


def test_bad_gamma_is_a_config_error(data_dir, tmp_path, capsys):
    rc = main(fit_args(data_dir, tmp_path / "o", gamma="-1.0"))
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_wrong_labels_are_a_data_error(data_dir, tmp_path, capsys):
    rc = main(fit_args(data_dir, tmp_path / "o", model="logistic"))
    assert rc == 3
    assert "error:" in capsys.readouterr().err


def test_missing_input_file_is_a_data_error(data_dir, tmp_path, capsys):
    argv = fit_args(data_dir, tmp_path / "o")
    argv[argv.index("--input") + 1] = str(tmp_path / "nope.csv")
    assert main(argv) == 3
    assert "error:" in capsys.readouterr().err


def test_unknown_ingestion_key_is_a_config_error(data_dir, tmp_path, capsys):
    conf = tmp_path / "bad.conf"
    conf.write_text("response = y\ncovariate = x1\nfrobnicate = 1\n")
    argv = fit_args(data_dir, tmp_path / "o")
    argv[argv.index("--config") + 1] = str(conf)
    assert main(argv) == 2
    assert "frobnicate" in capsys.readouterr().err


def test_all_rows_skipped_is_a_data_error(tmp_path, capsys):
    csv = tmp_path / "empty.csv"
    csv.write_text("y,x1,x2,x3\nNA,1,2,3\nNA,4,5,6\n")
    conf = tmp_path / "ingest.conf"
    conf.write_text(INGEST_CONF)
    rc = main(["fit", "--input", str(csv), "--config", str(conf),
               "--out", str(tmp_path / "o")])
    assert rc == 3


def test_divergence_is_a_numerical_error(data_dir, tmp_path, capsys):
    out = tmp_path / "o"
    rc = main(fit_args(data_dir, out, gamma="10000.0"))
    assert rc == 4
    assert "step" in capsys.readouterr().err
    assert not out.exists()  # breaker fired before any output was written


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sgdinfer.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "fit" in proc.stdout and "simulate" in proc.stdout
