import json
import os
import subprocess
import sys

import numpy as np
import pytest

from nltiso.cli import main, read_adjacency, read_trace
from nltiso.estimator import Hyperparams, run_online
from nltiso.ingest import load_csv
from nltiso.kernel import KernelSpec
from nltiso.metrics import support_metrics, time_averaged_ise
from nltiso.timeseries import SeriesMatrix

SMALL = ["--samples", "300", "--burn-in", "100"]


def _run(*argv):
    return main([str(a) for a in argv])


def _files(d):
    return {name: open(os.path.join(d, name), "rb").read() for name in sorted(os.listdir(d))}


def test_stationary_experiment_outputs(tmp_path):
    out = tmp_path / "st"
    assert _run("experiment", "stationary", *SMALL, "--out-dir", out) == 0
    for method in ("nltiso", "tirso"):
        adj, ids = read_adjacency(out / f"adjacency_{method}.csv")
        assert adj.shape == (5, 5, 2) and ids == [f"y{i}" for i in range(5)]
        with open(out / f"adjacency_{method}.csv") as fh:
            lines = [l for l in fh if not l.startswith("#")]
        assert len(lines) == 1 + 10 and len(lines[1].split(",")) == 2 + 5
        norm, _ = read_adjacency(out / f"adjacency_{method}_normalized.csv")
        assert norm.max() == 1.0
    metrics = json.loads((out / "metrics.json").read_text())
    assert set(metrics["metrics"]) == {"nltiso", "tirso"}
    assert metrics["config"]["estimation"]["lam"] == 0.1


def test_timevarying_experiment_outputs(tmp_path):
    out = tmp_path / "tv"
    assert _run("experiment", "timevarying", *SMALL, "--out-dir", out) == 0
    for method in ("nltiso", "tirso"):
        trace = read_trace(out / f"ise_{method}.csv")
        assert trace.shape == (5, 298) and np.all(np.isfinite(trace))
    assert (out / "truth_snapshots.csv").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["estimation"]["lam"] == 1e-6
    assert summary["config"]["estimation"]["kernel_var"] == 0.02


def test_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _run("experiment", "stationary", *SMALL, "--seed", 7, "--out-dir", a)
    _run("experiment", "stationary", *SMALL, "--seed", 7, "--out-dir", b)
    assert _files(a) == _files(b)


def test_header_echoes_config(tmp_path):
    _run("experiment", "stationary", *SMALL, "--seed", 3, "--lambda", 0.25, "--out-dir", tmp_path)
    first = (tmp_path / "ise_nltiso.csv").read_text().splitlines()[0]
    assert first.startswith("# nltiso {")
    config = json.loads(first[len("# nltiso "):])
    assert config["seed"] == 3 and config["estimation"]["lam"] == 0.25


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# settings\nlambda = 0.5\ngamma = 3\nsamples = 200\n")
    _run("experiment", "stationary", "--config", cfg, "--gamma", 2, "--burn-in", 50,
         "--out-dir", tmp_path / "o")
    est = json.loads((tmp_path / "o" / "metrics.json").read_text())["config"]["estimation"]
    assert est["lam"] == 0.5 and est["gamma"] == 2.0
    cfg.write_text("bogus = 1\n")
    assert _run("experiment", "stationary", "--config", cfg, "--out-dir", tmp_path / "p") == 1


def test_generate_then_estimate_matches_library(tmp_path):
    gen = tmp_path / "gen"
    assert _run("generate", "stationary", "--samples", 250, "--seed", 2, "--out-dir", gen) == 0
    est = tmp_path / "est"
    assert _run("estimate", gen / "series.csv", "--time-column", "t", "--no-standardize",
                "--lambda", 0.1, "--kernel-var", 0.1, "--out-dir", est) == 0
    table = load_csv(str(gen / "series.csv"), time_column="t")
    series = SeriesMatrix(table.values.T)
    ref = run_online(series, KernelSpec(0.1), Hyperparams(lam=0.1))
    adj, _ = read_adjacency(est / "adjacency_final.csv")
    assert np.array_equal(adj, ref.final_adjacency)
    preds = load_csv(str(est / "predictions.csv"), time_column="t").values.T
    assert np.array_equal(preds, ref.predictions[:, ref.start:])


def test_estimate_many_columns(tmp_path, rng):
    values = rng.normal(size=(120, 24))
    header = ",".join(f"s{j} [kPa]" for j in range(24))
    body = "\n".join(",".join(f"{v:.17g}" for v in row) for row in values)
    path = tmp_path / "plant.csv"
    path.write_text(header + "\n" + body + "\n")
    assert _run("estimate", path, "--window", 50, "--out-dir", tmp_path / "o") == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["adjacency_shape"] == [24, 24, 2]
    adj, ids = read_adjacency(tmp_path / "o" / "adjacency.csv")
    assert adj.shape == (24, 24, 2) and ids[0] == "s0"


def test_estimate_tirso_with_resampling(tmp_path):
    t = np.cumsum(np.full(80, 2.0))
    rows = "\n".join(f"{ti},{np.sin(ti / 7)},{np.cos(ti / 5)}" for ti in t)
    path = tmp_path / "x.csv"
    path.write_text("time,a,b\n" + rows + "\n")
    assert _run("estimate", path, "--method", "tirso", "--time-column", "time", "--period", 4,
                "--out-dir", tmp_path / "o") == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["n_samples"] == 40


def test_malformed_csv_fails(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n3,oops\n")
    assert _run("estimate", path, "--out-dir", tmp_path / "o") == 1
    err = capsys.readouterr().err
    assert "nltiso estimate: error" in err and "line 3" in err


def test_evaluate_self_is_perfect(tmp_path, capsys):
    _run("generate", "stationary", "--samples", 50, "--edge-prob", 0.4, "--out-dir", tmp_path)
    capsys.readouterr()
    truth = tmp_path / "truth_adjacency.csv"
    assert _run("evaluate", "--estimate", truth, "--truth", truth) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["support"]["precision"] == 1.0 and report["support"]["recall"] == 1.0


def test_evaluate_matches_library(tmp_path, capsys):
    out = tmp_path / "e"
    _run("experiment", "stationary", *SMALL, "--edge-prob", 0.3, "--out-dir", out)
    capsys.readouterr()
    assert _run("evaluate", "--estimate", out / "adjacency_nltiso.csv",
                "--truth", out / "truth_adjacency.csv", "--ise", out / "ise_nltiso.csv",
                "--burn-in", 98) == 0
    report = json.loads(capsys.readouterr().out)
    est, _ = read_adjacency(out / "adjacency_nltiso.csv")
    truth, _ = read_adjacency(out / "truth_adjacency.csv")
    ref = support_metrics(est, truth > 0)
    assert report["support"]["precision"] == ref.precision
    assert report["support"]["edge_ratio"] == ref.edge_ratio
    metrics = json.loads((out / "metrics.json").read_text())["metrics"]["nltiso"]
    # the ISE file starts at t = P, so burn-in 98 there is t = 100
    assert report["time_averaged_ise"] == pytest.approx(metrics["time_averaged_ise"], rel=1e-12)
    assert metrics["support"]["precision"] == ref.precision


def test_evaluate_shape_mismatch(tmp_path, capsys):
    _run("generate", "stationary", "--samples", 50, "--nodes", 3, "--out-dir", tmp_path / "a")
    _run("generate", "stationary", "--samples", 50, "--nodes", 4, "--out-dir", tmp_path / "b")
    assert _run("evaluate", "--estimate", tmp_path / "a" / "truth_adjacency.csv",
                "--truth", tmp_path / "b" / "truth_adjacency.csv") == 1
    assert "shape" in capsys.readouterr().err


def test_burn_in_too_large(tmp_path, capsys):
    assert _run("experiment", "stationary", "--samples", 300, "--out-dir", tmp_path) == 1
    assert "burn-in" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "nltiso", "generate", "timevarying",
                           "--samples", "40", "--out-dir", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert {"series.csv", "truth_adjacency.csv", "truth.json", "truth_snapshots.csv"} <= set(
        os.listdir(tmp_path))
    proc = subprocess.run([sys.executable, "-m", "nltiso", "--version"], capture_output=True, text=True)
    assert proc.stdout.strip().startswith("nltiso")
