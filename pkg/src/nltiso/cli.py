"""Command-line entry point.

Subcommands::

    nltiso generate   {stationary,timevarying}   synthetic data + ground truth
    nltiso experiment {stationary,timevarying}   generate, run NL-TISO and TIRSO, score
    nltiso estimate   INPUT.csv                  run one method on a sensor CSV
    nltiso evaluate   --estimate A --truth B     support metrics (+ ISE) as JSON

Settings are resolved as built-in defaults < ``--config`` file < flags.
The config file holds ``key = value`` lines named after the long flags.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import replace
from typing import Optional

import numpy as np

from . import __version__
from .baselines import run_tirso
from .estimator import Hyperparams, run_online
from .ingest import (IngestError, format_float, load_csv, resample_uniform, standardize,
                     table_from_series, write_csv)
from .kernel import KernelSpec
from .metrics import (AdjacencyEstimate, normalize_adjacency, stack_lags, support_metrics,
                      time_averaged_ise, unstack_lags)
from .synthgen import GenConfig, gen_stationary, gen_timevarying
from .timeseries import SeriesMatrix

# per-experiment estimation defaults
EXPERIMENT_DEFAULTS = {
    "stationary": {"lam": 0.1, "gamma": 10.0, "kernel_var": 0.1},
    "timevarying": {"lam": 1e-6, "gamma": 10.0, "kernel_var": 0.02},
}
BASE_DEFAULTS = {
    "seed": 0, "lam": 0.1, "gamma": 10.0, "kernel_var": 0.1, "window": 2000, "order": 2,
    "method": "nltiso", "threads": 1, "out_dir": "out", "snapshot_every": 100,
    "step_bound": 0.5, "burn_in": 500, "average_last": 720,
}


class CLIError(Exception):
    pass


def _optional_int(text):
    if text is None or str(text).strip().lower() in ("none", "inf", "0", ""):
        return None
    return int(text)


def _optional_float(text):
    if text is None or str(text).strip().lower() in ("none", ""):
        return None
    return float(text)


# key -> converter for settings read from config files
CONVERTERS = {
    "seed": int, "lam": float, "lambda": float, "gamma": float, "kernel_var": float,
    "window": _optional_int, "order": int, "method": str, "threads": int, "out_dir": str,
    "snapshot_every": _optional_int, "step_bound": _optional_float, "burn_in": int,
    "average_last": _optional_int, "nodes": int, "samples": int, "edge_prob": float,
    "noise_var": float, "centers": int, "init_var": float, "time_column": str,
    "time_format": str, "period": _optional_float,
}


def read_config(path) -> dict:
    out = {}
    try:
        fh = open(path)
    except OSError as e:
        raise CLIError(f"cannot read config {path}: {e}") from None
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CLIError(f"{path}, line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            if key not in CONVERTERS:
                raise CLIError(f"{path}, line {lineno}: unknown key {key!r}")
            try:
                out["lam" if key == "lambda" else key] = CONVERTERS[key](value)
            except ValueError:
                raise CLIError(f"{path}, line {lineno}: bad value {value!r} for {key}") from None
    return out


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value settings file; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--lambda", dest="lam", type=float, help="group-lasso weight")
    p.add_argument("--gamma", type=float, help="step size")
    p.add_argument("--kernel-var", dest="kernel_var", type=float, help="Gaussian kernel variance")
    p.add_argument("--window", type=_optional_int, help="retained centers T_w (0/none = unbounded)")
    p.add_argument("--order", type=int, help="lag order P")
    p.add_argument("--step-bound", dest="step_bound", type=_optional_float,
                   help="cap the step at STEP_BOUND/||kappa||^2 ('none' disables)")
    p.add_argument("--threads", type=int, help="worker threads for per-node updates")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--snapshot-every", dest="snapshot_every", type=_optional_int,
                   help="adjacency snapshot cadence in steps (0 disables)")


def _add_generator(p: argparse.ArgumentParser) -> None:
    p.add_argument("--nodes", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--edge-prob", dest="edge_prob", type=float)
    p.add_argument("--noise-var", dest="noise_var", type=float)
    p.add_argument("--init-var", dest="init_var", type=float)
    p.add_argument("--centers", type=int, help="kernel centers per edge (stationary data)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nltiso", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write synthetic series and ground truth")
    g.add_argument("kind", choices=("stationary", "timevarying"))
    _add_common(g)
    _add_generator(g)

    e = sub.add_parser("experiment", help="reproduce a synthetic experiment end to end")
    e.add_argument("name", choices=("stationary", "timevarying"))
    _add_common(e)
    _add_generator(e)
    e.add_argument("--burn-in", dest="burn_in", type=int)

    s = sub.add_parser("estimate", help="estimate causal dependencies from a CSV")
    s.add_argument("input")
    _add_common(s)
    s.add_argument("--method", choices=("nltiso", "tirso"))
    s.add_argument("--time-column", dest="time_column")
    s.add_argument("--time-format", dest="time_format", choices=("epoch", "iso"))
    s.add_argument("--period", type=_optional_float, help="resample to this period (seconds)")
    s.add_argument("--no-standardize", dest="standardize", action="store_false")
    s.add_argument("--average-last", dest="average_last", type=_optional_int,
                   help="average the adjacency over the last K steps")
    s.add_argument("--burn-in", dest="burn_in", type=int)

    v = sub.add_parser("evaluate", help="score an adjacency estimate against a truth file")
    v.add_argument("--estimate", required=True)
    v.add_argument("--truth", required=True)
    v.add_argument("--threshold", type=float, default=0.0,
                   help="truth entries with |value| > THRESHOLD count as edges")
    v.add_argument("--k", type=int, help="top-k cut (default: number of true edges)")
    v.add_argument("--ise", help="ISE trace CSV to summarize")
    v.add_argument("--burn-in", dest="burn_in", type=int, default=0)
    v.add_argument("--out", help="also write the report to this JSON file")
    return parser


def resolve(args: argparse.Namespace, defaults: dict) -> dict:
    settings = dict(BASE_DEFAULTS)
    settings.update(defaults)
    if getattr(args, "config", None):
        settings.update(read_config(args.config))
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        settings[key] = value
    return settings


# ---------------------------------------------------------------- writers

def _comment(config: dict) -> str:
    return "nltiso " + json.dumps(config, sort_keys=True)


def write_rows(path, header, rows, config: dict) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {_comment(config)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else
                        (str(c) if isinstance(c, (int, np.integer)) else format_float(c))
                        for c in row])


def write_adjacency(path, values: np.ndarray, node_ids, config: dict) -> None:
    """Lag blocks stacked vertically: rows (lag, target), columns source nodes."""
    n, _, p = values.shape
    stacked = stack_lags(values)
    rows = [[lag + 1, node_ids[i]] + list(stacked[lag * n + i])
            for lag in range(p) for i in range(n)]
    write_rows(path, ["lag", "target"] + list(node_ids), rows, config)


def read_adjacency(path):
    """Inverse of :func:`write_adjacency`: returns (N x N x P array, node ids)."""
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    except OSError as e:
        raise CLIError(f"cannot read {path}: {e}") from None
    if not rows or rows[0][:2] != ["lag", "target"]:
        raise CLIError(f"{path}: not an adjacency file (expected 'lag,target,...' header)")
    node_ids = rows[0][2:]
    try:
        matrix = np.array([[float(c) for c in r[2:]] for r in rows[1:]])
    except ValueError as e:
        raise CLIError(f"{path}: {e}") from None
    if matrix.ndim != 2 or matrix.shape[1] != len(node_ids) or matrix.shape[0] % len(node_ids):
        raise CLIError(f"{path}: adjacency rows do not match {len(node_ids)} nodes")
    return unstack_lags(matrix), node_ids


def write_trace(path, trace: np.ndarray, start: int, node_ids, config: dict) -> None:
    rows = [[t] + list(trace[:, t]) for t in range(start, trace.shape[1])]
    write_rows(path, ["t"] + list(node_ids), rows, config)


def read_trace(path) -> np.ndarray:
    table = load_csv(path, time_column="t")
    return table.values.T


def write_snapshots(path, snapshots: dict, node_ids, config: dict) -> None:
    rows = []
    for t in sorted(snapshots):
        snap = snapshots[t]
        n, _, p = snap.shape
        for i in range(n):
            for j in range(n):
                for lag in range(p):
                    rows.append([t, node_ids[i], node_ids[j], lag + 1, snap[i, j, lag]])
    write_rows(path, ["t", "target", "source", "lag", "value"], rows, config)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- commands

def _hyperparams(s: dict) -> Hyperparams:
    return Hyperparams(lam=s["lam"], gamma=s["gamma"], order=s["order"], window=s["window"],
                       step_bound=s["step_bound"])


def _gen_config(s: dict) -> GenConfig:
    cfg = GenConfig(seed=s["seed"], order=s["order"])
    mapping = {"nodes": "n_nodes", "samples": "n_samples", "edge_prob": "edge_prob",
               "noise_var": "noise_var", "init_var": "init_var", "centers": "n_centers"}
    return replace(cfg, **{v: s[k] for k, v in mapping.items() if s.get(k) is not None})


def _effective(s: dict, keys) -> dict:
    """Settings echoed into artifacts; execution-only knobs are left out."""
    return {k: s[k] for k in keys if k in s}


def _prepare_out(path) -> None:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise CLIError(f"cannot create output directory {path}: {e}") from None
    if not os.access(path, os.W_OK):
        raise CLIError(f"output directory {path} is not writable")


def _generate(kind: str, cfg: GenConfig):
    if kind == "stationary":
        series, truth = gen_stationary(cfg)
        return series, truth, np.abs(truth.adjacency), None
    series, trajectory, truth = gen_timevarying(cfg)
    return series, truth, np.abs(trajectory[-1]), trajectory


def cmd_generate(args) -> int:
    s = resolve(args, {})
    cfg = _gen_config(s)
    out = s["out_dir"]
    _prepare_out(out)
    series, truth, final_adj, trajectory = _generate(args.kind, cfg)
    config = {"command": "generate", "kind": args.kind, "generator": cfg.to_dict(),
              "seed": cfg.seed}
    write_csv(table_from_series(series, np.arange(series.n_samples)), os.path.join(out, "series.csv"),
              time_column="t", comment=_comment(config))
    write_adjacency(os.path.join(out, "truth_adjacency.csv"), final_adj, series.node_ids, config)
    payload = {"config": config, "adjacency": truth.adjacency, "edge_mask": truth.edge_mask,
               "centers": truth.centers, "beta": truth.beta}
    if trajectory is not None and s["snapshot_every"]:
        snaps = {t: trajectory[t] for t in range(0, series.n_samples, s["snapshot_every"])}
        snaps[series.n_samples - 1] = trajectory[-1]
        write_snapshots(os.path.join(out, "truth_snapshots.csv"), snaps, series.node_ids, config)
    write_json(os.path.join(out, "truth.json"), payload)
    return 0


def _run_method(method: str, series, s: dict, average_last=None):
    h = _hyperparams(s)
    if method == "nltiso":
        return run_online(series, KernelSpec(s["kernel_var"]), h,
                          snapshot_every=s["snapshot_every"], threads=s["threads"],
                          average_last=average_last)
    if method == "tirso":
        return run_tirso(series, h, snapshot_every=s["snapshot_every"], average_last=average_last)
    raise CLIError(f"unknown method {method!r}")


def cmd_experiment(args) -> int:
    s = resolve(args, EXPERIMENT_DEFAULTS[args.name])
    cfg = _gen_config(s)
    out = s["out_dir"]
    _prepare_out(out)
    series, truth, true_adj, trajectory = _generate(args.name, cfg)
    ids = series.node_ids
    config = {"command": "experiment", "experiment": args.name, "generator": cfg.to_dict(),
              "estimation": _effective(s, ("lam", "gamma", "kernel_var", "window", "order",
                                           "step_bound", "snapshot_every", "burn_in")),
              "seed": cfg.seed}
    write_csv(table_from_series(series, np.arange(series.n_samples)), os.path.join(out, "series.csv"),
              time_column="t", comment=_comment(config))
    write_adjacency(os.path.join(out, "truth_adjacency.csv"), true_adj, ids, config)
    write_adjacency(os.path.join(out, "truth_adjacency_normalized.csv"),
                    normalize_adjacency(AdjacencyEstimate(true_adj)).values, ids, config)
    if trajectory is not None and s["snapshot_every"]:
        snaps = {t: np.abs(trajectory[t]) for t in range(0, series.n_samples, s["snapshot_every"])}
        snaps[series.n_samples - 1] = np.abs(trajectory[-1])
        write_snapshots(os.path.join(out, "truth_snapshots.csv"), snaps, ids, config)

    burn_in = s["burn_in"]
    if not burn_in < series.n_samples:
        raise CLIError(f"burn-in {burn_in} leaves no samples out of {series.n_samples}")
    metrics = {}
    for method in ("nltiso", "tirso"):
        result = _run_method(method, series, s)
        adj = AdjacencyEstimate(result.final_adjacency, series.n_samples)
        write_adjacency(os.path.join(out, f"adjacency_{method}.csv"), adj.values, ids, config)
        write_adjacency(os.path.join(out, f"adjacency_{method}_normalized.csv"),
                        normalize_adjacency(adj).values, ids, config)
        write_trace(os.path.join(out, f"ise_{method}.csv"), result.ise, result.start, ids, config)
        write_trace(os.path.join(out, f"predictions_{method}.csv"), result.predictions,
                    result.start, ids, config)
        if result.snapshots:
            write_snapshots(os.path.join(out, f"snapshots_{method}.csv"), result.snapshots, ids,
                            config)
        support = support_metrics(adj, truth.edge_mask if args.name == "stationary"
                                  else true_adj > 0)
        avg = time_averaged_ise(result.ise, burn_in)
        metrics[method] = {"support": support.to_dict(),
                           "time_averaged_ise": dict(zip(ids, avg)),
                           "mean_time_averaged_ise": float(np.mean(avg))}
    variance = series.values.var(axis=1, ddof=1)
    summary = {"config": config, "metrics": metrics,
               "sample_variance": dict(zip(ids, variance)),
               "true_cross_edges": truth.cross_edge_count()}
    write_json(os.path.join(out, "metrics.json"), {"config": config, "metrics": metrics})
    write_json(os.path.join(out, "summary.json"), summary)
    return 0


def cmd_estimate(args) -> int:
    s = resolve(args, {})
    out = s["out_dir"]
    table = load_csv(args.input, time_column=s.get("time_column"),
                     time_format=s.get("time_format") or "epoch")
    if s.get("period"):
        table = resample_uniform(table, s["period"])
    if s.get("standardize", True):
        series = standardize(table)
    else:
        series = SeriesMatrix(table.values.T, tuple(table.labels))
    _prepare_out(out)
    ids = series.node_ids
    config = {"command": "estimate", "input": args.input, "method": s["method"],
              "standardize": s.get("standardize", True), "period": s.get("period"),
              "time_column": s.get("time_column"),
              "estimation": _effective(s, ("lam", "gamma", "kernel_var", "window", "order",
                                           "step_bound", "snapshot_every", "average_last",
                                           "burn_in")),
              "seed": s["seed"]}
    result = _run_method(s["method"], series, s, average_last=s["average_last"])
    write_trace(os.path.join(out, "predictions.csv"), result.predictions, result.start, ids, config)
    write_trace(os.path.join(out, "ise.csv"), result.ise, result.start, ids, config)
    write_adjacency(os.path.join(out, "adjacency_final.csv"), result.final_adjacency, ids, config)
    averaged = result.mean_adjacency if result.mean_adjacency is not None else result.final_adjacency
    write_adjacency(os.path.join(out, "adjacency.csv"), averaged, ids, config)
    if result.snapshots:
        write_snapshots(os.path.join(out, "snapshots.csv"), result.snapshots, ids, config)
    burn_in = min(s["burn_in"], series.n_samples - 1)
    avg = time_averaged_ise(result.ise, burn_in)
    write_json(os.path.join(out, "summary.json"),
               {"config": config, "n_nodes": series.n_nodes, "n_samples": series.n_samples,
                "adjacency_shape": list(averaged.shape),
                "time_averaged_ise": dict(zip(ids, avg))})
    return 0


def cmd_evaluate(args) -> int:
    est, est_ids = read_adjacency(args.estimate)
    truth, truth_ids = read_adjacency(args.truth)
    if est.shape != truth.shape:
        raise CLIError(f"estimate has shape {est.shape} but truth has shape {truth.shape}")
    mask = np.abs(truth) > args.threshold
    try:
        support = support_metrics(np.abs(est), mask, args.k)
    except IndexError as e:
        raise CLIError(str(e)) from None
    report = {"estimate": args.estimate, "truth": args.truth, "threshold": args.threshold,
              "support": support.to_dict()}
    if args.ise:
        trace = read_trace(args.ise)
        report["time_averaged_ise"] = dict(zip(est_ids, time_averaged_ise(trace, args.burn_in)))
        report["burn_in"] = args.burn_in
    text = json.dumps(_jsonable(report), indent=2, sort_keys=True)
    print(text)
    if args.out:
        write_json(args.out, report)
    return 0


COMMANDS = {"generate": cmd_generate, "experiment": cmd_experiment, "estimate": cmd_estimate,
            "evaluate": cmd_evaluate}


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (CLIError, IngestError, ValueError, IndexError, OSError, FloatingPointError) as e:
        print(f"nltiso {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
