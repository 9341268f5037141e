"""Command-line entry point: simulate, estimate, forecast, benchmark.

Every artifact directory gets a manifest (config, config hash, seed,
package version) sufficient to re-run the command bit-identically.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .admm import SolveOptions
from .errors import TuningError
from .estimator import LoadingEstimate, default_lambda_grid, estimate_loadings, tune_lambdas
from .forecast import rolling_forecast
from .panel import (
    GroupStructure,
    TimeSeriesPanel,
    adjust_outliers,
    apply_transforms,
    load_groups,
    load_panel,
    load_transform_codes,
    save_groups,
    save_panel,
)
from .penalty import PenaltyConfig
from .simulation import (
    SimulationConfig,
    gen_panel,
    gen_truth,
    record_rows,
    run_benchmark,
    summary_rows,
    _rep_rng,
)
from .spectral import spectral_basis


def _default_threads() -> int:
    env = os.environ.get("SGF_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _write_matrix_csv(path: Path, matrix: np.ndarray, header: list[str]) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in np.atleast_2d(matrix):
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def _write_rows_csv(path: Path, rows: list[dict]) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        if not rows:
            return
        cols = list(rows[0].keys())
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(_cell(row[c]) for c in cols) + "\n")


def _cell(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_json(path: Path, doc) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _manifest(out: Path, command: str, config: dict, seed: int) -> dict:
    doc = {
        "command": command,
        "config": config,
        "config_hash": _config_hash(config),
        "seed": seed,
        "version": __version__,
    }
    _write_json(out / "manifest.json", doc)
    return doc


def save_estimate(est: LoadingEstimate, out_dir: str | Path, config: dict | None = None,
                  seed: int = 0) -> dict:
    """Persist a loading estimate: Q-hat CSV, supports JSON, diagnostics JSON,
    and a manifest keyed by the configuration hash."""
    if est.r < 1:
        raise ValueError("cannot save an estimate with no factors")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_matrix_csv(out / "qhat.csv", est.Q_hat, [f"q{i + 1}" for i in range(est.r)])
    _write_json(
        out / "supports.json",
        {
            "supports": [[j + 1 for j in s] for s in est.supports],
            "group_supports": [[k + 1 for k in s] for s in est.group_supports],
            "lambda1": est.lambdas[0],
            "lambda2": est.lambdas[1],
        },
    )
    _write_json(
        out / "diagnostics.json",
        [
            {
                "converged": r.converged,
                "iterations": r.iterations,
                "final_residual": r.final_residual,
                "objective": r.objective,
                "degenerate": r.degenerate,
                "warnings": list(r.warnings),
            }
            for r in est.reports
        ],
    )
    return _manifest(out, "estimate", config or {}, seed)


def _load_inputs(args) -> tuple[TimeSeriesPanel, GroupStructure]:
    panel = load_panel(args.data, has_header=not args.no_header)
    if getattr(args, "transforms", None):
        panel = apply_transforms(panel, load_transform_codes(args.transforms))
    if getattr(args, "adjust_outliers", False):
        panel = adjust_outliers(panel)
    groups = load_groups(args.groups, r=args.r)
    return panel, groups


def _cmd_simulate(args) -> int:
    cfg = SimulationConfig(
        p=args.p, n=args.n, example=args.example, reps=args.reps, seed=args.seed,
        ar_coef=args.ar_coef, loading_bound=args.loading_bound,
        loading_bound_mode=args.loading_bound_mode,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for rep in range(cfg.reps):
        rng = _rep_rng(cfg.seed, rep)
        truth = gen_truth(cfg, rng)
        panelobj = gen_panel(truth, cfg, rng)
        save_panel(panelobj, out / f"panel_{rep:03d}.csv")
        _write_matrix_csv(
            out / f"loadings_{rep:03d}.csv", truth.A_s,
            [f"a{i + 1}" for i in range(truth.A_s.shape[1])],
        )
        if rep == 0:
            save_groups(truth.groups, out / "groups.json")
    _manifest(out, "simulate", _public_config(cfg), cfg.seed)
    return 0


def _public_config(cfg: SimulationConfig) -> dict:
    return {
        "p": cfg.p, "n": cfg.n, "r": cfg.r, "example": cfg.example,
        "reps": cfg.reps, "seed": cfg.seed, "ar_coef": cfg.ar_coef,
        "noise_diag": cfg.noise_diag, "noise_offdiag": cfg.noise_offdiag,
        "loading_bound": cfg.loading_bound,
        "loading_bound_mode": cfg.loading_bound_mode,
        "burn_in": cfg.burn_in, "h0": cfg.h0,
    }


def _parse_lambda(text: str) -> float | None:
    if text == "auto":
        return None
    return float(text)


def _cmd_estimate(args) -> int:
    panel, groups = _load_inputs(args)
    basis = spectral_basis(panel, args.r, h0=args.h0)
    cfg = PenaltyConfig()
    opts = SolveOptions(restart_seed=args.seed)
    lam1 = _parse_lambda(args.lambda1)
    lam2 = _parse_lambda(args.lambda2)
    if lam1 is not None and lam2 is not None:
        est = estimate_loadings(
            basis, groups, replace(cfg, lambda1=lam1, lambda2=lam2), opts
        )
        chosen = (lam1, lam2)
    else:
        default = list(default_lambda_grid(basis, cfg, count=args.grid_size))
        grid1 = default if lam1 is None else [lam1]
        grid2 = default if lam2 is None else [lam2]
        result = tune_lambdas(basis, panel, groups, grid1, grid2, cfg, opts)
        est = result.estimate
        chosen = (result.lambda1, result.lambda2)
    config = {
        "data": str(args.data), "groups": str(args.groups), "r": args.r,
        "h0": args.h0, "lambda1": chosen[0], "lambda2": chosen[1],
        "grid_size": args.grid_size, "transforms": args.transforms or "",
        "adjust_outliers": bool(args.adjust_outliers),
    }
    save_estimate(est, args.out, config=config, seed=args.seed)
    print(f"estimate written to {args.out} (lambda1={chosen[0]:g}, lambda2={chosen[1]:g})")
    return 0


def _cmd_forecast(args) -> int:
    panel, groups = _load_inputs(args)
    result = rolling_forecast(
        panel, groups, args.r, args.window,
        method=args.method, h0=args.h0,
        opts=SolveOptions(restart_seed=args.seed),
        grid_size=args.grid_size,
        adjust_outliers_for_fit=bool(args.adjust_outliers),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_matrix_csv(out / "predictions.csv", result.predictions, list(panel.series_ids))
    _write_json(
        out / "errors.json",
        {
            "per_series": {
                sid: {"rmse": float(result.errors.rmse[j]), "mae": float(result.errors.mae[j])}
                for j, sid in enumerate(panel.series_ids)
            },
            "rmse_average": result.errors.rmse_average,
            "rmse_median": result.errors.rmse_median,
            "mae_average": result.errors.mae_average,
            "mae_median": result.errors.mae_median,
            "method": result.method,
            "lambda1": result.lambda1,
            "lambda2": result.lambda2,
        },
    )
    config = {
        "data": str(args.data), "groups": str(args.groups), "r": args.r,
        "window": args.window, "h0": args.h0, "method": args.method,
        "grid_size": args.grid_size, "transforms": args.transforms or "",
        "adjust_outliers": bool(args.adjust_outliers),
    }
    _manifest(out, "forecast", config, args.seed)
    print(f"forecast written to {args.out} (average MAE {result.errors.mae_average:.4f})")
    return 0


def _cmd_benchmark(args) -> int:
    with Path(args.config).open("r", encoding="utf-8") as fh:
        raw = json.load(fh)
    ps = raw.get("p", 60)
    ns = raw.get("n", 500)
    ps = ps if isinstance(ps, list) else [ps]
    ns = ns if isinstance(ns, list) else [ns]
    methods = tuple(raw.get("methods", ["eigen", "sparse", "sparsegroup"]))
    grid_size = int(raw.get("grid_size", 20))
    base = {
        k: raw[k]
        for k in (
            "r", "example", "reps", "seed", "ar_coef", "noise_diag",
            "noise_offdiag", "loading_bound", "loading_bound_mode", "burn_in", "h0",
        )
        if k in raw
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    all_summary: list[dict] = []
    all_raw: list[dict] = []
    for p in ps:
        for n in ns:
            cfg = SimulationConfig(p=int(p), n=int(n), **base)
            report = run_benchmark(
                cfg, methods=methods, grid_size=grid_size, threads=args.threads
            )
            all_summary.extend(summary_rows(report))
            all_raw.extend(record_rows(report))
            print(
                f"p={p} n={n}: "
                + ", ".join(
                    f"{s.method}={s.distance_mean:.4f}" for s in report.summaries
                )
            )
    _write_rows_csv(out / "distance.csv", [r for r in all_summary if r["metric"] == "distance"])
    _write_rows_csv(out / "sparsity.csv", [r for r in all_summary if r["metric"] != "distance"])
    _write_rows_csv(out / "raw.csv", all_raw)
    config = dict(raw)
    config["methods"] = list(methods)
    _manifest(out, "benchmark", config, int(raw.get("seed", 0)))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgfactor",
        description="Sparse-group factor models for high-dimensional time series",
    )
    parser.add_argument(
        "--threads", type=int, default=_default_threads(),
        help="worker pool size (default: SGF_THREADS or machine parallelism)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate planted-model panels")
    sim.add_argument("--example", type=int, choices=(1, 2), default=1)
    sim.add_argument("--p", type=int, required=True)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--reps", type=int, default=1)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--ar-coef", type=float, default=0.9)
    sim.add_argument("--loading-bound", type=float, default=0.1)
    sim.add_argument("--loading-bound-mode", choices=("lower", "upper"), default="lower")
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=_cmd_simulate)

    def add_common(cmd):
        cmd.add_argument("--data", required=True)
        cmd.add_argument("--groups", required=True)
        cmd.add_argument("--r", type=int, required=True)
        cmd.add_argument("--h0", type=int, default=1)
        cmd.add_argument("--no-header", action="store_true")
        cmd.add_argument("--transforms", default=None)
        cmd.add_argument("--adjust-outliers", action="store_true")
        cmd.add_argument("--grid-size", type=int, default=20)
        cmd.add_argument("--seed", type=int, default=0)
        cmd.add_argument("--out", required=True)

    est = sub.add_parser("estimate", help="estimate the sparse-group loading matrix")
    add_common(est)
    est.add_argument("--lambda1", default="auto")
    est.add_argument("--lambda2", default="auto")
    est.set_defaults(func=_cmd_estimate)

    fc = sub.add_parser("forecast", help="rolling one-step-ahead prediction")
    add_common(fc)
    fc.add_argument("--window", type=int, required=True)
    fc.add_argument("--method", choices=("eigen", "sparse", "sparsegroup"),
                    default="sparsegroup")
    fc.set_defaults(func=_cmd_forecast)

    bench = sub.add_parser("benchmark", help="seeded Monte-Carlo method comparison")
    bench.add_argument("--config", required=True)
    bench.add_argument("--out", required=True)
    bench.set_defaults(func=_cmd_benchmark)
    return parser


def execute(argv: list[str]) -> int:
    """Run the CLI: 0 on success, 1 on runtime failure, 2 on usage errors."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (OSError, ValueError, TuningError, RuntimeError) as exc:
        print(f"sgfactor: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(execute(sys.argv[1:]))
