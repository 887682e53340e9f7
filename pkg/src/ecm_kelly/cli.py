"""Command line front end.

Exit codes: 0 success, 1 configuration or usage error, 2 failure while running.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import emit
from .config import ConfigError, RunConfig, parse_config
from .harness import (
    DEFAULT_WINDOW_GRID,
    ErrorSpec,
    ExperimentPlan,
    Family,
    SignTestSpec,
    run_error_scan,
    run_histogram,
    run_sensitivity,
    run_sign_test,
    run_window_sweep,
)
from .model import generate_paths
from .strategies import InterpolantCache, simulate_portfolio, standard_strategies

WORKERS_ENV = "ECM_KELLY_WORKERS"
PATHS_DEFAULT_SIMS = 5

COMMANDS = {
    "paths": "Simulate a few price paths with their normal price, mispricing, jumps and every "
    "strategy's fraction and wealth (the sample trajectories illustrating the model).",
    "compare": "Fixed-horizon comparison of the six strategies: the nine-metric tables and "
    "outperformance histograms at 2 and 10 years (500 and 2500 steps).",
    "sweep-window": "Median and quartile bands of terminal log wealth, uptime and mean fraction, "
    "plus default probabilities, for horizons 250 to 10000 in steps of 250.",
    "sweep-param": "Sensitivity of the Kelly strategies to one model parameter (drift, volatility, "
    "jump probability or mean jump size) at a 10-year horizon.",
    "error-scan": "Robustness of the Kelly strategies when one parameter is estimated with "
    "multiplicative Gaussian error, sigma_e from 1e-3 to 1e2.",
    "sign-test": "Random common drift in [-10%, 10%] per year estimated with the correct versus the "
    "flipped sign, across horizons.",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON configuration file (annualized units)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--sims", type=int, help="simulations per cell")
    p.add_argument("--horizon", type=int, help="number of steps (largest horizon for sweeps)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help=f"worker processes (default: ${WORKERS_ENV} or 1)")
    p.add_argument("--solver", choices=["numeric", "exact", "approx"], help="Kelly solver for the ECO strategies")
    p.add_argument("--strategies", nargs="+", metavar="LABEL", help="subset of strategy labels")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="ecm-kelly",
        description="Kelly portfolios under a jump process with mispricing-dependent crashes.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _common()
    for name, text in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=text.replace("%", "%%"), description=text)
        if name == "sweep-param":
            sp.add_argument("--param", choices=["r_D", "sigma", "rho", "k_bar"], help="parameter to scan")
        if name == "error-scan":
            sp.add_argument("--param", choices=["r_D", "r_N", "sigma", "rho", "k_bar"], help="mis-estimated parameter")
        if name in ("compare", "error-scan", "sweep-param"):
            sp.add_argument("--grid", type=float, nargs="+", help="grid values (horizons, annual units, or sigma_e)")
    return parser


def _config(args) -> RunConfig:
    cfg = parse_config(args.config)
    ex, run = cfg.experiment, cfg.run
    if args.seed is not None:
        ex.master_seed = args.seed
    if args.sims is not None:
        ex.m = args.sims
    if args.horizon is not None:
        if args.command in ("sweep-param", "error-scan"):
            ex.scan_horizon = args.horizon
        elif args.command == "compare":
            ex.grid = [args.horizon]
        elif args.command in ("sweep-window", "sign-test"):
            ex.grid = [T for T in DEFAULT_WINDOW_GRID if T <= args.horizon] or [args.horizon]
        else:
            ex.horizon = args.horizon
    if args.out is not None:
        run.output_dir = args.out
    if args.workers is not None:
        run.workers = args.workers
    if args.solver is not None:
        ex.solver_mode = args.solver
    if args.strategies is not None:
        ex.strategies = list(args.strategies)
    if getattr(args, "param", None):
        if args.command == "sweep-param":
            ex.sweep_param = args.param
        else:
            ex.error_param = args.param
    if getattr(args, "grid", None):
        ex.grid = list(args.grid)
    # re-validate the effective configuration
    return parse_config(cfg.to_dict())


def _workers(cfg: RunConfig) -> int:
    if cfg.run.workers is not None:
        return cfg.run.workers
    env = os.environ.get(WORKERS_ENV)
    if env is None:
        return 1
    try:
        n = int(env)
    except ValueError:
        raise ConfigError(f"${WORKERS_ENV} must be an integer, got {env!r}") from None
    if n < 1:
        raise ConfigError(f"${WORKERS_ENV} must be >= 1")
    return n


def plan_for(command: str, cfg: RunConfig, workers: int = 1) -> ExperimentPlan:
    """Translate a subcommand and configuration into an experiment plan."""
    ex = cfg.experiment
    common = dict(
        params=cfg.params,
        m=ex.m,
        strategies=tuple(ex.strategies) if ex.strategies is not None else None,
        master_seed=ex.master_seed,
        workers=workers,
        chunk_size=ex.chunk_size,
        bins=ex.bins,
        mu_mode=ex.mu_mode,
        solver_mode=ex.solver_mode,
        horizon=ex.scan_horizon,
    )
    horizon_grid = tuple(int(T) for T in ex.grid) if ex.grid else None
    if command == "compare":
        return ExperimentPlan(Family.HISTOGRAM, grid=horizon_grid, **common)
    if command in ("sweep-window", "sign-test"):
        grid = horizon_grid
        if command == "sweep-window":
            return ExperimentPlan(Family.WINDOW_SWEEP, grid=grid, **common)
        lo, hi = ex.sign_annual_range
        return ExperimentPlan(Family.SIGN_TEST, grid=grid, sign=SignTestSpec(lo, hi), **common)
    if command == "sweep-param":
        return ExperimentPlan(Family.PARAM_SENSITIVITY, grid=cfg.sensitivity_grid(), sweep_param=ex.sweep_param, **common)
    if command == "error-scan":
        grid = tuple(ex.grid) if ex.grid else None
        return ExperimentPlan(Family.ERROR_SCAN, grid=grid, error=ErrorSpec(ex.error_param), **common)
    raise ValueError(f"no plan for {command!r}")


_RUNNERS = {
    "compare": run_histogram,
    "sweep-window": run_window_sweep,
    "sweep-param": run_sensitivity,
    "error-scan": run_error_scan,
    "sign-test": run_sign_test,
}


def _run_paths(cfg: RunConfig, sims: int | None, out: str) -> list[str]:
    params = cfg.params
    ex = cfg.experiment
    n = sims if sims is not None else PATHS_DEFAULT_SIMS
    paths = generate_paths(params, ex.horizon, ex.master_seed, range(n))
    table = {s.label: s for s in standard_strategies(ex.mu_mode, ex.solver_mode)}
    labels = ex.strategies or list(table)
    cache = InterpolantCache()
    lam, lw = {}, {}
    for label in labels:
        if label not in table:
            raise ConfigError(f"unknown strategy {label!r}")
        runs = [simulate_portfolio(table[label], params, p, cache=cache) for p in paths]
        lam[label] = np.array([r.lam for r in runs])
        lw[label] = np.array([r.log_wealth for r in runs])
    x = np.array([p.log_price for p in paths])
    nn = np.array([p.log_normal_price for p in paths])
    jump = np.array([p.jump[1:] for p in paths])
    return [emit.write_path_table(os.path.join(out, "paths.csv"), range(n), x, nn, jump, lam, lw)]


def run_command(command: str, cfg: RunConfig, workers: int = 1, sims_flag: int | None = None) -> list[str]:
    out = cfg.run.output_dir
    start = time.perf_counter()
    outputs: list[str] = []
    if command == "paths":
        if "csv" in cfg.run.formats:
            outputs = _run_paths(cfg, sims_flag, out)
    else:
        plan = plan_for(command, cfg, workers)
        result = _RUNNERS[command](plan)
        if "csv" in cfg.run.formats:
            outputs.append(emit.write_rows(result, os.path.join(out, "rows.csv")))
            if command == "compare":
                for T in plan.effective_grid:
                    outputs.append(emit.write_table(result, T, os.path.join(out, f"table_T{T}.csv")))
                    outputs.extend(emit.write_histograms(result, T, out))
    wall = time.perf_counter() - start
    if "json" in cfg.run.formats:
        outputs.append(
            emit.write_manifest(
                os.path.join(out, "manifest.json"),
                command=command,
                config=cfg,
                seed=cfg.experiment.master_seed,
                wall_time=wall,
                outputs=list(outputs),
                extra={"workers": workers},
            )
        )
    return outputs


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _config(args)
        workers = _workers(cfg)
        if args.command != "paths":
            plan_for(args.command, cfg, workers)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        outputs = run_command(args.command, cfg, workers, args.sims)
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    for path in outputs:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
