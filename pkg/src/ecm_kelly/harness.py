"""Monte Carlo experiment families with quantile aggregation.

Simulations are processed in fixed-size chunks of consecutive indices. Every
random number a simulation consumes comes from substreams keyed by
``(master_seed, index, purpose)``, and every reduction runs over the
concatenated chunk outputs in index order, so results are byte-identical for
any number of worker processes.

Paths of length ``T`` are exact prefixes of longer paths with the same seed,
so a sweep over horizons simulates the longest horizon once and evaluates the
statistics at every checkpoint.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from types import SimpleNamespace

import numpy as np

from .kelly import LAMBDA_CAP, lagrange4, solve_lambda_batch
from .metrics import METRIC_FIELDS, MetricsReport, PathMetrics, metrics_report
from .model import TRADING_DAYS, ModelParams, simulate_log_prices
from .strategies import (
    InterpolantCache,
    Kind,
    StrategySpec,
    apply_default,
    approx_lambda_array,
    constant_fraction,
    eco_lambda,
    standard_strategies,
    wealth_increments,
)
from .streams import PARAM_ERROR, SIGN_TEST, draw_block, substream


class Family(Enum):
    HISTOGRAM = "histogram"
    WINDOW_SWEEP = "window_sweep"
    PARAM_SENSITIVITY = "param_sensitivity"
    ERROR_SCAN = "error_scan"
    SIGN_TEST = "sign_test"


ERROR_TARGETS = ("r_D", "r_N", "sigma", "rho", "k_bar")
SENSITIVITY_PARAMS = ("r_D", "sigma", "rho", "k_bar")
ECO_LABELS = ("ECO[-1,2]", "ECO[-inf,inf]")
ALL_LABELS = ("B&H", "60/40", "CK[-1,2]", "CK[-inf,inf]", "ECO[-1,2]", "ECO[-inf,inf]")

DEFAULT_HISTOGRAM_GRID = (500, 2500)
DEFAULT_WINDOW_GRID = tuple(range(250, 10001, 250))
DEFAULT_SCAN_HORIZON = 2500
DEFAULT_ERROR_GRID = tuple(np.logspace(-3, 2, 11).tolist())


def default_sensitivity_grid(name: str) -> tuple[float, ...]:
    if name == "r_D":
        return tuple(np.linspace(0.0, math.log(1.2) / TRADING_DAYS, 11).tolist())
    if name == "sigma":
        return tuple((np.linspace(0.05, 0.5, 10) / math.sqrt(TRADING_DAYS)).tolist())
    if name == "rho":
        return tuple(np.linspace(0.0, 0.05, 11).tolist())
    if name == "k_bar":
        return tuple(np.linspace(0.0, 1.0, 11).tolist())
    raise ValueError(f"no sensitivity scan for {name!r}; choose from {SENSITIVITY_PARAMS}")


@dataclass(frozen=True)
class ErrorSpec:
    """Multiplicative Gaussian error ``phi_e = (1 + sigma_e * z_i) * phi_true`` on one parameter."""

    target_param: str
    sigma_e: float = 0.0

    def __post_init__(self):
        if self.target_param not in ERROR_TARGETS:
            raise ValueError(f"target_param must be one of {ERROR_TARGETS}, got {self.target_param!r}")
        if not self.sigma_e >= 0:
            raise ValueError("sigma_e must be non-negative")

    def perturb(self, true_value: float, z):
        """Perturbed estimates for standard normal draws ``z``, clipped to the natural range."""
        est = (1.0 + self.sigma_e * np.asarray(z, dtype=float)) * true_value
        if self.target_param in ("sigma", "k_bar"):
            est = np.maximum(est, 0.0)
        elif self.target_param == "rho":
            est = np.clip(est, 0.0, 1.0)
        return est


class SignMode(Enum):
    CORRECT = "correct"
    FLIPPED = "flipped"


@dataclass(frozen=True)
class SignTestSpec:
    """Random common rate ``r_S`` for both drifts and an estimate of random size.

    ``r_S`` is the per-step rate of an annual growth drawn uniformly from
    ``[annual_lo, annual_hi]``; the estimate magnitude is ``U(0, 2|r_S|)``
    with the correct or the opposite sign.
    """

    annual_lo: float = -0.10
    annual_hi: float = 0.10
    modes: tuple[SignMode, ...] = (SignMode.CORRECT, SignMode.FLIPPED)

    def __post_init__(self):
        if not (-1 < self.annual_lo <= self.annual_hi):
            raise ValueError("need -1 < annual_lo <= annual_hi")

    def draw(self, master_seed: int, indices) -> tuple[np.ndarray, np.ndarray]:
        """Per-simulation ``(r_S, r_e)`` in per-step units."""
        r_s = np.empty(len(indices))
        r_e = np.empty(len(indices))
        for row, i in enumerate(indices):
            g = substream(master_seed, i, SIGN_TEST)
            a, b = g.random(2)
            r_s[row] = math.log1p(self.annual_lo + (self.annual_hi - self.annual_lo) * a) / TRADING_DAYS
            r_e[row] = b * 2.0 * abs(r_s[row])
        return r_s, r_e

    @staticmethod
    def estimate(r_s, r_e, mode: SignMode):
        sign = np.sign(r_s)
        return sign * r_e if mode is SignMode.CORRECT else -sign * r_e


def error_draws(master_seed: int, indices) -> np.ndarray:
    """One standard normal per simulation, shared by every error cell."""
    return np.array([substream(master_seed, i, PARAM_ERROR).standard_normal() for i in indices])


@dataclass
class ExperimentPlan:
    family: Family
    params: ModelParams = field(default_factory=ModelParams.base)
    m: int = 10_000
    grid: tuple | None = None
    strategies: tuple[str, ...] | None = None
    master_seed: int = 0
    horizon: int = DEFAULT_SCAN_HORIZON
    sweep_param: str | None = None
    error: ErrorSpec | None = None
    sign: SignTestSpec | None = None
    workers: int = 1
    chunk_size: int = 250
    bins: int = 50
    mu_mode: str = "log"
    solver_mode: str = "numeric"

    def __post_init__(self):
        self.family = Family(self.family)
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.chunk_size < 1 or self.workers < 1:
            raise ValueError("chunk_size and workers must be >= 1")
        if self.grid is not None:
            self.grid = tuple(self.grid)
            if not self.grid:
                raise ValueError("grid must be nonempty")
        if self.family is Family.PARAM_SENSITIVITY and self.sweep_param not in SENSITIVITY_PARAMS:
            raise ValueError(f"sweep_param must be one of {SENSITIVITY_PARAMS}")
        if self.family is Family.ERROR_SCAN and self.error is None:
            raise ValueError("error scan needs an ErrorSpec")
        if self.family is Family.SIGN_TEST and self.sign is None:
            self.sign = SignTestSpec()

    @property
    def effective_grid(self) -> tuple:
        if self.grid is not None:
            return self.grid
        return {
            Family.HISTOGRAM: DEFAULT_HISTOGRAM_GRID,
            Family.WINDOW_SWEEP: DEFAULT_WINDOW_GRID,
            Family.SIGN_TEST: DEFAULT_WINDOW_GRID,
            Family.ERROR_SCAN: DEFAULT_ERROR_GRID,
        }.get(self.family) or default_sensitivity_grid(self.sweep_param)

    @property
    def grid_name(self) -> str:
        if self.family is Family.PARAM_SENSITIVITY:
            return self.sweep_param
        if self.family is Family.ERROR_SCAN:
            return "sigma_e"
        return "T"

    @property
    def strategy_specs(self) -> list[StrategySpec]:
        labels = self.strategies
        if labels is None:
            scans = (Family.PARAM_SENSITIVITY, Family.ERROR_SCAN, Family.SIGN_TEST)
            labels = ECO_LABELS if self.family in scans else ALL_LABELS
        table = {s.label: s for s in standard_strategies(self.mu_mode, self.solver_mode)}
        unknown = [l for l in labels if l not in table]
        if unknown:
            raise ValueError(f"unknown strategies {unknown}; choose from {list(table)}")
        return [table[l] for l in labels]


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    mean: float
    median: float
    negative_mean: float
    positive_mean: float


@dataclass
class CellSummary:
    grid_value: float
    strategy: str
    variant: str
    m: int
    failures: int
    defaults: int
    included: int
    log_wealth: tuple[float, float, float]
    uptime: tuple[float, float, float]
    mean_lambda: tuple[float, float, float]
    report: MetricsReport | None = None
    histogram: Histogram | None = None

    @property
    def prob_default(self) -> float:
        valid = self.m - self.failures
        return 100.0 * self.defaults / valid if valid else math.nan


ROW_COLUMNS = [
    "family", "grid_name", "grid_value", "strategy", "variant", "master_seed",
    "m", "failures", "defaults", "included", "prob_default",
    "log_wealth_q25", "log_wealth_median", "log_wealth_q75",
    "uptime_q25", "uptime_median", "uptime_q75",
    "mean_lambda_q25", "mean_lambda_median", "mean_lambda_q75",
] + [f for f in METRIC_FIELDS if f != "prob_default"]


@dataclass
class SweepResult:
    plan: ExperimentPlan
    cells: list[CellSummary]

    def cell(self, grid_value, strategy: str, variant: str = "") -> CellSummary:
        for c in self.cells:
            if c.grid_value == grid_value and c.strategy == strategy and c.variant == variant:
                return c
        raise KeyError((grid_value, strategy, variant))

    def series(self, strategy: str, attr: str, variant: str = "", which: int = 1) -> np.ndarray:
        """One statistic across the grid; ``which`` picks the quartile (0, 1, 2) of banded fields."""
        out = []
        for c in self.cells:
            if c.strategy == strategy and c.variant == variant:
                v = getattr(c, attr)
                out.append(v[which] if isinstance(v, tuple) else v)
        return np.array(out, dtype=float)

    def rows(self) -> list[dict]:
        rows = []
        for c in self.cells:
            row = {
                "family": self.plan.family.value,
                "grid_name": self.plan.grid_name,
                "grid_value": c.grid_value,
                "strategy": c.strategy,
                "variant": c.variant,
                "master_seed": self.plan.master_seed,
                "m": c.m,
                "failures": c.failures,
                "defaults": c.defaults,
                "included": c.included,
                "prob_default": c.prob_default,
            }
            for name in ("log_wealth", "uptime", "mean_lambda"):
                for tag, v in zip(("q25", "median", "q75"), getattr(c, name)):
                    row[f"{name}_{tag}"] = v
            for f in METRIC_FIELDS:
                if f != "prob_default":
                    row[f] = getattr(c.report, f) if c.report is not None else None
            rows.append(row)
        return rows


# --- chunk execution -------------------------------------------------------

_PARAM_NAMES = ("r_D", "r_N", "sigma", "rho", "k_bar", "sigma_kappa", "r_f")


@dataclass(frozen=True)
class _Chunk:
    master_seed: int
    start: int
    stop: int
    horizon: int
    checkpoints: tuple[int, ...]
    params: ModelParams
    strategies: tuple[StrategySpec, ...]
    full: bool
    error: ErrorSpec | None = None
    sign: SignTestSpec | None = None


_CACHE = InterpolantCache()


def _column(params_ns, name):
    v = getattr(params_ns, name)
    return v[:, None] if np.ndim(v) else v


def _tabulated_lambda(log_q, est: dict, spacing: float = 0.01, max_nodes: int = 400) -> np.ndarray:
    """Unconstrained Kelly fractions for per-row parameters via per-row node tables.

    Row ``s`` uses nodes ``k * h_s`` covering its own ``ln q`` range, so a
    row's result only depends on that row.
    """
    S = log_q.shape[0]
    lo = np.min(log_q, axis=1)
    hi = np.max(log_q, axis=1)
    h = np.maximum(spacing, (hi - lo) / max_nodes)
    k_lo = np.floor(lo / h).astype(np.int64) - 1
    k_hi = np.floor(hi / h).astype(np.int64) + 2
    counts = k_hi - k_lo + 1
    row = np.repeat(np.arange(S), counts)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    k = k_lo[row] + (np.arange(counts.sum()) - offsets[row])
    nodes = k * h[row]
    p = {n: np.broadcast_to(np.asarray(est[n], dtype=float), (S,))[row] for n in _PARAM_NAMES if n != "r_N"}
    vals = solve_lambda_batch(nodes, p["r_D"], p["sigma"], p["rho"], p["k_bar"], p["sigma_kappa"], p["r_f"])
    table = np.full((S, int(counts.max())), np.nan)
    table[row, np.arange(counts.sum()) - offsets[row]] = vals
    return lagrange4(table, k_lo[:, None], log_q / h[:, None])


def _ck_lambda(spec: StrategySpec, est: dict) -> np.ndarray:
    sigma = np.asarray(est["sigma"], dtype=float)
    mu = np.asarray(est["r_D"], dtype=float)
    if spec.mu_mode == "arithmetic":
        mu = mu + 0.5 * sigma**2
    excess = mu - np.asarray(est["r_f"], dtype=float)
    s2 = sigma**2
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(s2 > 0, excess / s2, np.sign(excess) * LAMBDA_CAP)
    return spec.bounds.clip(np.clip(lam, -LAMBDA_CAP, LAMBDA_CAP))


def _allocations(spec: StrategySpec, shared: ModelParams | None, est: dict, log_q, memo: dict) -> np.ndarray:
    if shared is not None:
        if spec.kind is Kind.ECO_KELLY:
            return eco_lambda(spec, shared, log_q, _CACHE)
        return np.full(log_q.shape, constant_fraction(spec, shared))
    if spec.kind is Kind.ECO_KELLY:
        if spec.solver_mode == "approx":
            ns = SimpleNamespace(**{n: np.asarray(est[n], dtype=float) for n in _PARAM_NAMES})
            ns = SimpleNamespace(**{n: _column(ns, n) for n in _PARAM_NAMES})
            lam = approx_lambda_array(ns, log_q)
        else:
            # the unconstrained table is shared by both bounds
            key = id(est)
            if key not in memo:
                memo[key] = _tabulated_lambda(log_q, est)
            lam = memo[key]
        return spec.bounds.clip(lam)
    if spec.kind is Kind.CLASSICAL_KELLY:
        lam = _ck_lambda(spec, est)
        return np.broadcast_to(lam[:, None] if np.ndim(lam) else lam, log_q.shape)
    return np.full(log_q.shape, constant_fraction(spec, ModelParams.base()))


def _fold(lam, lw, lp, checkpoints, full) -> dict:
    above = np.cumsum(lw[:, 1:] > lp[:, 1:], axis=1)
    lam_sum = np.cumsum(lam, axis=1)
    out = {}
    for T in checkpoints:
        rec = {"log_w_T": lw[:, T], "log_p_T": lp[:, T], "mean_lambda": lam_sum[:, T - 1] / T}
        if full:
            pm = PathMetrics.from_log_wealth(lw[:, : T + 1], lp[:, : T + 1])
            rec.update(uptime=pm.uptime, sharpe=pm.sharpe, sdrsr=pm.sdrsr, calmar=pm.calmar)
        else:
            rec["uptime"] = above[:, T - 1] / T
        out[T] = rec
    return out


def _variants(strategies, sign):
    modes = sign.modes if sign is not None else (None,)
    return [(spec, mode) for mode in modes for spec in strategies]


def variant_key(spec: StrategySpec, mode) -> tuple[str, str]:
    return spec.label, mode.value if mode is not None else ""


def _run_chunk(chunk: _Chunk) -> dict:
    idx = np.arange(chunk.start, chunk.stop)
    S = len(idx)
    p = chunk.params
    truth = {n: getattr(p, n) for n in _PARAM_NAMES}
    if chunk.sign is not None:
        r_s, r_e = chunk.sign.draw(chunk.master_seed, idx)
        truth["r_D"] = truth["r_N"] = r_s
    u, eps, z = draw_block(chunk.master_seed, idx, chunk.horizon)
    x, n, _, _, failed = simulate_log_prices(
        truth["r_D"], truth["r_N"], p.sigma, p.rho, p.k_bar, p.sigma_kappa, math.log(p.p0), u, eps, z
    )
    del u, eps, z
    ok = ~failed
    x, n = x[ok], n[ok]
    sel = lambda v: v[ok] if np.ndim(v) else v
    truth = {k: sel(v) for k, v in truth.items()}
    r = np.diff(x, axis=1)
    lp = np.zeros_like(x)
    np.cumsum(r, axis=1, out=lp[:, 1:])
    true_log_q = (n - x)[:, :-1]
    t = np.arange(chunk.horizon)

    est_shared = None
    ests = {}
    if chunk.error is not None:
        zs = error_draws(chunk.master_seed, idx)[ok]
        est = dict(truth)
        est[chunk.error.target_param] = chunk.error.perturb(truth[chunk.error.target_param], zs)
        ests[None] = est
    elif chunk.sign is not None:
        r_s, r_e = r_s[ok], r_e[ok]
        for mode in chunk.sign.modes:
            est = dict(truth)
            est["r_D"] = est["r_N"] = chunk.sign.estimate(r_s, r_e, mode)
            ests[mode] = est
    else:
        est_shared = p

    result = {"failed": failed, "data": {}}
    memo = {}
    for spec, mode in _variants(chunk.strategies, chunk.sign):
        est = ests.get(mode, truth)
        if est_shared is None:
            drift_gap = np.asarray(est["r_N"]) - np.asarray(truth["r_N"])
            log_q = true_log_q + (drift_gap[:, None] if np.ndim(drift_gap) else drift_gap) * t
        else:
            log_q = true_log_q
        lam = _allocations(spec, est_shared, est, log_q, memo)
        g, ruined = wealth_increments(lam, r, p.r_f)
        lam, lw, _ = apply_default(lam, g, ruined)
        folded = _fold(lam, lw, lp, chunk.checkpoints, chunk.full)
        for T, rec in folded.items():
            full_rec = {}
            for name, arr in rec.items():
                out = np.full(S, np.nan)
                out[ok] = arr
                full_rec[name] = out
            result["data"][(variant_key(spec, mode), T)] = full_rec
    return result


def _execute(chunks, workers: int):
    if workers <= 1 or len(chunks) <= 1:
        return [_run_chunk(c) for c in chunks]
    with ProcessPoolExecutor(max_workers=min(workers, len(chunks))) as pool:
        return list(pool.map(_run_chunk, chunks))


def _chunks(plan: ExperimentPlan, params, horizon, checkpoints, full, error=None, sign=None):
    specs = tuple(plan.strategy_specs)
    return [
        _Chunk(plan.master_seed, s, min(s + plan.chunk_size, plan.m), horizon, tuple(checkpoints), params, specs, full, error, sign)
        for s in range(0, plan.m, plan.chunk_size)
    ]


# --- reduction -------------------------------------------------------------


def _quartiles(x) -> tuple[float, float, float]:
    x = np.asarray(x, dtype=float)
    if not x.size:
        return (math.nan, math.nan, math.nan)
    q = np.quantile(x, [0.25, 0.5, 0.75])
    return float(q[0]), float(q[1]), float(q[2])


def histogram(values, bins: int) -> Histogram:
    values = np.asarray(values, dtype=float)
    counts, edges = np.histogram(values, bins=bins)
    cond = lambda v: float(np.mean(v)) if v.size else math.nan
    return Histogram(
        edges=edges,
        counts=counts,
        mean=cond(values),
        median=float(np.median(values)) if values.size else math.nan,
        negative_mean=cond(values[values < 0]),
        positive_mean=cond(values[values > 0]),
    )


def _summarize(plan, grid_value, key, T, parts, full) -> CellSummary:
    cat = lambda name: np.concatenate([p["data"][(key, T)][name] for p in parts])
    failed = np.concatenate([p["failed"] for p in parts])
    lw, lp = cat("log_w_T"), cat("log_p_T")
    valid = ~failed
    alive = valid & np.isfinite(lw)
    cell = CellSummary(
        grid_value=grid_value,
        strategy=key[0],
        variant=key[1],
        m=len(lw),
        failures=int(failed.sum()),
        defaults=int((valid & ~alive).sum()),
        included=int(alive.sum()),
        log_wealth=_quartiles(lw[alive]),
        uptime=_quartiles(cat("uptime")[alive]),
        mean_lambda=_quartiles(cat("mean_lambda")[alive]),
    )
    if full:
        pm = PathMetrics(lw[valid], lp[valid], cat("uptime")[valid], cat("sharpe")[valid], cat("sdrsr")[valid], cat("calmar")[valid], T)
        cell.report = metrics_report(pm)
        cell.histogram = histogram(lw[alive] - lp[alive], plan.bins)
    return cell


def _cells(plan, parts, grid_value, T, full) -> list[CellSummary]:
    sign = plan.sign if plan.family is Family.SIGN_TEST else None
    keys = [variant_key(s, m) for s, m in _variants(plan.strategy_specs, sign)]
    return [_summarize(plan, grid_value, key, T, parts, full) for key in keys]


# --- experiment families ---------------------------------------------------


def _horizon_family(plan: ExperimentPlan, full: bool, sign=None) -> SweepResult:
    grid = tuple(int(T) for T in plan.effective_grid)
    if min(grid) < 1:
        raise ValueError("horizons must be >= 1")
    parts = _execute(_chunks(plan, plan.params, max(grid), sorted(set(grid)), full, sign=sign), plan.workers)
    cells = []
    for T in grid:
        cells.extend(_cells(plan, parts, T, T, full))
    return SweepResult(plan, cells)


def run_histogram(plan: ExperimentPlan) -> SweepResult:
    """Full metric reports and outperformance histograms at each horizon of the grid."""
    return _horizon_family(plan, full=True)


def run_window_sweep(plan: ExperimentPlan) -> SweepResult:
    """Median and quartile bands of terminal log wealth, uptime and mean fraction versus horizon."""
    return _horizon_family(plan, full=False)


def run_sensitivity(plan: ExperimentPlan) -> SweepResult:
    """One cell per value of ``plan.sweep_param`` at horizon ``plan.horizon``; ``r_D`` moves ``r_N`` along."""
    cells = []
    for value in plan.effective_grid:
        change = {plan.sweep_param: value}
        if plan.sweep_param == "r_D":
            change["r_N"] = value
        params = plan.params.replace(**change)
        parts = _execute(_chunks(plan, params, plan.horizon, (plan.horizon,), False), plan.workers)
        cells.extend(_cells(plan, parts, value, plan.horizon, False))
    return SweepResult(plan, cells)


def run_error_scan(plan: ExperimentPlan, spec: ErrorSpec | None = None) -> SweepResult:
    """Paths at the true parameters, strategies using per-simulation perturbed estimates."""
    spec = spec or plan.error
    if spec is None:
        raise ValueError("error scan needs an ErrorSpec")
    plan = replace(plan, error=spec)
    cells = []
    for sigma_e in plan.effective_grid:
        cell_spec = ErrorSpec(spec.target_param, float(sigma_e))
        parts = _execute(_chunks(plan, plan.params, plan.horizon, (plan.horizon,), False, error=cell_spec), plan.workers)
        cells.extend(_cells(plan, parts, sigma_e, plan.horizon, False))
    return SweepResult(plan, cells)


def run_sign_test(plan: ExperimentPlan, spec: SignTestSpec | None = None) -> SweepResult:
    """Random common drift; strategies estimate it with the right or the wrong sign."""
    spec = spec or plan.sign or SignTestSpec()
    plan = replace(plan, sign=spec)
    return _horizon_family(plan, full=False, sign=spec)


def run(plan: ExperimentPlan) -> SweepResult:
    return {
        Family.HISTOGRAM: run_histogram,
        Family.WINDOW_SWEEP: run_window_sweep,
        Family.PARAM_SENSITIVITY: run_sensitivity,
        Family.ERROR_SCAN: run_error_scan,
        Family.SIGN_TEST: run_sign_test,
    }[plan.family](plan)
