"""Benchmark and Kelly allocation strategies run over simulated price paths.

A strategy fixes the fraction ``lam_t`` of wealth held in the risky asset over
``[t, t+1]`` using the state at ``t``. Wealth is rebalanced every step:

    W_{t+1} = W_t * (lam_t * exp(r_t) + (1 - lam_t) * exp(r_f))

and is frozen at zero once the bracket is non-positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import kelly
from .kelly import BOUNDED, UNBOUNDED, LambdaBounds, LambdaInterpolant
from .model import ModelParams, PricePath, no_jump_drift


class Kind(Enum):
    BUY_AND_HOLD = "buy_and_hold"
    FIXED_FRACTION = "fixed_fraction"
    CLASSICAL_KELLY = "classical_kelly"
    ECO_KELLY = "eco_kelly"


@dataclass(frozen=True)
class StrategySpec:
    kind: Kind
    label: str
    fraction: float = 1.0
    bounds: LambdaBounds = UNBOUNDED
    mu_mode: str = "log"
    solver_mode: str = "numeric"

    @classmethod
    def buy_and_hold(cls):
        return cls(Kind.BUY_AND_HOLD, "B&H")

    @classmethod
    def fixed_fraction(cls, fraction=0.6):
        label = "60/40" if fraction == 0.6 else f"FF({fraction:g})"
        return cls(Kind.FIXED_FRACTION, label, fraction=fraction)

    @classmethod
    def classical_kelly(cls, bounds=UNBOUNDED, mu_mode="log"):
        return cls(Kind.CLASSICAL_KELLY, "CK" + bounds.label(), bounds=bounds, mu_mode=mu_mode)

    @classmethod
    def eco_kelly(cls, bounds=UNBOUNDED, solver_mode="numeric"):
        return cls(Kind.ECO_KELLY, "ECO" + bounds.label(), bounds=bounds, solver_mode=solver_mode)

    @property
    def time_varying(self) -> bool:
        return self.kind is Kind.ECO_KELLY


def standard_strategies(mu_mode: str = "log", solver_mode: str = "numeric") -> list[StrategySpec]:
    """B&H, 60/40, CK[-1,2], CK[-inf,inf], ECO[-1,2], ECO[-inf,inf]."""
    return [
        StrategySpec.buy_and_hold(),
        StrategySpec.fixed_fraction(0.6),
        StrategySpec.classical_kelly(BOUNDED, mu_mode),
        StrategySpec.classical_kelly(UNBOUNDED, mu_mode),
        StrategySpec.eco_kelly(BOUNDED, solver_mode),
        StrategySpec.eco_kelly(UNBOUNDED, solver_mode),
    ]


def strategy_by_label(label: str, mu_mode="log", solver_mode="numeric") -> StrategySpec:
    for spec in standard_strategies(mu_mode, solver_mode):
        if spec.label == label:
            return spec
    raise KeyError(f"unknown strategy {label!r}")


class InterpolantCache:
    """One unconstrained Kelly interpolant per parameter set, shared by all bounds."""

    def __init__(self):
        self._store: dict = {}

    def get(self, params: ModelParams) -> LambdaInterpolant:
        key = (params.r_D, params.sigma, params.rho, params.k_bar, params.sigma_kappa, params.r_f)
        if key not in self._store:
            self._store[key] = LambdaInterpolant(params)
        return self._store[key]


_default_cache = InterpolantCache()


def approx_lambda_array(params: ModelParams, log_q) -> np.ndarray:
    """Vectorized closed-form approximation, unconstrained."""
    rho, s2 = params.rho, params.sigma**2
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        A = np.exp(no_jump_drift(params.r_D, rho, params.k_bar, log_q) - params.r_f)
        B = np.exp(params.k_bar * log_q + params.r_D - params.r_f)
        D = (1 - rho) * A + rho * B
        second = (1 - rho) * A**2 + rho * B**2
        num = D * (1 + s2 / 2) - 1
        den = (1 - rho) * (A - 1) ** 2 + rho * (B - 1) ** 2 + (2 * second - D) * s2 + 0.75 * second * s2**2
        lam = num / den
    # the fraction decays like 1/A or 1/B at extreme mispricing; overflow
    # there leaves inf/inf, whose limit is zero
    return np.where(np.isfinite(lam), lam, 0.0)


def eco_lambda(spec: StrategySpec, params: ModelParams, log_q, cache: InterpolantCache | None = None) -> np.ndarray:
    log_q = np.asarray(log_q, dtype=float)
    if spec.solver_mode == "numeric":
        lam = (cache or _default_cache).get(params).unconstrained(log_q)
    elif spec.solver_mode == "exact":
        p = params
        lam = kelly.solve_lambda_batch(log_q, p.r_D, p.sigma, p.rho, p.k_bar, p.sigma_kappa, p.r_f)
    elif spec.solver_mode == "approx":
        lam = approx_lambda_array(params, log_q)
    else:
        raise ValueError(f"unknown solver_mode {spec.solver_mode!r}")
    return spec.bounds.clip(lam)


def constant_fraction(spec: StrategySpec, params: ModelParams) -> float:
    if spec.kind is Kind.BUY_AND_HOLD:
        return 1.0
    if spec.kind is Kind.FIXED_FRACTION:
        return spec.fraction
    if spec.kind is Kind.CLASSICAL_KELLY:
        mu = kelly.classical_kelly_drift(params, spec.mu_mode)
        return kelly.classical_kelly_lambda(mu, params.r_f, params.sigma, spec.bounds)
    raise ValueError(f"{spec.label} has no constant fraction")


def allocate(spec: StrategySpec, params: ModelParams, q: float, cache: InterpolantCache | None = None) -> float:
    """Fraction held in the risky asset given the inverted mispricing ``q``."""
    if not q > 0:
        raise ValueError("q must be positive")
    if spec.kind is Kind.ECO_KELLY:
        return float(eco_lambda(spec, params, math.log(q), cache))
    return constant_fraction(spec, params)


def allocation_series(spec: StrategySpec, params: ModelParams, log_q, cache: InterpolantCache | None = None) -> np.ndarray:
    """Fractions for every decision time; ``log_q`` has shape ``(..., T)``."""
    log_q = np.asarray(log_q, dtype=float)
    if spec.kind is Kind.ECO_KELLY:
        return eco_lambda(spec, params, log_q, cache)
    return np.full(log_q.shape, constant_fraction(spec, params))


def perceived_log_q(log_price, log_normal_price, r_N_true: float, r_N_estimate: float) -> np.ndarray:
    """``ln q`` as seen by an investor who believes the normal price grows at ``r_N_estimate``."""
    if r_N_estimate == r_N_true:
        return log_normal_price - log_price
    t = np.arange(np.shape(log_price)[-1])
    return log_normal_price + (r_N_estimate - r_N_true) * t - log_price


def wealth_increments(lam, log_returns, r_f: float):
    """Per-step log growth of wealth and the ruin mask.

    Returns ``(g, ruined)`` with ``g = log(lam*e^r + (1-lam)*e^r_f)`` wherever
    the bracket is positive. ``lam == 1`` gives ``g == r`` and ``lam == 0``
    gives ``g == r_f`` exactly.
    """
    lam = np.asarray(lam, dtype=float)
    r = np.asarray(log_returns, dtype=float)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        rel = np.where(lam == 1, 0.0, (1 - lam) * np.expm1(r_f - r))
        ruined = ~(rel > -1)
        g = np.where(lam == 0, r_f, r + np.log1p(np.where(ruined, 0.0, rel)))
    return g, ruined


def apply_default(lam, g, ruined):
    """Freeze wealth after the first ruin step.

    Returns ``(lam, log_wealth, default_step)``; ``log_wealth`` has one more
    column than ``lam`` (index 0 is ``ln W_0 = 0``), ``default_step`` is the
    wealth index at which wealth first hits zero or -1.
    """
    lam = np.array(lam, dtype=float, copy=True)
    g = np.array(g, dtype=float, copy=True)
    ruined = np.atleast_2d(ruined)
    lam2, g2 = np.atleast_2d(lam), np.atleast_2d(g)
    S, T = g2.shape
    any_ruin = ruined.any(axis=1)
    first = np.where(any_ruin, ruined.argmax(axis=1), T)
    cols = np.arange(T)
    g2[cols[None, :] >= first[:, None]] = -np.inf
    lam2[cols[None, :] > first[:, None]] = 0.0
    log_w = np.zeros((S, T + 1))
    np.cumsum(g2, axis=1, out=log_w[:, 1:])
    default_step = np.where(any_ruin, first + 1, -1)
    shape = np.shape(lam)
    if len(shape) == 1:
        return lam2[0], log_w[0], int(default_step[0])
    return lam2, log_w, default_step


@dataclass
class PortfolioPath:
    log_wealth: np.ndarray
    lam: np.ndarray
    default_step: int
    strategy: StrategySpec
    source: PricePath | None = field(default=None, repr=False)

    @property
    def wealth(self) -> np.ndarray:
        return np.exp(self.log_wealth)

    @property
    def defaulted(self) -> bool:
        return self.default_step >= 0

    @property
    def horizon(self) -> int:
        return len(self.lam)

    @property
    def returns(self) -> np.ndarray:
        """Per-step log returns of wealth (``-inf`` from the default step)."""
        return np.diff(self.log_wealth)


def replay_log_wealth(lam, log_price, r_f: float) -> np.ndarray:
    """Recompute log wealth from a fraction series and a log price series."""
    g, ruined = wealth_increments(lam, np.diff(log_price), r_f)
    return apply_default(lam, g, ruined)[1]


def simulate_portfolio(
    spec: StrategySpec,
    params: ModelParams,
    path: PricePath,
    estimate: ModelParams | None = None,
    cache: InterpolantCache | None = None,
) -> PortfolioPath:
    """Run one strategy over one path.

    ``estimate`` is the parameter set the strategy believes in; it defaults to
    the true ``params``.
    """
    est = estimate or params
    log_q = perceived_log_q(path.log_price, path.log_normal_price, params.r_N, est.r_N)[:-1]
    lam = allocation_series(spec, est, log_q, cache)
    g, ruined = wealth_increments(lam, path.log_returns, params.r_f)
    lam, log_w, default_step = apply_default(lam, g, ruined)
    return PortfolioPath(log_w, lam, default_step, spec, path)


def run_all_strategies(
    params: ModelParams,
    path: PricePath,
    strategies: list[StrategySpec] | None = None,
    cache: InterpolantCache | None = None,
) -> dict[str, PortfolioPath | Exception]:
    """Every strategy on the same path; a failing strategy yields its exception instead of a path."""
    out: dict[str, PortfolioPath | Exception] = {}
    for spec in strategies or standard_strategies():
        try:
            out[spec.label] = simulate_portfolio(spec, params, path, cache=cache)
        except (ValueError, ArithmeticError) as exc:
            out[spec.label] = exc
    return out
