"""Reduced efficient-crashes price process.

Prices follow a geometric random walk whose drift depends on the log
mispricing ``ln q = ln(N/p)`` against an exponential normal price ``N``. With
probability ``rho`` a step is a corrective jump of relative size ``kappa``
that moves the log price by ``kappa * ln q``; otherwise the drift is chosen so
that the one-step expected log return equals ``r_D`` at every mispricing.

All rates and volatilities are per step (one business day). Paths are
generated in log space: ``log_price[t+1] = log_price[t] + (a_t + sigma*eps_t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from .streams import PathStreams, draw_block

TRADING_DAYS = 252
# largest log price whose exponential is still a finite double
LOG_PRICE_MAX = math.log(np.finfo(float).max)


class PathGenerationError(RuntimeError):
    """Raised when simulated prices leave the floating point range."""

    def __init__(self, indices):
        self.indices = sorted(int(i) for i in indices)
        super().__init__(f"price overflow in simulations {self.indices}")


@dataclass(frozen=True)
class ModelParams:
    r_D: float
    r_N: float
    sigma: float
    rho: float
    k_bar: float
    sigma_kappa: float
    r_f: float = 0.0
    p0: float = 1.0

    def __post_init__(self):
        for name in ("r_D", "r_N", "sigma", "rho", "k_bar", "sigma_kappa", "r_f", "p0"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        # rho == 1 is admitted for perturbed estimates fed to the Kelly
        # objective; path generation requires rho < 1
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho={self.rho} outside the admissible range [0, 1)")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.sigma_kappa < 0:
            raise ValueError("sigma_kappa must be >= 0")
        if self.p0 <= 0:
            raise ValueError("p0 must be > 0")

    @classmethod
    def base(cls) -> ModelParams:
        rate = math.log(1.07) / TRADING_DAYS
        return cls(
            r_D=rate,
            r_N=rate,
            sigma=0.17 / math.sqrt(TRADING_DAYS),
            rho=0.01,
            k_bar=0.3,
            sigma_kappa=0.2,
            r_f=0.0,
            p0=1.0,
        )

    @classmethod
    def from_annual(
        cls,
        discount_rate=0.07,
        normal_rate=0.07,
        volatility=0.17,
        jump_probability=0.01,
        mean_jump_size=0.3,
        jump_size_std=0.2,
        risk_free_rate=0.0,
        p0=1.0,
    ) -> ModelParams:
        """Build per-step parameters from annual growth rates and volatility.

        A growth rate ``g`` becomes ``ln(1 + g) / 252`` per step and an annual
        volatility ``v`` becomes ``v / sqrt(252)``.
        """
        return cls(
            r_D=math.log(1.0 + discount_rate) / TRADING_DAYS,
            r_N=math.log(1.0 + normal_rate) / TRADING_DAYS,
            sigma=volatility / math.sqrt(TRADING_DAYS),
            rho=jump_probability,
            k_bar=mean_jump_size,
            sigma_kappa=jump_size_std,
            r_f=math.log(1.0 + risk_free_rate) / TRADING_DAYS,
            p0=p0,
        )

    def replace(self, **changes) -> ModelParams:
        return replace(self, **changes)

    @property
    def amplification(self) -> float:
        """Per-step growth factor of the log mispricing between jumps (r_D = r_N, sigma = 0)."""
        return 1.0 + self.rho * self.k_bar / (1.0 - self.rho)


def no_jump_drift(r_D, rho, k_bar, log_q):
    """Drift on a no-jump step given ``ln q``; works on floats and arrays alike."""
    return r_D - rho * k_bar * log_q / (1 - rho)


def expected_return(params: ModelParams, q):
    """No-jump expected log return that makes the one-step expected log return equal ``r_D``."""
    q_arr = np.asarray(q, dtype=float)
    if np.any(~(q_arr > 0)):
        raise ValueError("q must be positive")
    if params.rho >= 1:
        raise ValueError("expected return undefined for rho >= 1")
    out = no_jump_drift(params.r_D, params.rho, params.k_bar, np.log(q_arr))
    return float(out) if out.ndim == 0 else out


class Branch(IntEnum):
    NO_JUMP = 0
    JUMP = 1


@dataclass(frozen=True)
class PathStep:
    """State at one time index plus the draws of the transition that produced it.

    The initial state carries no transition: ``eps``, ``kappa`` and
    ``expected_return`` are NaN and ``branch`` is None.
    """

    log_price: float
    log_normal_price: float
    eps: float = math.nan
    branch: Branch | None = None
    kappa: float = math.nan
    expected_return: float = math.nan

    @property
    def price(self) -> float:
        return math.exp(self.log_price)

    @property
    def normal_price(self) -> float:
        return math.exp(self.log_normal_price)

    @property
    def q(self) -> float:
        return self.normal_price / self.price

    @property
    def log_q(self) -> float:
        return self.log_normal_price - self.log_price

    @classmethod
    def initial(cls, params: ModelParams, log_mispricing: float = 0.0) -> PathStep:
        log_p0 = math.log(params.p0)
        return cls(log_price=log_p0 + log_mispricing, log_normal_price=log_p0)


def step(params: ModelParams, state: PathStep, uniform_draw: float, gauss_draw: float, kappa_draw: float) -> PathStep:
    """Advance one step. ``kappa_draw`` is the jump size itself and is ignored on no-jump steps."""
    if not math.isfinite(state.log_price):
        raise ValueError("state price must be positive and finite")
    log_q = state.log_normal_price - state.log_price
    nj = no_jump_drift(params.r_D, params.rho, params.k_bar, log_q)
    if uniform_draw <= params.rho:
        branch, kappa = Branch.JUMP, kappa_draw
        a = params.r_D + kappa_draw * log_q
    else:
        branch, kappa = Branch.NO_JUMP, math.nan
        a = nj
    log_price = state.log_price + (a + params.sigma * gauss_draw)
    if not log_price <= LOG_PRICE_MAX:
        raise PathGenerationError([0])
    return PathStep(
        log_price=log_price,
        log_normal_price=state.log_normal_price + params.r_N,
        eps=gauss_draw,
        branch=branch,
        kappa=kappa,
        expected_return=nj,
    )


def simulate_log_prices(r_D, r_N, sigma, rho, k_bar, sigma_kappa, log_p0, u, eps, z, log_mispricing0=0.0):
    """Vectorized generator over a block of simulations.

    ``u``, ``eps`` and ``z`` have shape ``(S, T)``; parameters are scalars or
    length-``S`` arrays. Returns ``(log_price, log_normal, jump, kappa, failed)``
    where the first two have shape ``(S, T + 1)``.
    """
    u = np.atleast_2d(u)
    S, T = u.shape
    r_D, r_N, sigma, rho, k_bar, sigma_kappa = (
        np.broadcast_to(np.asarray(v, dtype=float), (S,)) for v in (r_D, r_N, sigma, rho, k_bar, sigma_kappa)
    )
    if np.any(rho >= 1):
        raise ValueError("path generation requires rho < 1")
    jump = u <= rho[:, None]
    kappa = k_bar[:, None] + sigma_kappa[:, None] * z
    x = np.empty((S, T + 1))
    n = np.empty((S, T + 1))
    n[:, 0] = log_p0
    x[:, 0] = log_p0 + log_mispricing0
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T):
            log_q = n[:, t] - x[:, t]
            a = np.where(jump[:, t], r_D + kappa[:, t] * log_q, no_jump_drift(r_D, rho, k_bar, log_q))
            x[:, t + 1] = x[:, t] + (a + sigma * eps[:, t])
            n[:, t + 1] = n[:, t] + r_N
    failed = ~np.all(x <= LOG_PRICE_MAX, axis=1)
    return x, n, jump, np.where(jump, kappa, np.nan), failed


@dataclass
class PricePath:
    """A simulated trajectory of ``horizon + 1`` states stored column-wise."""

    log_price: np.ndarray
    log_normal_price: np.ndarray
    eps: np.ndarray
    jump: np.ndarray
    kappa: np.ndarray
    params: ModelParams
    seed_info: tuple | None = None
    failed: bool = False
    _drift: np.ndarray | None = field(default=None, repr=False)

    @property
    def horizon(self) -> int:
        return len(self.log_price) - 1

    @property
    def prices(self) -> np.ndarray:
        return np.exp(self.log_price)

    @property
    def normal_prices(self) -> np.ndarray:
        return np.exp(self.log_normal_price)

    @property
    def log_q(self) -> np.ndarray:
        return self.log_normal_price - self.log_price

    @property
    def q(self) -> np.ndarray:
        return self.normal_prices / self.prices

    @property
    def log_returns(self) -> np.ndarray:
        return np.diff(self.log_price)

    @property
    def expected_returns(self) -> np.ndarray:
        """No-jump drift used on each transition (NaN at index 0)."""
        if self._drift is None:
            p = self.params
            d = np.full(len(self.log_price), np.nan)
            d[1:] = no_jump_drift(p.r_D, p.rho, p.k_bar, self.log_q[:-1])
            self._drift = d
        return self._drift

    def __len__(self):
        return len(self.log_price)

    def __getitem__(self, t: int) -> PathStep:
        if t == 0 or t == -len(self):
            return PathStep(float(self.log_price[0]), float(self.log_normal_price[0]))
        jumped = bool(self.jump[t])
        return PathStep(
            log_price=float(self.log_price[t]),
            log_normal_price=float(self.log_normal_price[t]),
            eps=float(self.eps[t]),
            branch=Branch.JUMP if jumped else Branch.NO_JUMP,
            kappa=float(self.kappa[t]) if jumped else math.nan,
            expected_return=float(self.expected_returns[t]),
        )

    @property
    def steps(self) -> list[PathStep]:
        return [self[t] for t in range(len(self))]


def _paths_from_block(params, x, n, eps, jump, kappa, failed, seed_infos):
    paths = []
    for row, info in enumerate(seed_infos):
        e = np.empty(x.shape[1])
        e[0] = np.nan
        e[1:] = eps[row]
        j = np.zeros(x.shape[1], dtype=bool)
        j[1:] = jump[row]
        k = np.full(x.shape[1], np.nan)
        k[1:] = kappa[row]
        paths.append(PricePath(x[row], n[row], e, j, k, params, info, bool(failed[row])))
    return paths


def generate_path(
    params: ModelParams,
    horizon: int,
    streams: PathStreams,
    log_mispricing0: float = 0.0,
    seed_info=None,
) -> PricePath:
    """Simulate one path of ``horizon`` steps from ``streams``.

    Raises PathGenerationError if the price overflows.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    u, eps, z = (d[None, :] for d in streams.draw(horizon))
    p = params
    x, n, jump, kappa, failed = simulate_log_prices(
        p.r_D, p.r_N, p.sigma, p.rho, p.k_bar, p.sigma_kappa, math.log(p.p0), u, eps, z, log_mispricing0
    )
    path = _paths_from_block(p, x, n, eps, jump, kappa, failed, [seed_info])[0]
    if path.failed:
        raise PathGenerationError([seed_info[1] if seed_info else 0])
    return path


def generate_paths(
    params: ModelParams,
    horizon: int,
    master_seed: int,
    indices,
    allow_failures: bool = False,
    log_mispricing0: float = 0.0,
) -> list[PricePath]:
    """Simulate the paths with the given simulation indices, in the given order."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    indices = list(indices)
    u, eps, z = draw_block(master_seed, indices, horizon)
    p = params
    x, n, jump, kappa, failed = simulate_log_prices(
        p.r_D, p.r_N, p.sigma, p.rho, p.k_bar, p.sigma_kappa, math.log(p.p0), u, eps, z, log_mispricing0
    )
    if failed.any() and not allow_failures:
        raise PathGenerationError(np.asarray(indices)[failed])
    infos = [(master_seed, j) for j in indices]
    return _paths_from_block(p, x, n, eps, jump, kappa, failed, infos)


def generate_ensemble(
    params: ModelParams,
    horizon: int,
    count: int,
    master_seed: int,
    allow_failures: bool = False,
    chunk_size: int = 256,
) -> list[PricePath]:
    """Simulate ``count`` independent paths; path ``j`` depends only on ``(master_seed, j)``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    out = []
    for start in range(0, count, chunk_size):
        out.extend(
            generate_paths(params, horizon, master_seed, range(start, min(count, start + chunk_size)), allow_failures)
        )
    return out
