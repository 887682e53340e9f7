"""Optimal Kelly fractions for the efficient-crashes process.

The one-step expected log growth of a portfolio holding a fraction ``lam`` in
the risky asset is evaluated by quadrature: the jump-size distribution is
replaced by a Gauss-Hermite menu ``{(kappa_i, eta_i)}`` and the Gaussian
noise by Gauss-Hermite nodes. Writing ``e = exp(a + sigma*x - r_f) - 1`` for
the excess gross return at each node, the objective is

    r_f + sum_nodes weight * log1p(lam * e)

which is concave in ``lam`` and finite on an open interval that always
contains [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import ModelParams, no_jump_drift

DEFAULT_JUMP_NODES = 7
DEFAULT_GAUSS_NODES = 21
# hard limit on |lam| for objectives that are unbounded in one direction
# (only possible with sigma == 0)
LAMBDA_CAP = 100.0

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class InfeasibleBoundsError(ValueError):
    pass


@dataclass(frozen=True)
class LambdaBounds:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty bounds [{self.lo}, {self.hi}]")

    def clip(self, lam):
        return np.clip(lam, self.lo, self.hi)

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lo) or math.isfinite(self.hi)

    def label(self) -> str:
        fmt = lambda v: ("-inf" if v < 0 else "inf") if math.isinf(v) else f"{v:g}"
        return f"[{fmt(self.lo)},{fmt(self.hi)}]"


BOUNDED = LambdaBounds(-1.0, 2.0)
UNBOUNDED = LambdaBounds(-math.inf, math.inf)


@dataclass(frozen=True)
class JumpMenu:
    kappa: np.ndarray
    eta: np.ndarray

    @property
    def count(self) -> int:
        return len(self.kappa)

    @property
    def mean(self) -> float:
        return float(np.dot(self.eta, self.kappa))

    @property
    def variance(self) -> float:
        return float(np.dot(self.eta, (self.kappa - self.mean) ** 2))

    @property
    def entries(self):
        return list(zip(self.kappa.tolist(), self.eta.tolist()))


@lru_cache(maxsize=None)
def _hermite(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.hermite.hermgauss(n)
    return np.sqrt(2.0) * x, w / math.sqrt(math.pi)


def gauss_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights integrating against the standard normal density."""
    if n < 1:
        raise ValueError("node count must be >= 1")
    x, w = _hermite(n)
    return x.copy(), w.copy()


def discretize_jump_distribution(k_bar: float, sigma_kappa: float, n: int = DEFAULT_JUMP_NODES) -> JumpMenu:
    x, w = gauss_nodes(n)
    return JumpMenu(kappa=k_bar + sigma_kappa * x, eta=w)


def _node_arrays(log_q, r_D, sigma, rho, k_bar, sigma_kappa, r_f, n_jump, n_gauss):
    """Excess returns ``e`` and weights ``w`` of every quadrature node.

    Scalars or arrays broadcast against ``log_q``; the result has shape
    ``log_q.shape + (K,)`` with ``K = (n_jump + 1) * n_gauss``.
    """
    log_q, r_D, sigma, rho, k_bar, sigma_kappa, r_f = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (log_q, r_D, sigma, rho, k_bar, sigma_kappa, r_f))
    )
    xj, wj = _hermite(n_jump)
    xg, wg = _hermite(n_gauss)
    e1 = lambda v: v[..., None]
    kappa = e1(k_bar) + e1(sigma_kappa) * xj
    safe_rho = np.where(rho < 1, rho, 0.0)
    drift = no_jump_drift(r_D, safe_rho, k_bar, log_q)
    # branch means: no-jump first, then one per jump node
    means = np.concatenate([e1(drift), kappa * e1(log_q) + e1(r_D)], axis=-1)
    bweights = np.concatenate([e1(1 - rho), e1(rho) * wj], axis=-1)
    z = means[..., :, None] + sigma[..., None, None] * xg - r_f[..., None, None]
    w = bweights[..., :, None] * wg
    shape = log_q.shape + (-1,)
    # gross returns beyond e**300 only occur at absurd mispricings; capping
    # them keeps e**2 finite in the solver
    e = np.expm1(np.minimum(z, 300.0)).reshape(shape)
    w = w.reshape(shape)
    # nodes of probability zero (rho == 1 drops the no-jump branch) are ignored
    e = np.where(w > 0, e, 0.0)
    return e, w, r_f


def _feasible(e, w):
    with np.errstate(divide="ignore", over="ignore"):
        inv = -1.0 / e
    lo = np.max(np.where((e > 0) & (w > 0), inv, -np.inf), axis=-1)
    hi = np.min(np.where((e < 0) & (w > 0), inv, np.inf), axis=-1)
    return np.maximum(lo, -LAMBDA_CAP), np.minimum(hi, LAMBDA_CAP)


def _check_q(q):
    if not q > 0:
        raise ValueError(f"q must be positive, got {q}")


def _nodes_for(params: ModelParams, q: float, menu: JumpMenu | None, n_gauss: int):
    _check_q(q)
    if menu is None:
        menu = discretize_jump_distribution(params.k_bar, params.sigma_kappa)
    log_q = math.log(q)
    xg, wg = gauss_nodes(n_gauss)
    means = [params.r_D + k * log_q for k in menu.kappa]
    bweights = [params.rho * h for h in menu.eta]
    if params.rho < 1:
        means.insert(0, no_jump_drift(params.r_D, params.rho, params.k_bar, log_q))
        bweights.insert(0, 1 - params.rho)
    means = np.array(means)
    z = means[:, None] + params.sigma * xg - params.r_f
    w = np.array(bweights)[:, None] * wg
    with np.errstate(over="ignore"):
        e = np.expm1(z).ravel()
    w = w.ravel()
    # zero-probability nodes (rho == 0) cannot ruin the portfolio
    keep = w > 0
    return e[keep], w[keep]


def expected_log_growth(lam, params: ModelParams, q: float, menu: JumpMenu | None = None, gauss_nodes: int = DEFAULT_GAUSS_NODES) -> float:
    """Expected one-step log growth of wealth; ``-inf`` when some node ruins the portfolio."""
    if gauss_nodes < 3:
        raise ValueError("at least 3 Gaussian nodes are required")
    e, w = _nodes_for(params, q, menu, gauss_nodes)
    if lam == 0:
        return params.r_f
    growth = lam * e
    if np.any(growth <= -1) or not np.all(np.isfinite(growth)):
        return -math.inf
    return params.r_f + math.fsum(w * np.log1p(growth))


def feasible_interval(params: ModelParams, q: float, menu: JumpMenu | None = None, gauss_nodes: int = DEFAULT_GAUSS_NODES):
    """Open interval of fractions with a finite objective, intersected with the leverage cap."""
    e, w = _nodes_for(params, q, menu, gauss_nodes)
    lo, hi = _feasible(e, w)
    return float(lo), float(hi)


def golden_section_max(f, a: float, b: float, tol: float) -> float:
    """Maximizer of a unimodal ``f`` on ``[a, b]`` to within ``tol``."""
    if b - a <= tol:
        return 0.5 * (a + b)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def optimal_lambda_numeric(
    params: ModelParams,
    q: float,
    menu: JumpMenu | None = None,
    bounds: LambdaBounds = UNBOUNDED,
    tol: float = 1e-8,
    gauss_nodes: int = DEFAULT_GAUSS_NODES,
) -> float:
    """Kelly fraction by golden-section search over the finite-objective interval.

    If the maximizer sits on the ruin boundary the result is ``tol`` inside it.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if menu is None:
        menu = discretize_jump_distribution(params.k_bar, params.sigma_kappa)
    lo_f, hi_f = feasible_interval(params, q, menu, gauss_nodes)
    a = max(bounds.lo, lo_f + tol if lo_f > -LAMBDA_CAP else lo_f)
    b = min(bounds.hi, hi_f - tol if hi_f < LAMBDA_CAP else hi_f)
    if a > b:
        raise InfeasibleBoundsError(f"bounds {bounds.label()} miss the finite-objective interval ({lo_f}, {hi_f})")
    if a == b:
        return a
    f = lambda lam: expected_log_growth(lam, params, q, menu, gauss_nodes)
    best = golden_section_max(f, a, b, tol)
    best = _polish(params, q, menu, gauss_nodes, best, a, b, tol)
    # concavity: a maximizer within tol of a bound is the bound itself
    for edge in (a, b):
        if abs(best - edge) <= tol and f(edge) >= f(best):
            return edge
    return best


def _polish(params, q, menu, gauss_nodes, lam, a, b, tol):
    """Bisect on the sign of the derivative around a golden-section estimate.

    Near the maximum the objective is flat to within rounding, so comparing
    function values cannot resolve the maximizer much below ``1e-7``; the
    derivative keeps its sign information down to ``tol``.
    """
    e, w = _nodes_for(params, q, menu, gauss_nodes)

    def slope(x):
        return math.fsum(w * e / (1.0 + x * e))

    h = 1e-5 * max(1.0, abs(lam))
    lo, hi = max(a, lam - h), min(b, lam + h)
    while lo > a and slope(lo) < 0:
        lo = max(a, lo - 4 * h)
    while hi < b and slope(hi) > 0:
        hi = min(b, hi + 4 * h)
    if slope(lo) <= 0:
        return lo
    if slope(hi) >= 0:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if slope(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class ApproxSolutionTerms:
    A: float
    B: float
    D: float
    H2: float
    H3: float

    @classmethod
    def evaluate(cls, params: ModelParams, q: float) -> ApproxSolutionTerms:
        _check_q(q)
        rho, s2 = params.rho, params.sigma**2
        log_q = math.log(q)
        A = math.exp(no_jump_drift(params.r_D, rho, params.k_bar, log_q) - params.r_f)
        B = math.exp(params.k_bar * log_q + params.r_D - params.r_f)
        D = (1 - rho) * A + rho * B
        second = (1 - rho) * A**2 + rho * B**2
        H2 = (2 * second - D) * s2
        # fourth-order noise term; with sigma**2 here the closed form misses the
        # numerical optimum by a factor of ~1.75
        H3 = second * 0.75 * s2**2
        return cls(A, B, D, H2, H3)


def optimal_lambda_approx(params: ModelParams, q: float, bounds: LambdaBounds = UNBOUNDED) -> float:
    """Closed-form second-order approximation of the Kelly fraction, clipped to ``bounds``."""
    t = ApproxSolutionTerms.evaluate(params, q)
    rho = params.rho
    num = t.D * (1 + params.sigma**2 / 2) - 1
    den = (1 - rho) * (t.A - 1) ** 2 + rho * (t.B - 1) ** 2 + t.H2 + t.H3
    if den == 0:
        raise ZeroDivisionError(f"degenerate approximation terms {t}")
    return float(bounds.clip(num / den))


def optimal_lambda_approx_simple(params: ModelParams, q: float) -> float:
    """Leading-order form of the closed-form approximation in the per-step rates."""
    _check_q(q)
    rho, rf = params.rho, params.r_f
    log_q = math.log(q)
    rbar = no_jump_drift(params.r_D, rho, params.k_bar, log_q)
    num = params.r_D - rf + params.sigma**2 / 2
    den = params.sigma**2 + (1 - rho) * (rbar - rf) ** 2 + rho * (params.k_bar * log_q + params.r_D - rf) ** 2
    return num / den


def classical_kelly_lambda(mu: float, r_f: float, sigma: float, bounds: LambdaBounds = UNBOUNDED) -> float:
    """GBM Kelly fraction ``(mu - r_f) / sigma**2``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return float(bounds.clip((mu - r_f) / sigma**2))


def classical_kelly_drift(params: ModelParams, mu_mode: str = "log") -> float:
    """Expected return fed to the classical Kelly rule.

    ``"log"`` uses the log drift ``r_D``; ``"arithmetic"`` uses ``r_D + sigma**2/2``.
    """
    if mu_mode == "log":
        return params.r_D
    if mu_mode == "arithmetic":
        return params.r_D + params.sigma**2 / 2
    raise ValueError(f"unknown mu_mode {mu_mode!r}")


def solve_lambda_batch(
    log_q,
    r_D,
    sigma,
    rho,
    k_bar,
    sigma_kappa,
    r_f=0.0,
    n_jump: int = DEFAULT_JUMP_NODES,
    n_gauss: int = DEFAULT_GAUSS_NODES,
    tol: float = 1e-12,
    max_iter: int = 200,
    block: int = 4096,
) -> np.ndarray:
    """Unconstrained Kelly fractions for many states at once.

    Safeguarded Newton iteration on the derivative of the objective, which is
    strictly decreasing on the finite-objective interval. Parameters broadcast
    against ``log_q``. Used to tabulate fractions; ``optimal_lambda_numeric``
    is the scalar reference.
    """
    arrays = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (log_q, r_D, sigma, rho, k_bar, sigma_kappa, r_f)))
    shape = arrays[0].shape
    flat = [a.ravel() for a in arrays]
    out = np.empty(flat[0].size)
    for start in range(0, out.size, block):
        sl = slice(start, start + block)
        out[sl] = _solve_block(*(a[sl] for a in flat), n_jump, n_gauss, tol, max_iter)
    return out.reshape(shape)


def _solve_block(log_q, r_D, sigma, rho, k_bar, sigma_kappa, r_f, n_jump, n_gauss, tol, max_iter):
    e, w, _ = _node_arrays(log_q, r_D, sigma, rho, k_bar, sigma_kappa, r_f, n_jump, n_gauss)
    lo, hi = _feasible(e, w)
    step_in = np.maximum(tol, 1e-9 * np.maximum(1.0, np.abs(np.stack([lo, hi]))))
    a = np.where(lo > -LAMBDA_CAP, lo + step_in[0], lo)
    b = np.where(hi < LAMBDA_CAP, hi - step_in[1], hi)

    def slope(lam, rows):
        ee = e[rows]
        g = ee / (1.0 + lam[:, None] * ee)
        return np.sum(w[rows] * g, axis=-1), -np.sum(w[rows] * g * g, axis=-1)

    every = np.arange(len(a))
    da, _ = slope(a, every)
    db, _ = slope(b, every)
    lam = np.empty_like(a)
    at_hi = db >= 0
    at_lo = (da <= 0) & ~at_hi
    lam[at_hi] = b[at_hi]
    lam[at_lo] = a[at_lo]
    # rows leave the iteration as soon as they converge, so each row's result
    # does not depend on the other rows of the batch
    active = np.flatnonzero(~(at_hi | at_lo))
    if not active.size:
        return lam
    la, lb = a[active], b[active]
    num = np.sum(w[active] * e[active], axis=-1)
    den = np.sum(w[active] * e[active] ** 2, axis=-1)
    x = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    x = np.where((x > la) & (x < lb), x, 0.5 * (la + lb))
    for _ in range(max_iter):
        d, dd = slope(x, active)
        la = np.where(d > 0, x, la)
        lb = np.where(d <= 0, x, lb)
        with np.errstate(divide="ignore", invalid="ignore"):
            nx = x - d / dd
        nx = np.where((nx > la) & (nx < lb), nx, 0.5 * (la + lb))
        done = (np.abs(nx - x) <= tol * np.maximum(1.0, np.abs(x))) | (lb - la <= tol)
        lam[active[done]] = nx[done]
        keep = ~done
        active, x, la, lb = active[keep], nx[keep], la[keep], lb[keep]
        if not active.size:
            break
    lam[active] = x
    return lam


def lagrange4(values, k_first, t):
    """Four-point Lagrange interpolation on a uniform grid.

    ``values[..., i]`` is the value at grid index ``k_first + i``; ``t`` is the
    query position in grid units. The result only depends on the four nodes
    around each query, never on the extent of the table.
    """
    k = np.floor(t)
    f = t - k
    idx = (k - k_first).astype(np.int64)
    w_m1 = -f * (f - 1) * (f - 2) / 6
    w_0 = (f + 1) * (f - 1) * (f - 2) / 2
    w_1 = -(f + 1) * f * (f - 2) / 2
    w_2 = (f + 1) * f * (f - 1) / 6
    pick = lambda off: np.take_along_axis(values, idx + off, axis=-1) if values.ndim > 1 else values[idx + off]
    return w_m1 * pick(-1) + w_0 * pick(0) + w_1 * pick(1) + w_2 * pick(2)


class LambdaInterpolant:
    """Tabulated Kelly fraction as a function of ``ln q`` for fixed parameters.

    The unconstrained maximizer is tabulated at ``ln q = k * spacing`` and
    interpolated locally with four-point Lagrange polynomials; bounds are
    applied by clipping, which is exact because the objective is concave.
    Queries outside the table add exactly solved nodes; nothing is
    extrapolated. At construction the spacing is halved until the error at
    cell midpoints of the initial range is below ``tol``.
    """

    def __init__(
        self,
        params: ModelParams,
        bounds: LambdaBounds = UNBOUNDED,
        log_q_range: tuple[float, float] = (-1.0, 1.0),
        spacing: float = 0.02,
        tol: float = 1e-6,
        n_jump: int = DEFAULT_JUMP_NODES,
        n_gauss: int = DEFAULT_GAUSS_NODES,
    ):
        self.params = params
        self.bounds = bounds
        self.n_jump = n_jump
        self.n_gauss = n_gauss
        self.tol = tol
        lo, hi = log_q_range
        while True:
            self.spacing = spacing
            self._k_lo = math.floor(lo / spacing) - 1
            self._k_hi = math.ceil(hi / spacing) + 2
            self._values = self._solve(np.arange(self._k_lo, self._k_hi + 1))
            mids = (np.arange(self._k_lo + 1, self._k_hi - 2) + 0.5) * spacing
            err = np.max(np.abs(self.unconstrained(mids) - self._solve_at(mids)))
            if err < tol or spacing < 1e-4:
                self.midpoint_error = float(err)
                break
            spacing /= 2

    def _solve_at(self, log_q):
        p = self.params
        return solve_lambda_batch(log_q, p.r_D, p.sigma, p.rho, p.k_bar, p.sigma_kappa, p.r_f, self.n_jump, self.n_gauss)

    def _solve(self, k):
        return self._solve_at(k * self.spacing)

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self._k_lo, self._k_hi + 1) * self.spacing

    @property
    def values(self) -> np.ndarray:
        return self._values

    def extend(self, lo: float, hi: float) -> None:
        """Add nodes so that every query in ``[lo, hi]`` has its four neighbours, plus a margin."""
        h = self.spacing
        margin = 0.25 * (hi - lo) + 8 * h
        need_lo = math.floor(lo / h) - 1
        need_hi = math.floor(hi / h) + 2
        if need_lo < self._k_lo:
            k_lo = math.floor((lo - margin) / h) - 1
            self._values = np.concatenate([self._solve(np.arange(k_lo, self._k_lo)), self._values])
            self._k_lo = k_lo
        if need_hi > self._k_hi:
            k_hi = math.floor((hi + margin) / h) + 2
            self._values = np.concatenate([self._values, self._solve(np.arange(self._k_hi + 1, k_hi + 1))])
            self._k_hi = k_hi

    def unconstrained(self, log_q) -> np.ndarray:
        log_q = np.asarray(log_q, dtype=float)
        if log_q.size:
            lo, hi = float(np.min(log_q)), float(np.max(log_q))
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError("log q must be finite")
            self.extend(lo, hi)
        return lagrange4(self._values, self._k_lo, log_q / self.spacing)

    def at_log_q(self, log_q) -> np.ndarray:
        return self.bounds.clip(self.unconstrained(log_q))

    def __call__(self, q):
        return self.at_log_q(np.log(np.asarray(q, dtype=float)))
