"""Performance metrics for ensembles of strategy wealth paths.

Per-path quantities (Sharpe, SDRSR, CALMAR, uptime) are computed on log
wealth arrays of shape ``(S, T + 1)`` and aggregated over the paths that did
not default: ratios by their mean, uptime by its median (the per-path
occupation fraction is strongly bimodal), growth by the annualized mean
terminal log wealth. Missing values (zero variance, no drawdown, no positive
or no negative outperformance) are NaN and are skipped.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

TRADING_DAYS = 252
MONTH = 21
FEE_YEAR = 250


@dataclass
class OutperformanceSample:
    values: np.ndarray
    excluded_defaults: int

    @property
    def m(self) -> int:
        return len(self.values) + self.excluded_defaults


def outperformance_from_log(log_w_T, log_p_T) -> OutperformanceSample:
    """Terminal log outperformance ``ln(W_T / P_T)``; defaulted runs (``ln W_T = -inf``) are excluded."""
    log_w_T = np.asarray(log_w_T, dtype=float)
    log_p_T = np.asarray(log_p_T, dtype=float)
    alive = np.isfinite(log_w_T)
    return OutperformanceSample(log_w_T[alive] - log_p_T[alive], int((~alive).sum()))


def outperformance(portfolios, benchmarks) -> OutperformanceSample:
    """Pair each strategy path with its buy-and-hold path (both start at 1)."""
    if len(portfolios) != len(benchmarks):
        raise ValueError("need one benchmark per portfolio")
    lw, lp = [], []
    for w, p in zip(portfolios, benchmarks):
        if w.horizon != p.horizon:
            raise ValueError(f"horizon mismatch: {w.horizon} vs {p.horizon}")
        lw.append(w.log_wealth[-1])
        lp.append(p.log_wealth[-1])
    return outperformance_from_log(lw, lp)


def _nanmean(x) -> float:
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    return float(np.mean(x)) if x.size else math.nan


def _nanmedian(x) -> float:
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    return float(np.median(x)) if x.size else math.nan


def prob_outperf(sample: OutperformanceSample) -> float:
    return 100.0 * np.count_nonzero(sample.values > 0) / sample.m


def avg_odds(sample: OutperformanceSample) -> float:
    """Mean positive outperformance over the magnitude of the mean negative one."""
    pos = sample.values[sample.values > 0]
    neg = sample.values[sample.values < 0]
    if not pos.size or not neg.size:
        return math.nan
    return float(np.mean(pos) / abs(np.mean(neg)))


def mean_outperf(sample: OutperformanceSample) -> float:
    return float(np.mean(sample.values)) if sample.values.size else math.nan


def prob_default(sample: OutperformanceSample) -> float:
    return 100.0 * sample.excluded_defaults / sample.m


def uptime(log_wealth, log_benchmark) -> np.ndarray:
    """Fraction of steps ``1..T`` at which wealth strictly exceeds the benchmark."""
    lw = np.atleast_2d(log_wealth)[:, 1:]
    lp = np.atleast_2d(log_benchmark)[:, 1:]
    out = np.mean(lw > lp, axis=1)
    return out if np.ndim(log_wealth) > 1 else float(out[0])


def sharpe_ratio(returns) -> np.ndarray:
    """Annualized mean over standard deviation of per-step log returns (risk-free rate 0).

    Population moments, so that a sample symmetric about zero gives the same
    denominator as the downside ratio.
    """
    r = np.atleast_2d(returns)
    # a constant sample has no spread, even if rounding leaves a tiny std
    sd = np.where(np.ptp(r, axis=1) > 0, np.std(r, axis=1), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(sd > 0, math.sqrt(TRADING_DAYS) * np.mean(r, axis=1) / sd, np.nan)
    return out if np.ndim(returns) > 1 else float(out[0])


def sdrsr(returns) -> np.ndarray:
    """Symmetric downside-risk Sharpe ratio: downside variance doubled, benchmark zero."""
    r = np.atleast_2d(returns)
    down = np.sqrt(2.0 * np.mean(np.minimum(r, 0.0) ** 2, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(down > 0, math.sqrt(TRADING_DAYS) * np.mean(r, axis=1) / down, np.nan)
    return out if np.ndim(returns) > 1 else float(out[0])


def calmar(log_wealth, month: int = MONTH) -> np.ndarray:
    """Monthly CALMAR ratio.

    Mean log return over consecutive ``month``-step blocks divided by the
    maximum fractional drawdown (peak to trough) of the wealth path. NaN when
    the path never draws down or is shorter than one month.
    """
    lw = np.atleast_2d(log_wealth)
    monthly = np.diff(lw[:, ::month], axis=1)
    peak = np.maximum.accumulate(lw, axis=1)
    mdd = np.max(-np.expm1(lw - peak), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        mean_month = np.mean(monthly, axis=1) if monthly.shape[1] else np.full(lw.shape[0], np.nan)
        out = np.where(mdd > 0, mean_month / mdd, np.nan)
    return out if np.ndim(log_wealth) > 1 else float(out[0])


def cagr(log_w_T, horizon: int) -> np.ndarray:
    """Compound annual growth rate in percent of individual paths (``W_0 = 1``)."""
    return 100.0 * np.expm1(np.asarray(log_w_T, dtype=float) * (TRADING_DAYS / horizon))


def ensemble_cagr(log_w_T, horizon: int) -> float:
    """CAGR of the ensemble: annualized mean terminal log wealth, in percent.

    Equivalent to the geometric mean of the per-path growth factors.
    """
    return float(cagr(_nanmean(log_w_T), horizon))


@dataclass
class MetricsReport:
    prob_outperf: float
    avg_odds: float
    mean_outperf: float
    prob_default: float
    uptime_fraction: float
    sharpe_ann: float
    calmar_mon: float
    sdrsr_ann: float
    cagr_pct_per_year: float
    m: int = 0
    included: int = 0
    defaults: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


METRIC_FIELDS = [f.name for f in fields(MetricsReport)][:9]
# row labels of the comparison tables, in column order of MetricsReport
METRIC_LABELS = {
    "prob_outperf": "Pr(W_T > P_T) [%]",
    "avg_odds": "Average Odds",
    "mean_outperf": "Outperformance",
    "prob_default": "Pr(W_T = 0) [%]",
    "uptime_fraction": "Fraction of Uptime [%]",
    "sharpe_ann": "Sharpe Ratio (ann.)",
    "calmar_mon": "CALMAR (mon.)",
    "sdrsr_ann": "SDRSR (ann.)",
    "cagr_pct_per_year": "CAGR [%/y]",
}


@dataclass
class PathMetrics:
    """Per-path statistics of one strategy over an ensemble (defaults included)."""

    log_w_T: np.ndarray
    log_p_T: np.ndarray
    uptime: np.ndarray
    sharpe: np.ndarray
    sdrsr: np.ndarray
    calmar: np.ndarray
    horizon: int

    @classmethod
    def from_log_wealth(cls, log_wealth, log_benchmark) -> PathMetrics:
        # growth is measured relative to the starting value of each path
        lw = np.atleast_2d(log_wealth)
        lw = lw - lw[:, :1]
        lp = np.atleast_2d(log_benchmark)
        lp = lp - lp[:, :1]
        alive = np.isfinite(lw[:, -1])
        nan = np.full(lw.shape[0], np.nan)
        sh, sd, ca = nan.copy(), nan.copy(), nan.copy()
        if alive.any():
            r = np.diff(lw[alive], axis=1)
            sh[alive] = sharpe_ratio(r)
            sd[alive] = sdrsr(r)
            ca[alive] = calmar(lw[alive])
        return cls(lw[:, -1], lp[:, -1], uptime(lw, lp), sh, sd, ca, lw.shape[1] - 1)

    @classmethod
    def concatenate(cls, parts) -> PathMetrics:
        parts = list(parts)
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts])
        return cls(*(cat(n) for n in ("log_w_T", "log_p_T", "uptime", "sharpe", "sdrsr", "calmar")), parts[0].horizon)


def metrics_report(pm: PathMetrics) -> MetricsReport:
    """Aggregate per-path statistics; log-based metrics use non-defaulted paths only."""
    sample = outperformance_from_log(pm.log_w_T, pm.log_p_T)
    alive = np.isfinite(pm.log_w_T)
    return MetricsReport(
        prob_outperf=prob_outperf(sample),
        avg_odds=avg_odds(sample),
        mean_outperf=mean_outperf(sample),
        prob_default=prob_default(sample),
        uptime_fraction=100.0 * _nanmedian(pm.uptime[alive]),
        sharpe_ann=_nanmean(pm.sharpe[alive]),
        calmar_mon=_nanmean(pm.calmar[alive]),
        sdrsr_ann=_nanmean(pm.sdrsr[alive]),
        cagr_pct_per_year=ensemble_cagr(pm.log_w_T[alive], pm.horizon),
        m=sample.m,
        included=len(sample.values),
        defaults=sample.excluded_defaults,
    )


def report_from_portfolios(portfolios, benchmarks) -> MetricsReport:
    lw = np.array([p.log_wealth for p in portfolios])
    lp = np.array([b.log_wealth for b in benchmarks])
    if lw.shape != lp.shape:
        raise ValueError("horizon mismatch between strategy and benchmark paths")
    return metrics_report(PathMetrics.from_log_wealth(lw, lp))


@dataclass(frozen=True)
class FeeBound:
    rebalance_days: int
    max_fee_bp: float

    @property
    def rounded_bp(self) -> int:
        return int(math.floor(self.max_fee_bp + 0.5))


def max_fee(cagr_pct: float, rebalance_days: int) -> FeeBound:
    """Largest fee per trade, in basis points, that the growth over one rebalancing period can absorb."""
    if cagr_pct < 0:
        raise ValueError("CAGR must be non-negative")
    c = math.expm1(math.log1p(cagr_pct / 100.0) * rebalance_days / FEE_YEAR)
    return FeeBound(rebalance_days, 1e4 * c)
