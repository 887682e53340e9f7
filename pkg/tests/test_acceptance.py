"""Acceptance suite: one PASS/FAIL line per criterion in the terminal summary.

Statistical checks use m = 10_000 simulations with a fixed fresh seed, except
the estimation-error scan, which runs in desk mode (m = 500). The reference
tables and horizon-sweep claims are reproduced with the closed-form ECO solver.
"""

import math

import numpy as np
import pytest

from ecm_kelly import emit
from ecm_kelly import kelly as k
from ecm_kelly.harness import ErrorSpec, ExperimentPlan, Family, run_error_scan, run_histogram, run_window_sweep
from ecm_kelly.metrics import max_fee
from ecm_kelly.model import ModelParams, PathStep, generate_paths, no_jump_drift, simulate_log_prices, step
from ecm_kelly.strategies import apply_default, wealth_increments

SEED = 2026
M = 10_000
DESK_M = 500
REPRO_SOLVER = "approx"
BASE = ModelParams.base()

LABELS = ("B&H", "60/40", "CK[-1,2]", "CK[-inf,inf]", "ECO[-1,2]", "ECO[-inf,inf]")
FIELDS = ("prob_outperf", "mean_outperf", "prob_default", "uptime_fraction", "cagr_pct_per_year")


def _ref(*cols):
    return {label: dict(zip(FIELDS, col)) for label, col in zip(LABELS, cols)}


# reference values at T = 500 and T = 2500; None where no value is given
REFERENCE = {
    500: _ref(
        (None, None, 0.0, None, 7.048),
        (30.020, -0.044, 0.000, 27.545, 4.632),
        (61.058, 0.049, 0.020, 64.671, 10.322),
        (58.307, 0.046, 0.150, 62.475, 10.316),
        (61.270, 0.062, 0.000, 65.070, 10.610),
        (56.160, 0.073, 0.000, 59.980, 11.424),
    ),
    2500: _ref(
        (None, None, 0.0, None, 7.01),
        (20.012, -0.122, 0.000, 14.914, 5.163),
        (53.454, -0.079, 10.620, 57.697, 4.931),
        (46.909, -0.147, 14.840, 50.180, 2.405),
        (65.369, 0.237, 1.250, 73.930, 9.277),
        (61.660, 0.273, 1.250, 64.994, 9.514),
    ),
}
TOLERANCE = {
    500: {"prob_outperf": 2.0, "prob_default": 0.5, "cagr_pct_per_year": 1.5, "mean_outperf": 0.02},
    2500: {"prob_outperf": 2.0, "prob_default": 2.0, "cagr_pct_per_year": 1.5, "mean_outperf": 0.02},
}
UPTIME_TOL = 3.0


@pytest.fixture(scope="module")
def tables():
    plan = ExperimentPlan(Family.HISTOGRAM, m=M, master_seed=SEED, grid=(500, 2500), solver_mode=REPRO_SOLVER)
    return run_histogram(plan)


@pytest.fixture(scope="module")
def sweep():
    return run_window_sweep(ExperimentPlan(Family.WINDOW_SWEEP, m=M, master_seed=SEED, solver_mode=REPRO_SOLVER))


def _table_misses(result, T, with_uptime):
    misses, checked = [], 0
    for label in LABELS:
        report = result.cell(T, label).report
        for name, tol in TOLERANCE[T].items():
            ref = REFERENCE[T][label][name]
            if ref is None:
                continue
            checked += 1
            got = getattr(report, name)
            if not abs(got - ref) <= tol:
                misses.append(f"{label}.{name}={got:.3f} (ref {ref}, tol {tol})")
        if with_uptime and label.startswith("ECO"):
            checked += 1
            got, ref = report.uptime_fraction, REFERENCE[T][label]["uptime_fraction"]
            if not abs(got - ref) <= UPTIME_TOL:
                misses.append(f"{label}.uptime={got:.3f} (ref {ref}, tol {UPTIME_TOL})")
    return misses, checked


def test_criterion_1_two_year_table(tables, record):
    misses, checked = _table_misses(tables, 500, with_uptime=False)
    detail = f"{checked - len(misses)}/{checked} within band" + (": " + "; ".join(misses) if misses else "")
    assert record(1, "T=500 metrics", not misses, detail)


@pytest.mark.xfail(strict=True, reason="long-horizon CK, 60/40 and ECO mean outperformance outside the band; see notes")
def test_criterion_2_ten_year_table(tables, record):
    misses, checked = _table_misses(tables, 2500, with_uptime=True)
    detail = f"{checked - len(misses)}/{checked} within band" + (": " + "; ".join(misses) if misses else "")
    assert record(2, "T=2500 metrics", not misses, detail)


FEE_CELLS = [
    (10.610, 1, 4), (11.424, 1, 4), (10.610, 10, 40), (11.424, 10, 43),
    (9.277, 1, 4), (9.514, 1, 4), (9.277, 10, 36), (9.514, 10, 36),
]


def test_criterion_3_fee_cells(record):
    got = [max_fee(c, d).rounded_bp for c, d, _ in FEE_CELLS]
    want = [bp for _, _, bp in FEE_CELLS]
    assert record(3, "fee cells", got == want, f"got {got}, want {want}")


def test_criterion_4_ck_below_buy_and_hold(sweep, record):
    bh = sweep.series("B&H", "log_wealth")
    grid = np.array(sweep.plan.effective_grid)
    late = grid >= 4000
    bad = []
    for label in ("CK[-1,2]", "CK[-inf,inf]"):
        ck = sweep.series(label, "log_wealth")
        bad += [f"{label}@{T}" for T in grid[late & ~(ck < bh)]]
    assert record(4, "CK median log wealth < B&H for T>=4000", not bad, f"violations: {bad}" if bad else f"{late.sum()} horizons")


def test_criterion_4_eco_uptime_band(sweep, record):
    grid = np.array(sweep.plan.effective_grid)
    up = sweep.series("ECO[-1,2]", "uptime")[grid >= 5000]
    ok = bool(np.all((up >= 0.70) & (up <= 0.80)))
    assert record(4, "ECO[-1,2] median uptime in [70,80]% for T>=5000", ok, f"range {100 * up.min():.2f}..{100 * up.max():.2f}%")


def test_criterion_4_ck_default_increasing(sweep, record):
    ck = sweep.series("CK[-inf,inf]", "prob_default")
    ok = bool(np.all(np.diff(ck) > 0))
    assert record(4, "CK[-inf,inf] default strictly increasing", ok, f"{ck[0]:.2f}% .. {ck[-1]:.2f}%")


@pytest.mark.xfail(strict=True, reason="at T=250 neither strategy defaults in 10^4 paths; see notes")
def test_criterion_4_ck_default_exceeds_eco(sweep, record):
    grid = np.array(sweep.plan.effective_grid)
    ck = sweep.series("CK[-inf,inf]", "prob_default")
    eco = sweep.series("ECO[-inf,inf]", "prob_default")
    ties = grid[~(ck > eco)].tolist()
    assert record(4, "CK[-inf,inf] default > ECO[-inf,inf] at every T", not ties, f"not exceeding at T={ties}" if ties else "")


ERROR_GRID = (1e-3, 1e-1, 1e2)


@pytest.fixture(scope="module")
def error_scans():
    out = {}
    for name in ("r_D", "r_N", "sigma", "rho", "k_bar"):
        plan = ExperimentPlan(Family.ERROR_SCAN, m=DESK_M, master_seed=SEED, grid=ERROR_GRID, error=ErrorSpec(name))
        out[name] = run_error_scan(plan)
    return out


def test_criterion_5_error_robustness(error_scans, record):
    bad, checked = [], 0
    for name, res in error_scans.items():
        for label in ("ECO[-1,2]", "ECO[-inf,inf]"):
            lo_q, lo_med, lo_hi = res.cell(1e-3, label).log_wealth
            mid = res.cell(1e-1, label).log_wealth[1]
            checked += 1
            if not abs(mid - lo_med) < lo_hi - lo_q:
                bad.append(f"{name}/{label}: |{mid:.3f}-{lo_med:.3f}| >= IQR {lo_hi - lo_q:.3f}")
            if name == "r_D":
                checked += 1
                big = res.cell(1e2, label).log_wealth[1]
                if not big < lo_med:
                    bad.append(f"r_D/{label}: median at 1e2 {big:.3f} not below {lo_med:.3f}")
    assert record(5, "error-scan shape", not bad, "; ".join(bad) if bad else f"{checked} checks")


def test_criterion_6_re_identity(record):
    rng = np.random.default_rng(SEED)
    n = 100_000
    r_D = rng.uniform(-2e-3, 2e-3, n)
    rho = rng.uniform(0, 0.99, n)
    k_bar = rng.uniform(0, 2, n)
    lq = np.log(rng.uniform(0.05, 20, n))
    mu = no_jump_drift(r_D, rho, k_bar, lq)
    err = np.abs((1 - rho) * mu + rho * (r_D + k_bar * lq) - r_D) / np.maximum(1.0, np.abs(k_bar * lq) * rho / (1 - rho))
    assert record(6, "RE identity", err.max() < 1e-12, f"max scaled error {err.max():.2e} over {n}")


def test_criterion_6_mispricing_recursions(record):
    rng = np.random.default_rng(SEED + 1)
    worst = 0.0
    for _ in range(10_000):
        r_D, rho, k_bar = rng.uniform(-2e-3, 2e-3), rng.uniform(0, 0.3), rng.uniform(0, 1)
        p = ModelParams(r_D=r_D, r_N=r_D, sigma=0.0, rho=rho, k_bar=k_bar, sigma_kappa=0.0)
        m0, u, kappa = rng.uniform(-1, 1), rng.random(), rng.uniform(-1, 2)
        nxt = step(p, PathStep(log_price=m0, log_normal_price=0.0), u, 0.0, kappa)
        expect = (1 - kappa) * m0 if u <= rho else (1 + rho * k_bar / (1 - rho)) * m0
        worst = max(worst, abs(nxt.log_price - nxt.log_normal_price - expect))
    assert record(6, "mispricing recursions", worst < 1e-13, f"max error {worst:.2e}")


def test_criterion_6_ruin_safety(record):
    rng = np.random.default_rng(SEED + 2)
    finite = 0
    for _ in range(10_000):
        p = ModelParams(r_D=rng.uniform(-2e-3, 2e-3), r_N=0.0, sigma=rng.uniform(1e-4, 0.05), rho=rng.uniform(0, 0.3),
                        k_bar=rng.uniform(0, 1), sigma_kappa=rng.uniform(0, 0.5))
        finite += math.isfinite(k.expected_log_growth(rng.random(), p, math.exp(rng.uniform(-3, 3))))
    S, T = 10_000, 250
    u, eps, z = rng.random((S, T)), rng.standard_normal((S, T)), rng.standard_normal((S, T))
    x, *_, failed = simulate_log_prices(BASE.r_D, BASE.r_N, BASE.sigma, 0.03, 0.6, 0.5, 0.0, u, eps, z)
    lam = rng.uniform(0, 1, (S, T))
    g, ruined = wealth_increments(lam, np.diff(x[~failed], axis=1), 0.0)
    _, _, default_step = apply_default(lam[~failed], g, ruined)
    defaults = int(np.sum(default_step >= 0))
    ok = finite == 10_000 and defaults == 0 and not failed.any()
    assert record(6, "ruin safety", ok, f"{finite}/10000 finite objectives, {defaults} defaults on {S} paths")


def test_criterion_6_concavity_and_stationarity(record):
    rng = np.random.default_rng(SEED + 3)
    concave_bad = 0
    for _ in range(500):
        q = math.exp(rng.uniform(-1, 1))
        lo, hi = k.feasible_interval(BASE, q)
        x, y = lo + (hi - lo) * rng.uniform(0.01, 0.99, 2)
        f = lambda v: k.expected_log_growth(v, BASE, q)
        concave_bad += f((x + y) / 2) < (f(x) + f(y)) / 2 - 1e-15
    worst = 0.0
    for q in np.exp(np.linspace(-0.5, 0.5, 21)):
        lam = k.optimal_lambda_numeric(BASE, q, tol=1e-11)
        h = 1e-3
        f = lambda v: k.expected_log_growth(v, BASE, q)
        grad = (f(lam + h) - f(lam - h)) / (2 * h)
        curv = (f(lam + h) - 2 * f(lam) + f(lam - h)) / h**2
        worst = max(worst, abs(grad) / (abs(curv) * h))
    ok = concave_bad == 0 and worst <= 1.0
    assert record(6, "concavity and stationarity", ok, f"{concave_bad} midpoint violations, max |grad|/(|curv| h) = {worst:.2e}")


@pytest.mark.xfail(strict=True, reason="closed form omits jump-size dispersion; gap about 0.37 at q=0.7")
def test_criterion_6_closed_form_vs_numeric(record):
    qs = np.linspace(0.7, 1.3, 25)
    gaps = [abs(k.optimal_lambda_approx(BASE, q) - k.optimal_lambda_numeric(BASE, q)) for q in qs]
    assert record(6, "closed form within 0.15 of numeric", max(gaps) <= 0.15, f"max gap {max(gaps):.3f} at q={qs[int(np.argmax(gaps))]:.3f}")


def test_criterion_6_interpolant(record):
    interp = k.LambdaInterpolant(BASE)
    qs = np.exp(np.random.default_rng(SEED + 4).uniform(-0.9, 0.9, 500))
    err = np.max(np.abs(interp.unconstrained(np.log(qs)) - [k.optimal_lambda_numeric(BASE, q, tol=1e-10) for q in qs]))
    assert record(6, "interpolant error < 1e-5", err < 1e-5, f"max error {err:.2e}")


def test_criterion_6_worker_determinism(tmp_path, record):
    blobs = []
    for workers in (1, 4, 16):
        plan = ExperimentPlan(Family.HISTOGRAM, m=320, master_seed=SEED, grid=(500,), chunk_size=20, workers=workers)
        res = run_histogram(plan)
        d = tmp_path / f"w{workers}"
        files = [emit.write_rows(res, str(d / "rows.csv")), emit.write_table(res, 500, str(d / "table.csv"))]
        files += emit.write_histograms(res, 500, str(d))
        blobs.append(b"".join(open(f, "rb").read() for f in files))
    ok = blobs[0] == blobs[1] == blobs[2]
    assert record(6, "byte-identical across 1/4/16 workers", ok, f"{len(blobs[0])} bytes")


def test_criterion_7_gbm_degeneration(record):
    p = BASE.replace(rho=0.0)
    paths = generate_paths(p, 2500, SEED, range(8))
    r = np.concatenate([path.log_returns for path in paths])
    n = r.size
    mean_ok = abs(r.mean() - p.r_D) < 3 * p.sigma / math.sqrt(n)
    sd_ok = abs(r.std(ddof=1) - p.sigma) < 3 * p.sigma / math.sqrt(2 * (n - 1))
    errors = []
    for vol in (0.05, 0.17, 0.40):
        pv = BASE.replace(rho=0.0, sigma=vol / math.sqrt(252))
        ck = k.classical_kelly_lambda(k.classical_kelly_drift(pv, "arithmetic"), 0.0, pv.sigma)
        errors.append(abs(k.optimal_lambda_numeric(pv, 1.0, tol=1e-10) - ck))
    decreasing = errors[0] > errors[1] > errors[2]
    ok = mean_ok and sd_ok and decreasing
    assert record(7, "GBM limit", ok, f"moments within 3 SE: {mean_ok and sd_ok}; errors {[f'{e:.2e}' for e in errors]}")
