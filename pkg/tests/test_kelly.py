import math
import warnings

import mpmath as mp
import numpy as np
import pytest

from ecm_kelly import kelly as k
from ecm_kelly.kelly import BOUNDED, UNBOUNDED, LambdaBounds
from ecm_kelly.model import ModelParams

BASE = ModelParams.base()


def grid_argmax(params, q, lo, hi, n=100_001):
    lam = np.linspace(lo, hi, n)
    vals = np.array([k.expected_log_growth(l, params, q) for l in lam])
    return lam[np.argmax(vals)]


def test_one_node_menu():
    menu = k.discretize_jump_distribution(0.3, 0.2, 1)
    assert menu.entries == [(0.3, 1.0)]


def test_seven_node_menu_moments():
    menu = k.discretize_jump_distribution(0.3, 0.2, 7)
    # direct moment summation
    mean = sum(e * kap for kap, e in menu.entries)
    var = sum(e * (kap - mean) ** 2 for kap, e in menu.entries)
    assert abs(mean - 0.3) < 1e-12
    assert abs(var - 0.04) < 1e-12
    assert abs(menu.eta.sum() - 1) < 1e-12
    assert np.all((menu.eta > 0) & (menu.eta < 1))


def test_zero_dispersion_menu():
    menu = k.discretize_jump_distribution(0.45, 0.0, 5)
    assert np.all(menu.kappa == 0.45)


def test_menu_rejects_zero_nodes():
    with pytest.raises(ValueError):
        k.discretize_jump_distribution(0.3, 0.2, 0)


def test_growth_without_risky_asset():
    p = BASE.replace(r_f=1e-4)
    assert k.expected_log_growth(0.0, p, 0.8) == 1e-4


def test_growth_full_investment_without_crashes():
    p = BASE.replace(rho=0.0)
    for q in (0.5, 1.0, 1.7):
        assert k.expected_log_growth(1.0, p, q) == pytest.approx(k.no_jump_drift(p.r_D, 0, 0, 0), abs=1e-17)
        # high-order rule gives the same value
        assert k.expected_log_growth(1.0, p, q, gauss_nodes=61) == pytest.approx(p.r_D, abs=1e-17)


def test_ruin_sentinel():
    lo, hi = k.feasible_interval(BASE, 1.0)
    assert k.expected_log_growth(hi + 1.0, BASE, 1.0) == -math.inf
    assert k.expected_log_growth(lo - 1.0, BASE, 1.0) == -math.inf


def test_growth_domain():
    with pytest.raises(ValueError):
        k.expected_log_growth(0.5, BASE, 0.0)
    with pytest.raises(ValueError):
        k.expected_log_growth(0.5, BASE, 1.0, gauss_nodes=2)


def test_numeric_gbm_limit_against_grid_scan():
    p = BASE.replace(rho=0.0)
    lam = k.optimal_lambda_numeric(p, 1.0, tol=1e-10)
    scan = grid_argmax(p, 1.0, 0.0, 5.0)
    assert abs(lam - scan) <= 5e-5 + 1e-9
    ck = (p.r_D + p.sigma**2 / 2) / p.sigma**2
    assert abs(lam - ck) / ck < 0.05


def test_degenerate_bounds():
    assert k.optimal_lambda_numeric(BASE, 1.0, bounds=LambdaBounds(0.0, 0.0)) == 0.0


def test_bounded_is_clipped_unconstrained():
    free = k.optimal_lambda_numeric(BASE, 1.0, tol=1e-10)
    assert free > 2
    assert k.optimal_lambda_numeric(BASE, 1.0, bounds=BOUNDED) == 2.0
    # oracle: grid scan on the bounded interval peaks at the upper bound
    assert grid_argmax(BASE, 1.0, -1.0, 2.0, 3001) == 2.0


def test_infeasible_bounds():
    with pytest.raises(k.InfeasibleBoundsError):
        k.optimal_lambda_numeric(BASE, 1.0, bounds=LambdaBounds(80.0, 90.0))


def test_numeric_against_batch():
    qs = [0.6, 0.8, 1.0, 1.25, 1.6]
    batch = k.solve_lambda_batch(np.log(qs), BASE.r_D, BASE.sigma, BASE.rho, BASE.k_bar, BASE.sigma_kappa)
    for q, b in zip(qs, batch):
        assert k.optimal_lambda_numeric(BASE, q, tol=1e-11) == pytest.approx(b, abs=1e-8)


def test_batch_rows_independent_of_batch():
    lq = np.linspace(-2, 2, 257)
    full = k.solve_lambda_batch(lq, BASE.r_D, BASE.sigma, BASE.rho, BASE.k_bar, BASE.sigma_kappa)
    for sl in (slice(0, 1), slice(100, 101), slice(3, 90)):
        part = k.solve_lambda_batch(lq[sl], BASE.r_D, BASE.sigma, BASE.rho, BASE.k_bar, BASE.sigma_kappa)
        assert part.tobytes() == full[sl].tobytes()


def test_bubble_reduces_leverage():
    at_fair = k.optimal_lambda_numeric(BASE, 1.0)
    in_bubble = k.optimal_lambda_numeric(BASE, 0.8)
    assert in_bubble != at_fair
    assert abs(in_bubble) < abs(at_fair)
    # oracle: direct grid scans
    assert abs(grid_argmax(BASE, 0.8, -1, 5, 60_001)) < abs(grid_argmax(BASE, 1.0, -1, 5, 60_001))


def test_approx_terms_without_crashes():
    p = BASE.replace(rho=0.0)
    t = k.ApproxSolutionTerms.evaluate(p, 1.3)
    assert t.D == t.A
    assert t.H2 == pytest.approx((2 * t.A**2 - t.A) * p.sigma**2, rel=1e-14)


def test_approx_forms_extended_precision():
    mp.mp.dps = 40
    r_D = mp.log(mp.mpf("1.07")) / 252
    s2 = (mp.mpf("0.17") / mp.sqrt(252)) ** 2
    A = mp.exp(r_D)
    full = (A * (1 + s2 / 2) - 1) / ((A - 1) ** 2 + (2 * A**2 - A) * s2 + A**2 * mp.mpf(3) / 4 * s2**2)
    simple = (r_D + s2 / 2) / (s2 + r_D**2)
    p = BASE.replace(rho=0.0)
    assert k.optimal_lambda_approx(p, 1.0) == pytest.approx(float(full), rel=1e-10)
    assert k.optimal_lambda_approx_simple(p, 1.0) == pytest.approx(float(simple), rel=1e-12)
    # the two forms agree to first order in the rates
    assert abs(full - simple) / simple < 1e-2
    assert float(full) == pytest.approx(2.84, abs=0.01)


def test_approx_clipping():
    assert k.optimal_lambda_approx(BASE, 1.0, BOUNDED) == 2.0


def test_approx_zero_denominator():
    p = ModelParams(r_D=0.0, r_N=0.0, sigma=0.0, rho=0.0, k_bar=0.0, sigma_kappa=0.0)
    with pytest.raises(ZeroDivisionError):
        k.optimal_lambda_approx(p, 1.0)


def test_approx_tracks_numeric_without_jump_dispersion():
    p = BASE.replace(sigma_kappa=0.0)
    for q in np.linspace(0.7, 1.3, 13):
        assert abs(k.optimal_lambda_approx(p, q) - k.optimal_lambda_numeric(p, q)) <= 0.15


def test_classical_kelly():
    assert k.classical_kelly_lambda(2e-4, 0.0, 1e-2) == pytest.approx(2.0, rel=1e-14)
    mp.mp.dps = 30
    oracle = mp.log(mp.mpf("1.07")) / mp.mpf("0.0289")
    assert k.classical_kelly_lambda(BASE.r_D, 0.0, BASE.sigma) == pytest.approx(float(oracle), rel=1e-13)
    assert k.classical_kelly_lambda(BASE.r_D, 0.0, BASE.sigma, BOUNDED) == 2.0
    assert k.classical_kelly_lambda(3e-4, 3e-4, BASE.sigma) == 0.0
    with pytest.raises(ValueError):
        k.classical_kelly_lambda(1e-4, 0.0, 0.0)


def test_classical_drift_modes():
    assert k.classical_kelly_drift(BASE, "log") == BASE.r_D
    assert k.classical_kelly_drift(BASE, "arithmetic") == BASE.r_D + BASE.sigma**2 / 2
    with pytest.raises(ValueError):
        k.classical_kelly_drift(BASE, "median")


def test_gbm_consistency_error_sequence():
    errors = []
    for vol in (0.05, 0.17, 0.40):
        p = BASE.replace(rho=0.0, sigma=vol / math.sqrt(252))
        ck = k.classical_kelly_lambda(k.classical_kelly_drift(p, "arithmetic"), 0.0, p.sigma)
        errors.append(abs(k.optimal_lambda_numeric(p, 1.0, tol=1e-10) - ck))
    assert errors[0] > errors[1] > errors[2]


def test_quadrature_convergence():
    checked = 0
    for q in (0.5, 0.8, 1.0, 1.4, 2.0):
        for lam in np.linspace(-2, 2, 9):
            a = k.expected_log_growth(lam, BASE, q, gauss_nodes=21)
            b = k.expected_log_growth(lam, BASE, q, gauss_nodes=42)
            # more nodes reach further into the tails, which can only shrink
            # the finite-objective interval
            if math.isfinite(b):
                assert math.isfinite(a)
                assert abs(a - b) < 1e-10
                checked += 1
    assert checked >= 35


def test_interpolant_accuracy():
    interp = k.LambdaInterpolant(BASE)
    assert interp.midpoint_error < 1e-6
    rng = np.random.default_rng(0)
    qs = np.exp(rng.uniform(-0.9, 0.9, 1000))
    approx = interp.unconstrained(np.log(qs))
    exact = np.array([k.optimal_lambda_numeric(BASE, q, tol=1e-10) for q in qs])
    assert np.max(np.abs(approx - exact)) < 1e-5


def test_interpolant_node_values_exact():
    interp = k.LambdaInterpolant(BASE)
    nodes = interp.grid[5:-5:17]
    tab = interp.values[5:-5:17]
    assert np.allclose(interp.unconstrained(nodes), tab, rtol=0, atol=1e-12)


def test_interpolant_extends_without_extrapolation():
    interp = k.LambdaInterpolant(BASE)
    far = np.array([2.5, -2.5])
    got = interp.unconstrained(far)
    exact = k.solve_lambda_batch(far, BASE.r_D, BASE.sigma, BASE.rho, BASE.k_bar, BASE.sigma_kappa)
    assert interp.grid[0] < -2.5 and interp.grid[-1] > 2.5
    assert np.allclose(got, exact, atol=1e-6)


def test_interpolant_history_independent():
    a = k.LambdaInterpolant(BASE)
    b = k.LambdaInterpolant(BASE)
    b.extend(-3.0, 3.0)
    x = np.linspace(-0.95, 0.95, 301)
    assert a.unconstrained(x).tobytes() == b.unconstrained(x).tobytes()


def test_interpolant_continuity():
    interp = k.LambdaInterpolant(BASE)
    steps = np.abs(np.diff(interp.values))
    # no step between neighbouring nodes exceeds ten times the neighbouring steps
    neighbours = np.maximum(steps[:-2], steps[2:])
    assert np.all(steps[1:-1] <= 10 * neighbours)


def test_interpolant_clips():
    interp = k.LambdaInterpolant(BASE, bounds=BOUNDED)
    assert float(interp(1.0)) == 2.0


def test_batch_finite_at_extreme_mispricing():
    lq = np.concatenate([np.linspace(-400, 400, 801), [-95.3, 63.6]])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        lam = k.solve_lambda_batch(lq, BASE.r_D, BASE.sigma, BASE.rho, BASE.k_bar, BASE.sigma_kappa)
    assert np.all(np.isfinite(lam))
    for x, v in zip(lq[::80], lam[::80]):
        lo, hi = k.feasible_interval(BASE, math.exp(x))
        assert lo <= v <= hi


def test_no_jump_objective_finite_inside_interval():
    # without jumps the crash nodes carry no weight and must not bound the fraction
    p = ModelParams.base().replace(rho=0.0, sigma=0.015625, r_D=9.6e-4)
    q = math.exp(0.5)
    lo, hi = k.feasible_interval(p, q)
    lam = k.optimal_lambda_numeric(p, q)
    assert lo < lam < hi
    assert math.isfinite(k.expected_log_growth(lam, p, q))
