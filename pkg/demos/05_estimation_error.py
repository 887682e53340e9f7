"""Robustness to a mis-estimated drift: each simulation's strategy uses
r_D * (1 + sigma_e * z) instead of the true r_D."""

from ecm_kelly.harness import ErrorSpec, ExperimentPlan, Family, run_error_scan

plan = ExperimentPlan(Family.ERROR_SCAN, m=250, master_seed=5, grid=(1e-3, 1e-1, 1e1, 1e2), error=ErrorSpec("r_D"), horizon=1000)
result = run_error_scan(plan)
for c in result.cells:
    lo, med, hi = c.log_wealth
    print(f"sigma_e {c.grid_value:8.0e}  {c.strategy:14} median ln W {med:7.3f}  IQR [{lo:.3f}, {hi:.3f}]")
