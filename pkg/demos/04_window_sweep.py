"""Median terminal log wealth and uptime as the horizon grows.

Classical Kelly keeps its leverage through bubbles and its default rate
climbs with the horizon; the crash-aware strategy stays ahead of buy and hold."""

from ecm_kelly.harness import ExperimentPlan, Family, run_window_sweep

plan = ExperimentPlan(Family.WINDOW_SWEEP, m=400, master_seed=3, grid=(500, 2500, 5000))
result = run_window_sweep(plan)
for T in plan.grid:
    print(f"T = {T}")
    for label in ("B&H", "CK[-inf,inf]", "ECO[-1,2]"):
        c = result.cell(T, label)
        print(f"  {label:14} median ln W {c.log_wealth[1]:7.3f}  uptime {100 * c.uptime[1]:5.1f}%  default {c.prob_default:5.1f}%")
