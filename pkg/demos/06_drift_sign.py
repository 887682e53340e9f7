"""Random common drift between -10% and +10% a year. Knowing only its sign
already helps: strategies with the correct sign spend more time ahead of
buy and hold than those with the flipped sign."""

from ecm_kelly.harness import ExperimentPlan, Family, run_sign_test

result = run_sign_test(ExperimentPlan(Family.SIGN_TEST, m=300, master_seed=2, grid=(1000, 2500)))
for c in result.cells:
    print(f"T {c.grid_value:5}  {c.strategy:14} {c.variant:8} median uptime {100 * c.uptime[1]:5.1f}%")
