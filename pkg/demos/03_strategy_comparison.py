"""Six strategies on the same ensemble at a two-year horizon, with the
nine summary metrics and the fee each ECO strategy could afford per trade."""

from ecm_kelly.emit import table_rows
from ecm_kelly.harness import ExperimentPlan, Family, run_histogram
from ecm_kelly.metrics import max_fee

plan = ExperimentPlan(Family.HISTOGRAM, m=1000, master_seed=7, grid=(500,))
result = run_histogram(plan)
header, rows = table_rows(result, 500)
print(f"{header[0]:<24}" + "".join(f"{h:>15}" for h in header[1:]))
for row in rows:
    print(f"{row[0]:<24}" + "".join(f"{v:15.3f}" for v in row[1:]))

for label in ("ECO[-1,2]", "ECO[-inf,inf]"):
    cagr = result.cell(500, label).report.cagr_pct_per_year
    fees = [max_fee(max(cagr, 0.0), d).rounded_bp for d in (1, 10)]
    print(f"{label}: affordable fee {fees[0]} bp daily, {fees[1]} bp every 10 days")
