"""How the crash-aware Kelly fraction reacts to mispricing.

Below q = 1 the price sits above its normal level, a crash would push it
down, so the optimal leverage drops. The classical rule ignores q."""

import numpy as np

from ecm_kelly import ModelParams
from ecm_kelly.kelly import BOUNDED, classical_kelly_lambda, optimal_lambda_approx, optimal_lambda_numeric

params = ModelParams.base()
ck = classical_kelly_lambda(params.r_D, params.r_f, params.sigma)
print(f"classical Kelly fraction (constant): {ck:.3f}")
print("     q   numeric   closed form   bounded")
for q in np.linspace(0.7, 1.3, 7):
    lam = optimal_lambda_numeric(params, q)
    approx = optimal_lambda_approx(params, q)
    clipped = optimal_lambda_numeric(params, q, bounds=BOUNDED)
    print(f"{q:6.2f} {lam:9.3f} {approx:13.3f} {clipped:9.3f}")
