"""A few simulated price paths: bubbles build up between crashes and each
crash removes a random share of the accumulated mispricing."""

import numpy as np

from ecm_kelly import ModelParams, generate_paths

params = ModelParams.base()
paths = generate_paths(params, horizon=2500, master_seed=1, indices=range(3))

for i, path in enumerate(paths):
    jumps = np.flatnonzero(path.jump)
    print(f"path {i}: final price {path.prices[-1]:.3f}, normal price {path.normal_prices[-1]:.3f}")
    print(f"  {len(jumps)} crashes, largest |ln q| reached {np.abs(path.log_q).max():.3f}")
    if len(jumps):
        t = jumps[0]
        print(f"  first crash at step {t}: ln q {path.log_q[t - 1]:+.4f} -> {path.log_q[t]:+.4f} (kappa {path.kappa[t]:.3f})")
