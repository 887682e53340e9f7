"""Per-simulation random streams.

Every simulation index owns a family of independent substreams derived only
from ``(master_seed, index, purpose)``. Results therefore do not depend on the
order in which simulations are run or on how they are split across workers.
"""

from dataclasses import dataclass

import numpy as np

# substream purposes; the numbers are part of the reproducibility contract
UNIFORM = 0
GAUSS = 1
KAPPA = 2
PARAM_ERROR = 3
SIGN_TEST = 4


def substream(master_seed: int, index: int, purpose: int) -> np.random.Generator:
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(index), int(purpose)))
    return np.random.Generator(np.random.PCG64(seq))


@dataclass
class PathStreams:
    """The three draw sources consumed by the path generator.

    Each step takes one uniform (branch selection), one standard normal
    (diffusion noise) and one standard normal from the jump-size stream. The
    jump-size draw is indexed by step so that paths generated with different
    jump probabilities stay coupled; it only influences the path on jump steps.
    """

    uniform: np.random.Generator
    gauss: np.random.Generator
    kappa: np.random.Generator

    @classmethod
    def from_seed(cls, master_seed: int, index: int = 0) -> "PathStreams":
        return cls(
            substream(master_seed, index, UNIFORM),
            substream(master_seed, index, GAUSS),
            substream(master_seed, index, KAPPA),
        )

    def draw(self, horizon: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (
            self.uniform.random(horizon),
            self.gauss.standard_normal(horizon),
            self.kappa.standard_normal(horizon),
        )


def draw_block(master_seed: int, indices, horizon: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack the draws of several simulations into ``(len(indices), horizon)`` arrays."""
    n = len(indices)
    u = np.empty((n, horizon))
    eps = np.empty((n, horizon))
    z = np.empty((n, horizon))
    for row, j in enumerate(indices):
        u[row], eps[row], z[row] = PathStreams.from_seed(master_seed, j).draw(horizon)
    return u, eps, z
