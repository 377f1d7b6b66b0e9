"""Pick the lag order P and rank Q by free energy on a small grid."""

import numpy as np

from lrmar import ModelSpec
from lrmar.bench import SinusoidConfig, simulate_sinusoids
from lrmar.selection import grid_select

noisy, _ = simulate_sinusoids(SinusoidConfig(T=1000, N=8, n_sinusoids=3,
                                             frequencies=(0.02, 0.05, 0.11), seed=1))
grid = grid_select(noisy, [2, 4, 6], list(range(1, 9)), ModelSpec(P=1, Q=1, seed=0), repeats=1)
np.set_printoptions(precision=1, suppress=True, linewidth=120)
print("free energy (rows P, columns Q):")
print(grid.free_energy)
print("selected (P, Q):", grid.best)
