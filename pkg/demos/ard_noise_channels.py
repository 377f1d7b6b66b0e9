"""Channels without dynamics get large ARD precisions on their W rows."""

import numpy as np

from lrmar import ModelSpec, fit
from lrmar.bench import SinusoidConfig, simulate_sinusoids

noisy, _ = simulate_sinusoids(SinusoidConfig(T=2000, N=6, seed=0))
white = np.random.default_rng(1000).standard_normal((2000, 2))
model = fit(np.hstack([noisy.data, white]), ModelSpec(P=3, Q=4))

A = model.alpha_by_lag()  # P x N
np.set_printoptions(precision=1, suppress=True, linewidth=120)
print("alpha means (rows = lag, last two columns = white noise):")
print(A)
print("ratio noise min / structured median:", round(A[:, 6:].min() / np.median(A[:, :6]), 1))
