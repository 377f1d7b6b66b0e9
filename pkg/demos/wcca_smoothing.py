"""Windowed CCA components are smoother than one-step LR-MAR components."""

import numpy as np

from lrmar import ModelSpec, fit
from lrmar.bench import component_smoothness
from lrmar.extensions import fit_wcca

rng = np.random.default_rng(0)
T, N, K = 1500, 6, 2
t = np.arange(T)
src = np.sin(2 * np.pi * rng.uniform(0.002, 0.01, K) * t[:, None] + rng.uniform(0, 2 * np.pi, K))
Y = src @ rng.standard_normal((K, N)) + rng.standard_normal((T, N))

w = fit_wcca(Y, ModelSpec(P=10, L=10, Q=K))
m = fit(Y, ModelSpec(P=10, Q=K))
print("wCCA relevance:", np.round(w.relevance(), 3))
print("lag-1 autocorrelation, wCCA:  ", np.round(component_smoothness(w.z_bar), 3))
print("lag-1 autocorrelation, LR-MAR:", np.round(component_smoothness(m.latent.z_bar), 3))
