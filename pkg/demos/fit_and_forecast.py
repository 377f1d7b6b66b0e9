"""Fit a rank-2 model to a simulated sinusoid mixture and forecast one step."""

import numpy as np

from lrmar import ModelSpec, fit, predict_one_step, reconstruct, transform
from lrmar.bench import SinusoidConfig, explained_variance, simulate_sinusoids

noisy, clean = simulate_sinusoids(SinusoidConfig(T=1500, N=8, seed=3))
model = fit(noisy, ModelSpec(P=4, Q=4))
print(f"converged={model.converged} after {model.iterations} iterations, "
      f"free energy {model.free_energy:.2f}")

# posterior precision of each latent component's loadings; large means pruned
print("gamma means:", np.round(model.gamma.mean, 3))

z = transform(model, noisy)
y_hat = reconstruct(model, z, original_units=True)
P, M = model.spec.P, z.shape[0]
print("EV vs clean:", round(explained_variance(clean.data[P:P + M] - clean.data.mean(0),
                                               y_hat - noisy.data.mean(0)), 3))

# history is centered and ordered most recent first
history = (noisy.data - model.means)[::-1][:P]
mean, cov = predict_one_step(model, history)
print("next-step mean:", np.round(mean + model.means, 2))
print("predictive std:", np.round(np.sqrt(np.diag(cov)), 2))
