"""Explained variance of PCA and LR-MAR against noisy and clean targets."""

from lrmar.bench import SinusoidConfig, run_benchmark

rows = run_benchmark(SinusoidConfig(T=2000, seed=0), q_values=[2, 4, 6, 8, 12], P=6)
print(f"{'method':8}{'Q':>4}  {'noisy':>7}{'clean':>8}")
table = {}
for r in rows:
    table.setdefault((r.method, r.Q), {})[r.target] = r.explained_variance
for (method, Q), ev in table.items():
    print(f"{method:8}{Q:4d}  {ev['noisy']:7.3f}{ev['clean']:8.3f}")
