"""Synthetic sinusoid data, a PCA baseline and evaluation metrics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .core import DimensionError, ModelSpec, TimeSeries, ValidationError, center
from .vb import fit, reconstruct, transform

DEFAULT_FREQUENCIES = (0.01, 0.02, 0.035, 0.05, 0.08, 0.12)


@dataclass(frozen=True)
class SinusoidConfig:
    T: int = 4000
    N: int = 12
    n_sinusoids: int = 6
    frequencies: tuple = DEFAULT_FREQUENCIES
    include_prob: float = 0.4
    weight_shape: float = 1.0
    weight_rate: float = 1.0
    noise_std: float = 0.5
    seed: int = 0
    phase_mode: str = "pair"

    def __post_init__(self):
        freqs = tuple(float(f) for f in self.frequencies)
        object.__setattr__(self, "frequencies", freqs)
        if len(freqs) != self.n_sinusoids:
            raise ValidationError(f"{len(freqs)} frequencies given for {self.n_sinusoids} sinusoids")
        if len(set(freqs)) != len(freqs) or not all(0 < f < 0.5 for f in freqs):
            raise ValidationError("frequencies must be distinct and lie in (0, 0.5)")
        if not 0 <= self.include_prob <= 1:
            raise ValidationError("include_prob must lie in [0, 1]")
        if self.noise_std < 0 or self.weight_shape <= 0 or self.weight_rate <= 0:
            raise ValidationError("noise_std must be >= 0 and Gamma parameters > 0")
        if self.phase_mode not in ("pair", "sinusoid"):
            raise ValidationError("phase_mode must be 'pair' or 'sinusoid'")
        if self.T < 2 or self.N < 1:
            raise ValidationError("need T >= 2 and N >= 1")


def simulate_sinusoids(config: SinusoidConfig = SinusoidConfig()) -> tuple[TimeSeries, TimeSeries]:
    """Each channel is a random Gamma-weighted sum of a subset of sinusoids.

    Returns ``(noisy, clean)``; both uncentered.
    """
    rng = np.random.default_rng(config.seed)
    N, S = config.N, config.n_sinusoids
    included = rng.random((N, S)) < config.include_prob
    weights = rng.gamma(config.weight_shape, 1.0 / config.weight_rate, size=(N, S)) * included
    phases = rng.uniform(0.0, 2 * np.pi, size=(N, S))
    if config.phase_mode == "sinusoid":
        phases = np.broadcast_to(phases[0], (N, S))
    noise = rng.standard_normal((config.T, N))

    t = np.arange(config.T)[:, None, None]
    freqs = np.asarray(config.frequencies)[None, None, :]
    waves = np.sin(2 * np.pi * freqs * t + phases[None])
    clean = np.einsum("tns,ns->tn", waves, weights)
    noisy = clean + config.noise_std * noise
    names = tuple(f"ch{n}" for n in range(N))
    return TimeSeries(noisy, names), TimeSeries(clean, names)


def pca_fit(Y: np.ndarray, Q: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-``Q`` principal directions (rows) and scores of centered ``Y``."""
    Y = np.asarray(Y, dtype=float)
    if Q > Y.shape[1]:
        raise DimensionError(f"Q={Q} exceeds the number of columns {Y.shape[1]}")
    if Q < 1:
        raise ValidationError("Q must be positive")
    _, _, Vt = np.linalg.svd(Y, full_matrices=False)
    components = Vt[:Q]
    return components, Y @ components.T


def explained_variance(Y: np.ndarray, Y_hat: np.ndarray) -> float:
    """``1 - ||Y - Y_hat||^2 / ||Y||^2``."""
    Y = np.asarray(Y, dtype=float)
    Y_hat = np.asarray(Y_hat, dtype=float)
    if Y.shape != Y_hat.shape:
        raise DimensionError(f"shape mismatch {Y.shape} vs {Y_hat.shape}")
    total = np.sum(Y ** 2)
    if total == 0:
        raise ValidationError("explained variance undefined for an all-zero target")
    return float(1.0 - np.sum((Y - Y_hat) ** 2) / total)


def component_smoothness(z: np.ndarray) -> np.ndarray:
    """Sample lag-1 autocorrelation of each column; NaN for constant columns."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if z.shape[0] < 3:
        raise DimensionError("need at least 3 rows")
    zc = z - z.mean(axis=0)
    denom = np.sum(zc ** 2, axis=0)
    num = np.sum(zc[1:] * zc[:-1], axis=0)
    out = np.full(z.shape[1], np.nan)
    ok = denom > 0
    out[ok] = num[ok] / denom[ok]
    return out


@dataclass
class BenchRow:
    method: str
    Q: int
    P: int
    target: str
    explained_variance: float
    seed: int


def lrmar_explained_variance(noisy: TimeSeries, clean: TimeSeries, spec: ModelSpec) -> dict:
    """Explained variance of the LR-MAR reconstruction against both targets.

    Targets are the rows ``P..T-1`` of the centered series; the model sees
    only the noisy data.
    """
    model = fit(noisy, spec)
    z = transform(model, noisy)
    y_hat = reconstruct(model, z)[:, : noisy.N]
    P = spec.P
    M = z.shape[0]
    noisy_t = center(noisy).data[P:P + M]
    clean_t = clean.data[P:P + M] - clean.data.mean(axis=0)
    return {
        "noisy": explained_variance(noisy_t, y_hat),
        "clean": explained_variance(clean_t, y_hat),
    }


def pca_explained_variance(noisy: TimeSeries, clean: TimeSeries, Q: int) -> dict:
    Yn = center(noisy).data
    comps, scores = pca_fit(Yn, Q)
    y_hat = scores @ comps
    Yc = clean.data - clean.data.mean(axis=0)
    return {"noisy": explained_variance(Yn, y_hat), "clean": explained_variance(Yc, y_hat)}


def run_benchmark(config: SinusoidConfig, q_values: Iterable[int], P: int = 6,
                  seeds: Sequence[int] = (0,), spec_template: ModelSpec | None = None) -> list[BenchRow]:
    """PCA vs LR-MAR explained variance over ``q_values`` and ``seeds``."""

    rows: list[BenchRow] = []
    for seed in seeds:
        noisy, clean = simulate_sinusoids(replace(config, seed=seed))
        for Q in q_values:
            for target, ev in pca_explained_variance(noisy, clean, Q).items():
                rows.append(BenchRow("pca", Q, 0, target, ev, seed))
            base = spec_template or ModelSpec(P=P, Q=Q)
            # a per-component c cannot follow Q across the sweep
            c = base.c if base.c is None or np.ndim(base.c) == 0 else None
            spec = base.replace(P=P, Q=Q, c=c)
            for target, ev in lrmar_explained_variance(noisy, clean, spec).items():
                rows.append(BenchRow("lrmar", Q, P, target, ev, seed))
    return rows


def write_bench_csv(rows: Iterable[BenchRow], path) -> None:
    from .io import atomic_write, fmt

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "Q", "P", "target", "explained_variance", "seed"])
    for r in rows:
        w.writerow([r.method, r.Q, r.P, r.target, fmt(r.explained_variance), r.seed])
    atomic_write(path, buf.getvalue())
