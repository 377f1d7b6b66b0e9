import numpy as np
import pytest

from lrmar import DimensionError, ModelSpec, ValidationError
from lrmar.bench import (
    SinusoidConfig,
    component_smoothness,
    explained_variance,
    pca_explained_variance,
    pca_fit,
    run_benchmark,
    simulate_sinusoids,
    write_bench_csv,
)


class TestSimulate:
    def test_no_sinusoids_is_white_noise(self):
        noisy, clean = simulate_sinusoids(SinusoidConfig(T=500, include_prob=0.0))
        assert np.all(clean.data == 0)
        assert abs(noisy.data.std() - 0.5) < 0.02

    def test_noise_free(self):
        noisy, clean = simulate_sinusoids(SinusoidConfig(T=300, noise_std=0.0, seed=2))
        np.testing.assert_array_equal(noisy.data, clean.data)

    def test_inclusion_rate(self):
        counts = []
        for seed in range(100):
            rng = np.random.default_rng(seed)
            included = rng.random((12, 6)) < 0.4
            counts.append(included.sum(axis=1).mean())
        assert abs(np.mean(counts) - 2.4) < 0.3
        # the generator draws inclusion first, so its clean signal agrees
        _, clean = simulate_sinusoids(SinusoidConfig(T=200, seed=0, noise_std=0.0))
        active = np.abs(clean.data).max(axis=0) > 0
        assert active.sum() == (np.random.default_rng(0).random((12, 6)) < 0.4).any(axis=1).sum()

    def test_reproducible(self):
        a = simulate_sinusoids(SinusoidConfig(T=100, seed=5))
        b = simulate_sinusoids(SinusoidConfig(T=100, seed=5))
        np.testing.assert_array_equal(a[0].data, b[0].data)

    def test_shapes(self):
        noisy, clean = simulate_sinusoids(SinusoidConfig(T=4000, N=12, seed=7))
        assert noisy.data.shape == (4000, 12) == clean.data.shape

    @pytest.mark.parametrize("kwargs", [
        {"frequencies": (0.1, 0.1, 0.2, 0.3, 0.4, 0.45)},
        {"frequencies": (0.1, 0.2, 0.3, 0.4, 0.45, 0.5)},
        {"include_prob": 1.5},
        {"n_sinusoids": 3},
        {"phase_mode": "other"},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValidationError):
            SinusoidConfig(**kwargs)

    def test_shared_phase_mode_has_rank_per_sinusoid(self):
        _, clean = simulate_sinusoids(SinusoidConfig(T=2000, seed=1, noise_std=0, phase_mode="sinusoid"))
        s = np.linalg.svd(clean.data - clean.data.mean(axis=0), compute_uv=False)
        assert np.sum(s > 1e-8 * s[0]) <= 6


class TestPca:
    def test_full_rank_reconstruction(self):
        rng = np.random.default_rng(0)
        Y = rng.standard_normal((50, 4))
        Y -= Y.mean(axis=0)
        comps, scores = pca_fit(Y, 4)
        assert explained_variance(Y, scores @ comps) == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(comps @ comps.T, np.eye(4), atol=1e-12)

    def test_single_column(self):
        Y = np.zeros((20, 3))
        Y[:, 1] = np.arange(20) - 9.5
        comps, _ = pca_fit(Y, 1)
        np.testing.assert_allclose(np.abs(comps[0]), [0, 1, 0], atol=1e-12)

    def test_rank2_oracle(self):
        rng = np.random.default_rng(1)
        Y = rng.standard_normal((40, 2)) @ rng.standard_normal((2, 6))
        comps, scores = pca_fit(Y, 2)
        assert np.linalg.norm(scores @ comps - Y) / np.linalg.norm(Y) < 1e-8

    def test_q_too_large(self):
        with pytest.raises(DimensionError):
            pca_fit(np.zeros((5, 2)), 3)

    def test_monotone_in_q(self):
        noisy, clean = simulate_sinusoids(SinusoidConfig(T=500, seed=3))
        evs = [pca_explained_variance(noisy, clean, q)["noisy"] for q in range(1, 13)]
        assert all(b >= a - 1e-12 for a, b in zip(evs, evs[1:]))


class TestMetrics:
    def test_explained_variance_values(self):
        Y = np.arange(6.0).reshape(3, 2) - 2.5
        assert explained_variance(Y, Y) == 1.0
        assert explained_variance(Y, np.zeros_like(Y)) == 0.0
        assert explained_variance(Y, -Y) == -3.0

    def test_explained_variance_undefined(self):
        with pytest.raises(ValidationError):
            explained_variance(np.zeros((3, 2)), np.zeros((3, 2)))

    def test_ramp(self):
        assert component_smoothness(np.arange(200.0))[0] == pytest.approx(1.0, abs=0.05)

    def test_white_noise(self):
        z = np.random.default_rng(0).standard_normal((10000, 1))
        assert abs(component_smoothness(z)[0]) < 0.05

    def test_alternating(self):
        M = 500
        z = np.where(np.arange(M) % 2, 1.0, -1.0)
        assert component_smoothness(z)[0] == pytest.approx(-1.0, abs=2 / M)

    def test_constant_column_missing(self):
        out = component_smoothness(np.column_stack([np.ones(10), np.arange(10.0)]))
        assert np.isnan(out[0]) and np.isfinite(out[1])


def test_benchmark_rows(tmp_path):
    rows = run_benchmark(SinusoidConfig(T=400, N=5), [1, 2], P=2, seeds=[0, 1])
    assert len(rows) == 2 * 2 * 2 * 2
    path = tmp_path / "b.csv"
    write_bench_csv(rows, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "method,Q,P,target,explained_variance,seed"
    assert len(lines) == 17


def test_lrmar_clean_ev_non_decreasing_to_generative_rank():
    from lrmar.bench import lrmar_explained_variance

    means = []
    for Q in range(1, 7):
        evs = [lrmar_explained_variance(*simulate_sinusoids(SinusoidConfig(T=2000, seed=s)),
                                        ModelSpec(P=6, Q=Q))["clean"] for s in range(20)]
        means.append(np.mean(evs))
    assert all(b >= a for a, b in zip(means, means[1:])), np.round(means, 4)
