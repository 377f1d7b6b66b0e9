import warnings

import numpy as np
import pytest

from lrmar import ModelSpec, ValidationError, center, embed_lags, fit, TimeSeries
from lrmar.bench import component_smoothness
from lrmar.core import LaggedDesign
from lrmar.extensions import (
    canonical_order,
    fit_multilag,
    fit_two_view,
    fit_wcca,
    wcca_self_consistency,
    wcca_transform,
)
from lrmar import io


def rank1_mar(T=5000, seed=0):
    rng = np.random.default_rng(seed)
    B = np.array([[0.9], [0.5]]) @ np.array([[0.8, -0.6]])
    y = np.zeros((T, 2))
    for t in range(1, T):
        y[t] = y[t - 1] @ B + 0.1 * rng.standard_normal(2)
    return y, B


def slow_sinusoids(seed, T=1500, N=6, K=2):
    rng = np.random.default_rng(seed)
    t = np.arange(T)
    src = np.sin(2 * np.pi * rng.uniform(0.002, 0.01, K) * t[:, None] + rng.uniform(0, 2 * np.pi, K))
    return src @ rng.standard_normal((K, N)) + rng.standard_normal((T, N))


class TestMultilag:
    def test_l1_bit_identical(self):
        rng = np.random.default_rng(0)
        Y = rng.standard_normal((300, 3)).cumsum(axis=0) * 0.1 + rng.standard_normal((300, 3))
        spec = ModelSpec(P=2, Q=2, seed=3)
        a, b = fit_multilag(Y, spec), fit(Y, spec)
        assert [r.total for r in a.free_energy_trace] == [r.total for r in b.free_energy_trace]
        np.testing.assert_array_equal(a.w.w_bar, b.w.w_bar)
        np.testing.assert_array_equal(a.v.s_v, b.v.s_v)

    def test_constant_series_prunes_everything(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            m = fit_multilag(np.full((100, 3), 2.5), ModelSpec(P=2, Q=2, L=3))
        assert np.abs(m.v.v_bar).max() < 1e-6
        assert np.abs(m.w.w_bar).max() < 1e-6

    def test_second_lag_follows_dynamics(self):
        y, B = rank1_mar()
        m = fit_multilag(y, ModelSpec(P=1, Q=1, L=2))
        v = m.v.v_bar
        assert np.linalg.norm(v[:, 2:] - v[:, :2] @ B) / np.linalg.norm(v[:, 2:]) < 0.1

    def test_dimensions(self):
        rng = np.random.default_rng(1)
        m = fit_multilag(rng.standard_normal((200, 3)), ModelSpec(P=2, Q=2, L=3))
        assert m.v.v_bar.shape == (2, 9)
        assert m.omega.rates.shape == (9,)
        assert m.latent.z_bar.shape == (200 - 2 - 3 + 1, 2)


def two_view_design(X, Y):
    return LaggedDesign(np.asarray(Y, float), np.asarray(X, float), 1, 1, X.shape[1])


class TestWcca:
    def test_identical_views_give_identical_loadings(self):
        rng = np.random.default_rng(2)
        z = rng.standard_normal((2000, 2))
        X = z @ rng.standard_normal((2, 5)) + 0.3 * rng.standard_normal((2000, 5))
        X -= X.mean(axis=0)
        state, *_ = fit_two_view(two_view_design(X, X), ModelSpec(P=1, Q=2))
        _, v1, v2 = state
        F, G = v1.load.v_bar, v2.load.v_bar
        for j in range(2):
            sign = np.sign(F[j] @ G[j])
            np.testing.assert_allclose(F[j], sign * G[j], atol=1e-2)

    def test_surplus_components_pruned(self):
        rng = np.random.default_rng(3)
        M = 3000
        z = rng.standard_normal((M, 1))
        X = z @ rng.standard_normal((1, 6)) + 0.5 * rng.standard_normal((M, 6))
        Y = z @ rng.standard_normal((1, 6)) + 0.5 * rng.standard_normal((M, 6))
        X, Y = X - X.mean(axis=0), Y - Y.mean(axis=0)
        state, *_ = fit_two_view(two_view_design(X, Y), ModelSpec(P=1, Q=3))
        perm, _ = canonical_order(state)
        for view in state[1:]:
            ard = view.ard.mean[perm]
            assert np.all(ard[1:] > 10 * ard[0])

    def test_smoother_than_lrmar(self):
        Y = slow_sinusoids(0)
        w = fit_wcca(Y, ModelSpec(P=10, L=10, Q=2))
        m = fit(Y, ModelSpec(P=10, Q=2))
        assert np.nanmean(component_smoothness(w.z_bar)) > np.nanmean(component_smoothness(m.latent.z_bar))

    def test_monotone_and_self_consistent(self):
        Y = slow_sinusoids(1, T=600, N=4)
        post = fit_wcca(Y, ModelSpec(P=3, L=3, Q=3), accelerate=False)
        tot = [r.total for r in post.free_energy_trace]
        assert all(b <= a + 1e-9 * abs(a) for a, b in zip(tot, tot[1:]))
        assert wcca_self_consistency(post) < 1e-12
        for S in (post.s_z, *post.s_f, *post.s_g):
            assert np.linalg.eigvalsh(S).min() > 0

    def test_swap_views(self):
        Y = slow_sinusoids(2, T=800, N=4)
        d = embed_lags(center(TimeSeries(Y)), 4, 4)
        swapped = LaggedDesign(d.y_minus, d.y_plus, 4, 4, d.N)
        spec = ModelSpec(P=4, L=4, Q=3)
        a = fit_two_view(d, spec)[1][-1].total
        b = fit_two_view(swapped, spec)[1][-1].total
        assert b == pytest.approx(a, rel=1e-6)

    def test_canonical_order(self):
        post = fit_wcca(slow_sinusoids(4, T=800, N=4), ModelSpec(P=3, L=3, Q=3))
        rel = post.relevance()
        assert np.all(np.diff(rel) <= 0)
        loads = np.hstack([post.f_bar, post.g_bar])
        peak = loads[np.arange(3), np.argmax(np.abs(loads), axis=1)]
        assert np.all(peak > 0)

    def test_reordering_keeps_e_step(self):
        Y = slow_sinusoids(5, T=800, N=4)
        post = fit_wcca(Y, ModelSpec(P=3, L=3, Q=3))
        np.testing.assert_allclose(wcca_transform(post, Y), post.z_bar, atol=1e-10)

    def test_requires_equal_windows(self):
        with pytest.raises(ValidationError, match="P == L"):
            fit_wcca(np.zeros((50, 2)), ModelSpec(P=2, L=3, Q=1))

    def test_json_round_trip(self, tmp_path):
        post = fit_wcca(slow_sinusoids(6, T=500, N=3), ModelSpec(P=2, L=2, Q=2))
        io.save_wcca(post, tmp_path / "w.json")
        back = io.load_wcca(tmp_path / "w.json")
        for name in ("z_bar", "s_z", "f_bar", "s_f", "g_bar", "s_g", "means"):
            np.testing.assert_array_equal(getattr(back, name), getattr(post, name))
        assert back.free_energy == post.free_energy
        np.testing.assert_array_equal(back.ard_g.rates, post.ard_g.rates)
