"""Multi-lag LR-MAR and windowed CCA (wCCA).

wCCA treats the lagged past ``x_t`` (length ``N*P``) and the future window
``y_t`` (length ``N*L``) symmetrically::

    z_t          ~ N(0, I_Q)
    x_t | z_t    ~ N(F' z_t, diag(omega1)^-1)
    y_t | z_t    ~ N(G' z_t, diag(omega2)^-1)
    F[j, d]      ~ N(0, 1/ard_f_j),   G[j, k] ~ N(0, 1/ard_g_j)

with Gamma priors on every precision. Each view gets the LR-MAR V / omega /
gamma update family; the latent update couples the two views.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import LaggedDesign, ModelSpec, NumericalError, ValidationError, as_series, center, embed_lags
from .vb import (
    LOG_2PI,
    MONOTONE_SLACK,
    FittedModel,
    FreeEnergyReport,
    GammaFamily,
    LatentPosterior,
    VPosterior,
    _is_spd,
    _logdet,
    _numerical_rank,
    expected_v_omega_v,
    fit,
    gaussian_ard_kl,
    loading_posterior,
    loading_sq_residual,
    spd_inverse,
    squarem,
    INIT_COV_SCALE,
)


def fit_multilag(series, spec: ModelSpec, init: str = "svd") -> FittedModel:
    """LR-MAR jointly predicting the next ``spec.L`` samples.

    The targets are the stacked window ``y_t .. y_{t+L-1}``, so V is
    ``Q x N*L`` and there are ``N*L`` noise precisions. With ``L=1`` this is
    exactly :func:`lrmar.fit`.
    """
    if spec.L < 1:
        raise ValidationError("L must be positive")
    return fit(series, spec, init=init)


# ---------------------------------------------------------------------------
# wCCA
# ---------------------------------------------------------------------------

@dataclass
class WccaPosterior:
    z_bar: np.ndarray  # M x Q
    s_z: np.ndarray  # Q x Q
    f_bar: np.ndarray  # Q x N*P
    s_f: np.ndarray  # N*P x Q x Q
    g_bar: np.ndarray  # Q x N*L
    s_g: np.ndarray  # N*L x Q x Q
    noise1: GammaFamily
    noise2: GammaFamily
    ard_f: GammaFamily
    ard_g: GammaFamily
    spec: ModelSpec | None = None
    free_energy_trace: list = field(default_factory=list)
    means: np.ndarray | None = None
    converged: bool = False
    iterations: int = 0
    N: int = 0
    channel_names: tuple = ()
    runtime_seconds: float = 0.0

    @property
    def free_energy(self) -> float:
        return self.free_energy_trace[-1].total

    def relevance(self) -> np.ndarray:
        """Per-component sum over views of the ARD posterior mean variance."""
        return 1.0 / self.ard_f.mean + 1.0 / self.ard_g.mean


@dataclass
class _View:
    """Loading posterior, noise and ARD of one view."""

    load: VPosterior
    noise: GammaFamily
    ard: GammaFamily


def _view_slices(design: LaggedDesign) -> tuple[slice, slice]:
    return slice(0, design.D), slice(design.D, design.D + design.K)


def wcca_latent(design: LaggedDesign, v1: _View, v2: _View) -> LatentPosterior:
    Q = v1.load.v_bar.shape[0]
    prec = np.eye(Q) + expected_v_omega_v(v1.load, v1.noise) + expected_v_omega_v(v2.load, v2.noise)
    s_z, _ = spd_inverse(prec, "latent precision")
    drive = np.vstack([v1.noise.mean[:, None] * v1.load.v_bar.T, v2.noise.mean[:, None] * v2.load.v_bar.T])
    return LatentPosterior(s_z=s_z, proj=drive @ s_z, design=design)


def _update_view(design: LaggedDesign, latent: LatentPosterior, view: _View, cols: slice,
                 spec: ModelSpec, N: int) -> _View:
    ezz = latent.second_moment()
    yz = latent.cross(design)[cols]
    sq = np.diagonal(design.gram)[cols]
    load = loading_posterior(ezz, yz.T, view.noise, view.ard)
    resid = loading_sq_residual(sq, yz, ezz, load)
    rates = spec.rates_a(N) + 0.5 * resid
    if np.any(~(rates > 0)):
        raise NumericalError("non-positive noise precision rate")
    noise = GammaFamily(spec.iota + design.M / 2.0, rates)
    K = load.v_bar.shape[1]
    energy = np.sum(load.v_bar ** 2, axis=1) + np.einsum("kjj->j", load.s_v)
    ard = GammaFamily(spec.nu + K / 2.0, spec.rates_c() + 0.5 * energy)
    return _View(load, noise, ard)


def wcca_sweep(design: LaggedDesign, spec: ModelSpec, state: tuple) -> tuple:
    """z, then (F, noise1, ard_f) and (G, noise2, ard_g); the two view blocks commute."""
    _, v1, v2 = state
    latent = wcca_latent(design, v1, v2)
    c1, c2 = _view_slices(design)
    return (
        latent,
        _update_view(design, latent, v1, c1, spec, design.N),
        _update_view(design, latent, v2, c2, spec, design.N),
    )


def _view_energy(design: LaggedDesign, latent: LatentPosterior, view: _View, cols: slice,
                 spec: ModelSpec) -> tuple[float, float]:
    """(KL terms, expected negative log-likelihood) of one view."""
    load, K = view.load, view.load.v_bar.shape[1]
    kl = (
        gaussian_ard_kl(load.v_bar, np.einsum("kjj->j", load.s_v), load.logdet_s_v(), view.ard, K)
        + view.ard.kl(spec.nu, spec.rates_c())
        + view.noise.kl(spec.iota, spec.rates_a(design.N))
    )
    ezz = latent.second_moment()
    resid = loading_sq_residual(np.diagonal(design.gram)[cols], latent.cross(design)[cols], ezz, load)
    M = design.M
    nll = 0.5 * M * K * LOG_2PI - 0.5 * M * np.sum(view.noise.log_mean) + 0.5 * view.noise.mean @ resid
    return float(kl), float(nll)


def wcca_free_energy(design: LaggedDesign, spec: ModelSpec, state: tuple) -> FreeEnergyReport:
    """Negative ELBO of the two-view model.

    The latent prior term goes in ``neg_avg_loglik_z`` and both views'
    likelihoods in ``neg_avg_loglik_y``.
    """
    latent, v1, v2 = state
    M, Q = design.M, latent.s_z.shape[0]
    neg_entropy_z = -0.5 * M * (Q * (1.0 + LOG_2PI) + _logdet(latent.s_z))
    neg_ll_z = 0.5 * M * Q * LOG_2PI + 0.5 * np.trace(latent.second_moment())
    c1, c2 = _view_slices(design)
    kl1, nll1 = _view_energy(design, latent, v1, c1, spec)
    kl2, nll2 = _view_energy(design, latent, v2, c2, spec)
    return FreeEnergyReport(float(neg_entropy_z), kl1 + kl2, nll1 + nll2, float(neg_ll_z))


def _wcca_params(state: tuple) -> list:
    _, v1, v2 = state
    out = []
    for v in (v1, v2):
        out += [v.load.v_bar, v.load.s_v, np.log(v.noise.rates), np.log(v.ard.rates)]
    return out


def _wcca_from_params(template: tuple, parts: list):
    latent, t1, t2 = template
    views = []
    for t, (v_bar, s_v, log_noise, log_ard) in zip((t1, t2), (parts[:4], parts[4:])):
        if not _is_spd(s_v):
            return None
        views.append(_View(
            VPosterior(v_bar, 0.5 * (s_v + np.swapaxes(s_v, 1, 2))),
            GammaFamily(t.noise.shape, np.exp(log_noise)),
            GammaFamily(t.ard.shape, np.exp(log_ard)),
        ))
    return (latent, *views)


def wcca_init(design: LaggedDesign, spec: ModelSpec, method: str = "svd") -> tuple:
    """Symmetric start: leading singular triplets of ``[x_t, y_t]``."""
    if method not in ("svd", "random"):
        raise ValidationError(f"unknown init method {method!r}")
    S = design.stacked
    M, Q, D = design.M, spec.Q, design.D
    if method == "svd":
        U, s, Vt = np.linalg.svd(S, full_matrices=False)
        if _numerical_rank(s, S.shape) < Q:
            method = "random"
        else:
            loads = (s[:Q, None] / np.sqrt(M)) * Vt[:Q]
    if method == "random":
        rng = np.random.default_rng(spec.seed)
        scale = np.sqrt(np.diagonal(design.gram).mean() / M) or 1.0
        loads = rng.standard_normal((Q, S.shape[1])) * scale / np.sqrt(Q)
    views = []
    for block in (loads[:, :D], loads[:, D:]):
        K = block.shape[1]
        views.append(_View(
            VPosterior(np.array(block), np.tile(INIT_COV_SCALE * np.eye(Q), (K, 1, 1))),
            GammaFamily(spec.iota, spec.rates_a(design.N)),
            GammaFamily(spec.nu, spec.rates_c()),
        ))
    return (None, *views)


def fit_two_view(design: LaggedDesign, spec: ModelSpec, init: str = "svd", accelerate: bool = True,
                 check_monotone: bool = True):
    """Coordinate descent for wCCA on a prepared design.

    The trace has one entry per iteration plus a final one for the closing
    E-step. Returns ``(state, trace, converged, iterations)``; components are in
    fitting order (see :func:`canonical_order`).
    """
    if design.D != design.K:
        raise ValidationError("wCCA needs equal window lengths (P = L)")
    state = wcca_init(design, spec, init)
    sweep = lambda st: wcca_sweep(design, spec, st)  # noqa: E731
    energy = lambda st: wcca_free_energy(design, spec, st)  # noqa: E731
    trace: list[FreeEnergyReport] = []
    converged = False
    it = 0
    for it in range(1, spec.max_iter + 1):
        try:
            if accelerate:
                state, report = squarem(sweep, energy, _wcca_params, _wcca_from_params, state)
            else:
                state = sweep(state)
                report = energy(state)
        except NumericalError as exc:
            raise NumericalError(f"iteration {it}: {exc}") from exc
        if trace:
            prev = trace[-1].total
            if check_monotone and report.total > prev + MONOTONE_SLACK * abs(prev):
                raise NumericalError(f"iteration {it}: free energy increased from {prev!r} to {report.total!r}")
            trace.append(report)
            if abs(report.total - prev) < spec.tol * abs(report.total):
                converged = True
                break
        else:
            trace.append(report)
    # closing E-step: the returned s_z is then exactly the fixed point of the final loadings
    state = (wcca_latent(design, state[1], state[2]), state[1], state[2])
    trace.append(energy(state))
    return state, trace, converged, it


def canonical_order(state: tuple) -> tuple[np.ndarray, np.ndarray]:
    """Permutation and signs that fix wCCA's latent rotation ambiguity.

    Components are sorted by decreasing ``1/ard_f + 1/ard_g`` (posterior mean
    ARD variance, summed over views), ties kept stable; each is sign-flipped
    so its largest-magnitude loading across both views is positive.
    """
    _, v1, v2 = state
    relevance = 1.0 / v1.ard.mean + 1.0 / v2.ard.mean
    perm = np.argsort(-relevance, kind="stable")
    loads = np.hstack([v1.load.v_bar, v2.load.v_bar])[perm]
    peak = loads[np.arange(len(perm)), np.argmax(np.abs(loads), axis=1)]
    signs = np.where(peak < 0, -1.0, 1.0)
    return perm, signs


def _reorder_cov(S: np.ndarray, perm: np.ndarray, signs: np.ndarray) -> np.ndarray:
    S = S[..., perm, :][..., :, perm]
    return S * signs[:, None] * signs[None, :]


def fit_wcca(series, spec: ModelSpec, init: str = "svd", accelerate: bool = True) -> WccaPosterior:
    """Fit wCCA with past window ``P`` and future window ``L`` (``P == L``)."""
    t0 = time.perf_counter()
    if spec.P != spec.L:
        raise ValidationError(f"wCCA requires P == L, got P={spec.P}, L={spec.L}")
    series = as_series(series)
    spec.check_against(series.T, series.N)
    cs = center(series)
    design = embed_lags(cs, spec.P, spec.L)
    state, trace, converged, it = fit_two_view(design, spec, init, accelerate)
    return _posterior_from_state(state, trace, converged, it, spec, cs, t0)


def _posterior_from_state(state, trace, converged, it, spec, cs, t0) -> WccaPosterior:
    latent, v1, v2 = state
    perm, signs = canonical_order(state)
    return WccaPosterior(
        z_bar=latent.z_bar[:, perm] * signs,
        s_z=_reorder_cov(latent.s_z, perm, signs),
        f_bar=v1.load.v_bar[perm] * signs[:, None],
        s_f=_reorder_cov(v1.load.s_v, perm, signs),
        g_bar=v2.load.v_bar[perm] * signs[:, None],
        s_g=_reorder_cov(v2.load.s_v, perm, signs),
        noise1=v1.noise.copy(),
        noise2=v2.noise.copy(),
        ard_f=GammaFamily(v1.ard.shape, v1.ard.rates[perm]),
        ard_g=GammaFamily(v2.ard.shape, v2.ard.rates[perm]),
        spec=spec,
        free_energy_trace=trace,
        means=np.array(cs.means),
        converged=converged,
        iterations=it,
        N=cs.N,
        channel_names=cs.channel_names,
        runtime_seconds=time.perf_counter() - t0,
    )


def wcca_transform(post: WccaPosterior, series) -> np.ndarray:
    """Latent means for a series under fitted wCCA parameters (one E-step)."""
    from .vb import _design_from_centered

    series = as_series(series)
    if series.N != post.N:
        raise ValidationError(f"series has {series.N} channels, model expects {post.N}")
    design = _design_from_centered(series.data - post.means, post.spec)
    v1 = _View(VPosterior(post.f_bar, post.s_f), post.noise1, post.ard_f)
    v2 = _View(VPosterior(post.g_bar, post.s_g), post.noise2, post.ard_g)
    return wcca_latent(design, v1, v2).z_bar


def wcca_self_consistency(post: WccaPosterior) -> float:
    """Max abs deviation of ``s_z`` from its E-step fixed point."""
    Q = post.s_z.shape[0]
    v1 = VPosterior(post.f_bar, post.s_f)
    v2 = VPosterior(post.g_bar, post.s_g)
    prec = np.eye(Q) + expected_v_omega_v(v1, post.noise1) + expected_v_omega_v(v2, post.noise2)
    return float(np.max(np.abs(post.s_z - np.linalg.inv(prec))))
