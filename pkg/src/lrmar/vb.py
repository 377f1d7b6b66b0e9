"""Mean-field variational Bayes for the low-rank MAR model.

Generative model, for each effective time point ``t`` with regressor row
``x_t`` (lagged past, length ``N*P``) and target row ``y_t`` (length ``N*L``)::

    z_t | x_t, W   ~ N(W' x_t, I_Q)
    y_t | z_t, V   ~ N(V' z_t, diag(omega)^-1)
    W[d, j]        ~ N(0, 1/alpha_d),   alpha_d ~ Gamma(kappa, b_d)
    V[j, n]        ~ N(0, 1/gamma_j),   gamma_j ~ Gamma(nu, c_j)
    omega_n        ~ Gamma(iota, a_n)

All Gamma distributions use the shape/rate parametrisation. The posterior
factorises as q(Z) q(W) q(alpha) q(V) q(omega) q(gamma); every factor has a
closed-form coordinate update, so the free energy (negative ELBO) never
increases across a full sweep.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg.lapack import dpotrf, dpotri
from scipy.special import digamma, gammaln

from .core import (
    DimensionError,
    LaggedDesign,
    ModelSpec,
    NumericalError,
    ValidationError,
    as_series,
    center,
    embed_lags,
    lag_matrices,
)

LOG_2PI = np.log(2 * np.pi)
MONOTONE_SLACK = 1e-9
INIT_COV_SCALE = 1e-2
INIT_RIDGE = 1e-3


# ---------------------------------------------------------------------------
# linear algebra helpers
# ---------------------------------------------------------------------------

def spd_inverse(A: np.ndarray, what: str = "matrix") -> tuple[np.ndarray, np.ndarray]:
    """Inverse and log-determinant of a (stack of) SPD matrices via Cholesky.

    Returns ``(inv, logdet)`` where ``logdet`` has the stack shape.
    """
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    if A.ndim == 2:
        chol, info = dpotrf(A, lower=1, clean=1)
        if info == 0:
            inv, info = dpotri(chol, lower=1)
        if info != 0:
            raise NumericalError(
                f"{what} is not positive definite (condition estimate {np.linalg.cond(A):.3g})"
            )
        inv = np.tril(inv) + np.tril(inv, -1).T
        return inv, 2.0 * float(np.sum(np.log(np.diag(chol))))
    try:
        chol = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        cond = np.linalg.cond(A)
        raise NumericalError(f"{what} is not positive definite (condition estimate {np.max(cond):.3g})")
    eye = np.broadcast_to(np.eye(A.shape[-1]), A.shape)
    chol_inv = np.linalg.solve(chol, eye)
    inv = np.swapaxes(chol_inv, -1, -2) @ chol_inv
    logdet = 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(-1)
    return 0.5 * (inv + np.swapaxes(inv, -1, -2)), logdet


def _logdet(S: np.ndarray) -> np.ndarray:
    sign, ld = np.linalg.slogdet(S)
    if np.any(sign <= 0):
        raise NumericalError("covariance with non-positive determinant")
    return ld


# ---------------------------------------------------------------------------
# posterior containers
# ---------------------------------------------------------------------------

@dataclass
class GammaFamily:
    """Independent Gamma(shape, rate_k) variables sharing one shape."""

    shape: float
    rates: np.ndarray

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=float)

    @property
    def mean(self) -> np.ndarray:
        return self.shape / self.rates

    @property
    def log_mean(self) -> np.ndarray:
        """E[log x] under each member."""
        return digamma(self.shape) - np.log(self.rates)

    def kl(self, prior_shape: float, prior_rates: np.ndarray) -> float:
        """Sum over members of KL(self || Gamma(prior_shape, prior_rates))."""
        a, b = self.shape, self.rates
        a0, b0 = prior_shape, np.asarray(prior_rates, dtype=float)
        terms = (
            (a - a0) * digamma(a)
            - gammaln(a)
            + gammaln(a0)
            + a0 * (np.log(b) - np.log(b0))
            + a * (b0 - b) / b
        )
        return float(np.sum(terms))

    def copy(self) -> "GammaFamily":
        return GammaFamily(self.shape, self.rates.copy())


class LatentPosterior:
    """q(z_t) = N(z_bar[t], s_z), one shared covariance for every t.

    The means are either stored explicitly or, as produced by
    :func:`update_latent`, as a projection ``proj`` with
    ``z_bar = design.stacked @ proj``. In the projected form all statistics
    come from the design's Gram matrix, so their cost does not grow with M.
    """

    def __init__(self, z_bar=None, s_z=None, *, proj=None, design: LaggedDesign | None = None):
        if (z_bar is None) == (proj is None):
            raise ValidationError("give exactly one of z_bar or proj")
        if proj is not None and design is None:
            raise ValidationError("a projected posterior needs its design")
        self._z_bar = None if z_bar is None else np.asarray(z_bar, dtype=float)
        self.s_z = np.asarray(s_z, dtype=float)
        self.proj = proj
        self.design = design
        self._stats: dict = {}

    @property
    def z_bar(self) -> np.ndarray:
        """M x Q posterior means."""
        if self._z_bar is None:
            self._z_bar = self.design.stacked @ self.proj
        return self._z_bar

    @property
    def M(self) -> int:
        return self.design.M if self._z_bar is None else self._z_bar.shape[0]

    def zz(self) -> np.ndarray:
        """z_bar' z_bar."""
        if "zz" not in self._stats:
            if self.proj is not None:
                self._stats["zz"] = self.proj.T @ self.design.gram @ self.proj
            else:
                self._stats["zz"] = self._z_bar.T @ self._z_bar
        return self._stats["zz"]

    def cross(self, design: LaggedDesign) -> np.ndarray:
        """``design.stacked' z_bar``; rows ``:D`` pair with y_minus, ``D:`` with y_plus."""
        if "cross" not in self._stats:
            if self.proj is not None and design is self.design:
                self._stats["cross"] = design.gram @ self.proj
            else:
                self._stats["cross"] = design.stacked.T @ self.z_bar
        return self._stats["cross"]

    def second_moment(self) -> np.ndarray:
        """E[Z'Z]."""
        return self.zz() + self.M * self.s_z


@dataclass
class WPosterior:
    w_bar: np.ndarray  # D x Q, D = N*P
    s_w: np.ndarray  # D x D, shared by every column
    logdet: Optional[float] = field(default=None, repr=False, compare=False)

    def logdet_s_w(self) -> float:
        if self.logdet is None:
            self.logdet = float(_logdet(self.s_w))
        return self.logdet


@dataclass
class VPosterior:
    v_bar: np.ndarray  # Q x K, K = N*L
    s_v: np.ndarray  # K x Q x Q
    logdet: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def logdet_s_v(self) -> np.ndarray:
        if self.logdet is None:
            self.logdet = _logdet(self.s_v)
        return self.logdet

    def second_moment(self) -> np.ndarray:
        """E[V'V] (K x K); off-diagonal covariance vanishes between columns."""
        out = self.v_bar.T @ self.v_bar
        out[np.diag_indices_from(out)] += np.trace(self.s_v, axis1=1, axis2=2)
        return out


@dataclass
class FreeEnergyReport:
    neg_entropy_z: float
    kl_phi: float
    neg_avg_loglik_y: float
    neg_avg_loglik_z: float
    total: float = field(default=np.nan)

    def __post_init__(self):
        parts = (self.neg_entropy_z, self.kl_phi, self.neg_avg_loglik_y, self.neg_avg_loglik_z)
        names = ("neg_entropy_z", "kl_phi", "neg_avg_loglik_y", "neg_avg_loglik_z")
        for name, v in zip(names, parts):
            if not np.isfinite(v):
                raise NumericalError(f"free energy term {name} is not finite")
        self.total = float(sum(parts))


@dataclass
class FittedModel:
    spec: ModelSpec
    latent: LatentPosterior
    w: WPosterior
    v: VPosterior
    omega: GammaFamily
    alpha: GammaFamily
    gamma: GammaFamily
    free_energy_trace: list
    means: np.ndarray
    converged: bool
    iterations: int
    N: int = 0
    channel_names: tuple = ()
    runtime_seconds: float = 0.0

    @property
    def free_energy(self) -> float:
        return self.free_energy_trace[-1].total

    def coefficients(self) -> np.ndarray:
        """Posterior-mean stacked MAR coefficients ``W V`` (N*P x N*L)."""
        return self.w.w_bar @ self.v.v_bar

    def alpha_by_lag(self) -> np.ndarray:
        """W-row ARD posterior precision means arranged as ``P x N``."""
        return self.alpha.mean.reshape(self.spec.P, self.N)


# ---------------------------------------------------------------------------
# initialisation
# ---------------------------------------------------------------------------

def _prior_families(spec: ModelSpec, N: int) -> tuple[GammaFamily, GammaFamily, GammaFamily]:
    omega = GammaFamily(spec.iota, spec.rates_a(N))
    alpha = GammaFamily(spec.kappa, spec.rates_b(N))
    gamma = GammaFamily(spec.nu, spec.rates_c())
    return omega, alpha, gamma


def _numerical_rank(s: np.ndarray, shape: tuple) -> int:
    if s.size == 0 or s[0] <= 0:
        return 0
    return int(np.sum(s > max(shape) * np.finfo(float).eps * s[0]))


def init_posterior(design: LaggedDesign, spec: ModelSpec, method: str = "svd"):
    """Starting point for coordinate ascent.

    ``method="svd"`` seeds V from the leading right singular vectors of the
    targets and Z from the matching unit-variance scores; it falls back to
    the seeded random start when ``Q`` exceeds the numerical rank of the
    targets. Returns ``(latent, w, v, omega, alpha, gamma)``.
    """
    if method not in ("svd", "random"):
        raise ValidationError(f"unknown init method {method!r}")
    Y, X = design.y_plus, design.y_minus
    M, K = Y.shape
    Q = spec.Q
    if Q > K:
        raise DimensionError(f"Q={Q} exceeds target dimension {K}")
    rng = np.random.default_rng(spec.seed)

    if method == "svd":
        U, s, Vt = np.linalg.svd(Y, full_matrices=False)
        if _numerical_rank(s, Y.shape) < Q:
            warnings.warn(
                f"targets have numerical rank below Q={Q}; using random initialisation",
                RuntimeWarning,
                stacklevel=2,
            )
            method = "random"
        else:
            z_bar = np.sqrt(M) * U[:, :Q]
            v_bar = (s[:Q, None] / np.sqrt(M)) * Vt[:Q]
    if method == "random":
        z_bar = rng.standard_normal((M, Q))
        scale = np.sqrt(design.sq_plus.mean() / M) if M else 1.0
        v_bar = rng.standard_normal((Q, K)) * (scale if scale > 0 else 1.0) / np.sqrt(Q)

    D = design.D
    ridge = design.gram_minus + INIT_RIDGE * np.eye(D)
    latent = LatentPosterior(z_bar, INIT_COV_SCALE * np.eye(Q))
    w_bar = np.linalg.solve(ridge, latent.cross(design)[:D])

    w = WPosterior(w_bar, INIT_COV_SCALE * np.eye(D))
    v = VPosterior(v_bar, np.tile(INIT_COV_SCALE * np.eye(Q), (K, 1, 1)))
    omega, alpha, gamma = _prior_families(spec, design.N)
    return latent, w, v, omega, alpha, gamma


# ---------------------------------------------------------------------------
# coordinate updates
# ---------------------------------------------------------------------------

def expected_v_omega_v(v: VPosterior, omega: GammaFamily) -> np.ndarray:
    """E[V diag(omega) V'] under the factorised posterior."""
    om = omega.mean
    return (v.v_bar * om) @ v.v_bar.T + np.einsum("k,kij->ij", om, v.s_v)


def update_latent(design: LaggedDesign, w: WPosterior, v: VPosterior, omega: GammaFamily) -> LatentPosterior:
    Q = v.v_bar.shape[0]
    s_z, _ = spd_inverse(np.eye(Q) + expected_v_omega_v(v, omega), "latent precision")
    drive = np.vstack([w.w_bar, omega.mean[:, None] * v.v_bar.T])
    return LatentPosterior(s_z=s_z, proj=drive @ s_z, design=design)


def update_w(design: LaggedDesign, latent: LatentPosterior, alpha: GammaFamily) -> WPosterior:
    prec = design.gram_minus + np.diag(alpha.mean)
    s_w, logdet = spd_inverse(prec, "W precision")
    w_bar = s_w @ latent.cross(design)[:design.D]
    return WPosterior(w_bar, s_w, -logdet)


def update_alpha(w: WPosterior, spec: ModelSpec) -> GammaFamily:
    Q = w.w_bar.shape[1]
    D = w.w_bar.shape[0]
    N = D // spec.P
    row_energy = np.sum(w.w_bar ** 2, axis=1) + Q * np.diag(w.s_w)
    return GammaFamily(spec.kappa + Q / 2.0, spec.rates_b(N) + 0.5 * row_energy)


def loading_posterior(ezz: np.ndarray, zy: np.ndarray, omega: GammaFamily,
                      ard: GammaFamily) -> VPosterior:
    """Per-column Gaussian posterior of loadings ``y_k ~ N(Z v_k, 1/omega_k)``.

    ``zy`` is ``Z' Y`` (Q x K); ``ezz`` is E[Z'Z].
    """
    om = omega.mean
    prec = np.diag(ard.mean)[None] + om[:, None, None] * ezz[None]
    s_v, logdet = spd_inverse(prec, "loading precision")
    v_bar = np.einsum("kij,jk->ik", s_v, zy) * om
    return VPosterior(v_bar, s_v, -logdet)


def loading_sq_residual(sq: np.ndarray, yz: np.ndarray, ezz: np.ndarray, v: VPosterior) -> np.ndarray:
    """Per-column E||y_k - Z v_k||^2 from ``sq = diag(Y'Y)`` and ``yz = Y'Z``."""
    fit_sq = np.einsum("ik,ij,jk->k", v.v_bar, ezz, v.v_bar)
    return sq - 2.0 * np.einsum("ki,ik->k", yz, v.v_bar) + fit_sq + np.einsum("kij,ji->k", v.s_v, ezz)


def update_v(design: LaggedDesign, latent: LatentPosterior, omega: GammaFamily, gamma: GammaFamily) -> VPosterior:
    return loading_posterior(latent.second_moment(), latent.cross(design)[design.D:].T, omega, gamma)


def expected_sq_residual(design: LaggedDesign, latent: LatentPosterior, v: VPosterior) -> np.ndarray:
    """Per-column E||y_n - Z v_n||^2 under q(Z) q(V)."""
    return loading_sq_residual(design.sq_plus, latent.cross(design)[design.D:], latent.second_moment(), v)


def latent_sq_residual(design: LaggedDesign, latent: LatentPosterior, w: WPosterior) -> float:
    """||z_bar - y_minus w_bar||^2."""
    xz = latent.cross(design)[:design.D]
    return float(
        np.trace(latent.zz())
        - 2.0 * np.sum(xz * w.w_bar)
        + np.sum(w.w_bar * (design.gram_minus @ w.w_bar))
    )


def update_omega(design: LaggedDesign, latent: LatentPosterior, v: VPosterior, spec: ModelSpec) -> GammaFamily:
    sq = expected_sq_residual(design, latent, v)
    rates = spec.rates_a(design.N) + 0.5 * sq
    if np.any(~(rates > 0)):
        raise NumericalError("non-positive noise precision rate")
    return GammaFamily(spec.iota + design.M / 2.0, rates)


def update_gamma(v: VPosterior, spec: ModelSpec) -> GammaFamily:
    K = v.v_bar.shape[1]
    row_energy = np.sum(v.v_bar ** 2, axis=1) + np.einsum("kjj->j", v.s_v)
    return GammaFamily(spec.nu + K / 2.0, spec.rates_c() + 0.5 * row_energy)


# ---------------------------------------------------------------------------
# free energy
# ---------------------------------------------------------------------------

def gaussian_ard_kl(mean: np.ndarray, cov_diag_sum: np.ndarray, logdets: np.ndarray,
                    prec: GammaFamily, n_vectors: int) -> float:
    """E_q(prec)[KL] summed over independent Gaussian vectors with ARD prior.

    ``mean`` holds the vectors as columns (dim x n_vectors);
    ``cov_diag_sum`` is the per-dimension sum over vectors of posterior
    variances; ``logdets`` the per-vector covariance log-determinants.
    """
    dim = mean.shape[0]
    energy = np.sum(mean ** 2, axis=1) + cov_diag_sum
    return 0.5 * float(
        prec.mean @ energy
        - n_vectors * dim
        - np.sum(logdets)
        - n_vectors * np.sum(prec.log_mean)
    )


def free_energy(design: LaggedDesign, latent: LatentPosterior, w: WPosterior, v: VPosterior,
                omega: GammaFamily, alpha: GammaFamily, gamma: GammaFamily,
                spec: ModelSpec) -> FreeEnergyReport:
    """Negative ELBO split into its four conventional pieces."""
    M = design.M
    Q = latent.s_z.shape[0]
    D, K = w.w_bar.shape[0], v.v_bar.shape[1]
    N = design.N

    ld_z = _logdet(latent.s_z)
    neg_entropy_z = -0.5 * M * (Q * (1.0 + LOG_2PI) + ld_z)

    kl_w = gaussian_ard_kl(w.w_bar, Q * np.diag(w.s_w), np.full(Q, w.logdet_s_w()), alpha, Q)
    kl_v = gaussian_ard_kl(v.v_bar, np.einsum("kjj->j", v.s_v), v.logdet_s_v(), gamma, K)
    kl_phi = (
        kl_w
        + kl_v
        + alpha.kl(spec.kappa, spec.rates_b(N))
        + gamma.kl(spec.nu, spec.rates_c())
        + omega.kl(spec.iota, spec.rates_a(N))
    )

    neg_ll_z = (
        0.5 * M * Q * LOG_2PI
        + 0.5 * latent_sq_residual(design, latent, w)
        + 0.5 * M * np.trace(latent.s_z)
        + 0.5 * Q * np.sum(w.s_w * design.gram_minus)
    )

    sq = expected_sq_residual(design, latent, v)
    neg_ll_y = float(
        0.5 * M * K * LOG_2PI
        - 0.5 * M * np.sum(omega.log_mean)
        + 0.5 * omega.mean @ sq
    )
    return FreeEnergyReport(float(neg_entropy_z), float(kl_phi), neg_ll_y, float(neg_ll_z))


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

def run_updates(design: LaggedDesign, spec: ModelSpec, state: tuple):
    """One full sweep z -> W -> alpha -> V -> omega -> gamma."""
    latent, w, v, omega, alpha, gamma = state
    latent = update_latent(design, w, v, omega)
    w = update_w(design, latent, alpha)
    alpha = update_alpha(w, spec)
    v = update_v(design, latent, omega, gamma)
    omega = update_omega(design, latent, v, spec)
    gamma = update_gamma(v, spec)
    return latent, w, v, omega, alpha, gamma


def _sweep_inputs(state: tuple) -> list:
    """The quantities a sweep reads, in an unconstrained parametrisation."""
    _, w, v, omega, alpha, gamma = state
    return [w.w_bar, v.v_bar, v.s_v, np.log(omega.rates), np.log(alpha.rates), np.log(gamma.rates)]


def _is_spd(A: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return False
    return True


def _state_from_inputs(template: tuple, parts: list):
    latent, w, v, omega, alpha, gamma = template
    if not _is_spd(parts[2]):
        return None
    return (
        latent,
        WPosterior(parts[0], w.s_w),
        VPosterior(parts[1], 0.5 * (parts[2] + np.swapaxes(parts[2], 1, 2))),
        GammaFamily(omega.shape, np.exp(parts[3])),
        GammaFamily(alpha.shape, np.exp(parts[4])),
        GammaFamily(gamma.shape, np.exp(parts[5])),
    )


def squarem(sweep, energy, to_params, from_params, state):
    """Two plain sweeps plus a squared-extrapolation candidate.

    ``to_params`` maps a state to the list of arrays a sweep reads (in an
    unconstrained parametrisation) and ``from_params`` rebuilds a state from
    such a list, returning None if it is infeasible. The candidate is passed
    through one more sweep, so it is always a consistent posterior; it is kept
    only if its free energy beats the second plain sweep, otherwise the step
    is halved towards the plain iterate (at most three tries).

    Returns ``(state, report)``.
    """
    s1 = sweep(state)
    s2 = sweep(s1)
    best, best_report = s2, energy(s2)
    p0, p1, p2 = to_params(state), to_params(s1), to_params(s2)
    r = [b - a for a, b in zip(p0, p1)]
    curv = [c - 2 * b + a for a, b, c in zip(p0, p1, p2)]
    r_norm = np.sqrt(sum(np.sum(x ** 2) for x in r))
    v_norm = np.sqrt(sum(np.sum(x ** 2) for x in curv))
    if not v_norm > 0:
        return best, best_report
    step = -max(1.0, r_norm / v_norm)
    for _ in range(3):
        cand = from_params(state, [a - 2 * step * x + step ** 2 * y for a, x, y in zip(p0, r, curv)])
        if cand is not None:
            try:
                cand = sweep(cand)
                report = energy(cand)
            except NumericalError:
                report = None
            if report is not None and report.total < best_report.total:
                return cand, report
        step = (step - 1.0) / 2.0
    return best, best_report


def squarem_step(design: LaggedDesign, spec: ModelSpec, state: tuple):
    """One accelerated iteration of the LR-MAR sweep; see :func:`squarem`."""
    return squarem(
        lambda st: run_updates(design, spec, st),
        lambda st: free_energy(design, *st, spec),
        _sweep_inputs,
        _state_from_inputs,
        state,
    )


def fit_design(design: LaggedDesign, spec: ModelSpec, init: str = "svd",
               check_monotone: bool = True, accelerate: bool = True):
    """Coordinate descent of the free energy on a prepared design.

    Without ``accelerate`` one iteration is one sweep of the six updates.
    With it, one iteration is a :func:`squarem_step` (two or three sweeps);
    the recorded free energy is non-increasing either way.

    Returns ``(state, trace, converged, iterations)``.
    """
    state = init_posterior(design, spec, init)
    trace: list[FreeEnergyReport] = []
    converged = False
    it = 0
    for it in range(1, spec.max_iter + 1):
        try:
            if accelerate:
                state, report = squarem_step(design, spec, state)
            else:
                state = run_updates(design, spec, state)
                report = free_energy(design, *state, spec)
        except NumericalError as exc:
            raise NumericalError(f"iteration {it}: {exc}") from exc
        if trace:
            prev = trace[-1].total
            if check_monotone and report.total > prev + MONOTONE_SLACK * abs(prev):
                raise NumericalError(
                    f"iteration {it}: free energy increased from {prev!r} to {report.total!r}"
                )
            trace.append(report)
            if abs(report.total - prev) < spec.tol * abs(report.total):
                converged = True
                break
        else:
            trace.append(report)
    return state, trace, converged, it


def fit(series, spec: ModelSpec, init: str = "svd", accelerate: bool = True) -> FittedModel:
    """Fit the low-rank MAR model to a ``T x N`` series.

    The series is centered, lag-embedded with ``spec.P`` / ``spec.L`` and
    fitted by alternating the six closed-form updates until the relative
    change in free energy falls below ``spec.tol``.
    """
    t0 = time.perf_counter()
    series = as_series(series)
    spec.check_against(series.T, series.N)
    cs = center(series)
    design = embed_lags(cs, spec.P, spec.L)
    state, trace, converged, iterations = fit_design(design, spec, init, accelerate=accelerate)
    latent, w, v, omega, alpha, gamma = state
    return FittedModel(
        spec=spec,
        latent=latent,
        w=w,
        v=v,
        omega=omega,
        alpha=alpha,
        gamma=gamma,
        free_energy_trace=trace,
        means=np.array(cs.means),
        converged=converged,
        iterations=iterations,
        N=series.N,
        channel_names=series.channel_names,
        runtime_seconds=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# using a fitted model
# ---------------------------------------------------------------------------

def predict_one_step(model: FittedModel, history: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Predictive mean and covariance of the next ``L`` samples.

    ``history`` is ``P x N`` in centered units, most recent sample first.
    """
    history = np.asarray(history, dtype=float)
    P, N = model.spec.P, model.N
    if history.shape != (P, N):
        raise DimensionError(f"history must be {P} x {N}, got {history.shape}")
    if model.omega.shape <= 1:
        raise NumericalError("posterior noise variance undefined (noise shape <= 1)")
    x = history.reshape(-1)
    mean = model.v.v_bar.T @ (model.w.w_bar.T @ x)
    noise_var = model.omega.rates / (model.omega.shape - 1.0)
    cov = np.diag(noise_var) + model.v.second_moment()
    return mean, cov


def transform(model: FittedModel, series) -> np.ndarray:
    """Latent means for a new series under the fitted parameters (one E-step)."""
    series = as_series(series)
    if series.N != model.N:
        raise DimensionError(f"series has {series.N} channels, model expects {model.N}")
    design = design_for(model, series)
    return update_latent(design, model.w, model.v, model.omega).z_bar


def _design_from_centered(data: np.ndarray, spec: ModelSpec) -> LaggedDesign:
    if data.shape[0] < spec.P + spec.L + 1:
        raise DimensionError(f"series too short: need T >= {spec.P + spec.L + 1}")
    y_plus, y_minus = lag_matrices(data, spec.P, spec.L)
    return LaggedDesign(y_plus, y_minus, spec.P, spec.L, data.shape[1])


def reconstruct(model: FittedModel, z: np.ndarray, original_units: bool = False) -> np.ndarray:
    """Map latent values back to (lagged) channel space: ``z @ V``."""
    z = np.asarray(z, dtype=float)
    Q = model.spec.Q
    if z.ndim != 2 or z.shape[1] != Q:
        raise DimensionError(f"z must have {Q} columns")
    out = z @ model.v.v_bar
    if original_units:
        out = out + np.tile(model.means, model.spec.L)
    return out


def design_for(model: FittedModel, series) -> LaggedDesign:
    """Lagged design of ``series`` centered with the model's stored means."""
    series = as_series(series)
    return _design_from_centered(series.data - model.means, model.spec)
