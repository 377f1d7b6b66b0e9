"""Domain types, centering and lag embedding.

Column layout of the regressor matrix is lag-major: block ``i`` (1-based lag)
occupies columns ``(i-1)*N : i*N``. Every downstream index over rows of ``W``
and over the ARD precisions of ``W`` follows this layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

DEFAULT_PRIOR = 1e-3


class ValidationError(ValueError):
    """Bad input data or inconsistent dimensions."""


class DimensionError(ValidationError):
    """Array shapes incompatible with the requested model."""


class NumericalError(ArithmeticError):
    """A quantity that must be finite or positive definite was not."""


def _check_finite(data: np.ndarray) -> None:
    bad = np.argwhere(~np.isfinite(data))
    if bad.size:
        r, c = bad[0]
        raise ValidationError(f"non-finite value at row {r}, column {c}")


@dataclass(frozen=True)
class TimeSeries:
    """A ``T x N`` multichannel signal; rows are time points."""

    data: np.ndarray
    channel_names: tuple = ()
    means: Optional[np.ndarray] = None
    centered: bool = False

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2:
            raise DimensionError("data must be a T x N matrix")
        T, N = data.shape
        if T < 2 or N < 1:
            raise DimensionError(f"need T >= 2 and N >= 1, got T={T}, N={N}")
        _check_finite(data)
        names = tuple(self.channel_names) or tuple(f"ch{n}" for n in range(N))
        if len(names) != N:
            raise ValidationError(f"{len(names)} channel names for {N} channels")
        means = np.zeros(N) if self.means is None else np.array(self.means, dtype=float)
        if means.shape != (N,):
            raise DimensionError("means must have one entry per channel")
        if self.centered and np.any(np.abs(data.mean(axis=0)) > 1e-10 * max(1.0, np.abs(data).max())):
            raise ValidationError("series flagged as centered has non-zero column means")
        data.flags.writeable = False
        means.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "channel_names", names)
        object.__setattr__(self, "means", means)

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def N(self) -> int:
        return self.data.shape[1]


def center(series: TimeSeries) -> TimeSeries:
    """Subtract column means; accumulated means are kept on the result."""
    if series.centered:
        return series
    mu = series.data.mean(axis=0)
    data = series.data - mu
    # second pass removes the O(eps * |mean|) residue of the first
    mu2 = data.mean(axis=0)
    data = data - mu2
    return TimeSeries(data, series.channel_names, series.means + mu + mu2, centered=True)


@dataclass(frozen=True)
class ModelSpec:
    """Structural parameters and prior hyperparameters.

    ``a`` (noise precision rates, length ``N*L``), ``b`` (W-row ARD rates,
    ``P x N``) and ``c`` (V-row ARD rates, length ``Q``) may be left as
    ``None`` to take the weakly informative default.
    """

    P: int
    Q: int
    L: int = 1
    iota: float = DEFAULT_PRIOR
    a: Optional[np.ndarray] = None
    kappa: float = DEFAULT_PRIOR
    b: Optional[np.ndarray] = None
    nu: float = DEFAULT_PRIOR
    c: Optional[np.ndarray] = None
    max_iter: int = 500
    tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        for name in ("P", "Q", "L", "max_iter"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValidationError(f"{name} must be a positive integer, got {v}")
            object.__setattr__(self, name, int(v))
        for name in ("iota", "kappa", "nu", "tol"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        for name in ("a", "b", "c"):
            v = getattr(self, name)
            if v is None:
                continue
            arr = np.array(v, dtype=float)
            if np.any(~(arr > 0)):
                raise ValidationError(f"rates {name} must be strictly positive")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.c is not None and np.ndim(self.c) > 0 and np.size(self.c) != self.Q:
            raise DimensionError(f"c must have Q={self.Q} entries")

    def rates_a(self, N: int) -> np.ndarray:
        return _broadcast(self.a, N * self.L, "a")

    def rates_b(self, N: int) -> np.ndarray:
        """W-row ARD rates flattened in regressor-column order (lag-major)."""
        if self.b is None:
            return np.full(self.P * N, DEFAULT_PRIOR)
        b = np.asarray(self.b, dtype=float)
        if b.ndim == 0:
            return np.full(self.P * N, float(b))
        if b.shape not in ((self.P, N), (self.P * N,)):
            raise DimensionError(f"b must be P x N = {self.P} x {N}")
        return b.reshape(-1).copy()

    def rates_c(self) -> np.ndarray:
        return _broadcast(self.c, self.Q, "c")

    def check_against(self, T: int, N: int) -> None:
        if self.P + self.L > T - 1:
            raise DimensionError(
                f"P + L = {self.P + self.L} requires T >= {self.P + self.L + 1}, got T={T}"
            )
        if self.Q > N * self.L:
            raise DimensionError(f"Q={self.Q} exceeds N*L={N * self.L}")

    def replace(self, **changes) -> "ModelSpec":
        from dataclasses import replace

        return replace(self, **changes)


def _broadcast(v, n: int, name: str) -> np.ndarray:
    if v is None:
        return np.full(n, DEFAULT_PRIOR)
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.size != n:
        raise DimensionError(f"{name} must have {n} entries, got {arr.size}")
    return arr.reshape(-1).copy()


@dataclass(frozen=True)
class LaggedDesign:
    """Targets ``y_plus`` (M x N*L) and regressors ``y_minus`` (M x N*P)."""

    y_plus: np.ndarray
    y_minus: np.ndarray
    P: int
    L: int
    N: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def M(self) -> int:
        return self.y_plus.shape[0]

    @property
    def gram_minus(self) -> np.ndarray:
        """``y_minus' y_minus`` (a block of ``gram``)."""
        D = self.D
        return self.gram[:D, :D]

    @property
    def D(self) -> int:
        return self.y_minus.shape[1]

    @property
    def K(self) -> int:
        return self.y_plus.shape[1]

    @property
    def stacked(self) -> np.ndarray:
        """``[y_minus, y_plus]`` side by side (M x (D + K))."""
        if "stacked" not in self._cache:
            self._cache["stacked"] = np.hstack([self.y_minus, self.y_plus])
        return self._cache["stacked"]

    @property
    def gram(self) -> np.ndarray:
        """Gram matrix of ``stacked``; every sufficient statistic derives from it."""
        if "gram" not in self._cache:
            self._cache["gram"] = self.stacked.T @ self.stacked
        return self._cache["gram"]

    @property
    def sq_plus(self) -> np.ndarray:
        """Per-column sums of squares of ``y_plus``."""
        D = self.D
        return np.diagonal(self.gram)[D:]


def lag_matrices(data: np.ndarray, P: int, L: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(y_plus, y_minus)`` for a raw ``T x N`` array, no checks."""
    T, N = data.shape
    M = T - P - L + 1
    y_minus = np.empty((M, N * P))
    for i in range(1, P + 1):
        y_minus[:, (i - 1) * N:i * N] = data[P - i:P - i + M]
    y_plus = np.empty((M, N * L))
    for l in range(1, L + 1):
        y_plus[:, (l - 1) * N:l * N] = data[P + l - 1:P + l - 1 + M]
    return y_plus, y_minus


def embed_lags(series: TimeSeries, P: int, L: int = 1) -> LaggedDesign:
    """Build the autoregression design.

    Row ``m`` (0-based) corresponds to time ``t = P + m`` (0-based), with
    regressors ``y_{t-1}, ..., y_{t-P}`` and targets ``y_t, ..., y_{t+L-1}``.
    """
    if not series.centered:
        raise ValidationError("series must be centered before embedding")
    if P < 1 or L < 1:
        raise ValidationError("P and L must be positive")
    if series.T < P + L + 1:
        raise DimensionError(f"series too short: need T >= {P + L + 1} (P + L + 1), got T={series.T}")
    y_plus, y_minus = lag_matrices(series.data, P, L)
    return LaggedDesign(y_plus, y_minus, P, L, series.N)


def as_series(data, channel_names: Sequence[str] = ()) -> TimeSeries:
    if isinstance(data, TimeSeries):
        return data
    return TimeSeries(np.asarray(data, dtype=float), tuple(channel_names))
