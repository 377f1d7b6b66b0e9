"""Free-energy model selection over a (P, Q) grid."""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import ModelSpec, NumericalError, TimeSeries, ValidationError, as_series, center

WORKERS_ENV = "LRMAR_WORKERS"


class SelectionError(RuntimeError):
    """No grid cell produced a usable fit."""


@dataclass
class RunRecord:
    P: int
    Q: int
    repeat: int
    seed: int
    free_energy: float
    converged: bool
    iterations: int
    seconds: float
    error: Optional[str] = None


@dataclass
class SelectionGrid:
    """Per-cell best-of-restarts results; arrays are ``len(p_values) x len(q_values)``."""

    p_values: list
    q_values: list
    free_energy: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    seconds: np.ndarray
    best: tuple
    runs: list = field(default_factory=list)

    def cell(self, P: int, Q: int) -> dict:
        i, j = self.p_values.index(P), self.q_values.index(Q)
        return {
            "free_energy": float(self.free_energy[i, j]),
            "converged": bool(self.converged[i, j]),
            "iterations": int(self.iterations[i, j]),
            "seconds": float(self.seconds[i, j]),
        }


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValidationError(f"{WORKERS_ENV} must be an integer, got {env!r}")
        if n < 1:
            raise ValidationError(f"{WORKERS_ENV} must be positive")
        return n
    return os.cpu_count() or 1


def _run_cell(data: np.ndarray, spec: ModelSpec, repeat: int) -> RunRecord:
    from .vb import fit

    init = "svd" if repeat == 0 else "random"
    t0 = time.perf_counter()
    try:
        model = fit(TimeSeries(data, centered=True), spec, init=init)
    except (NumericalError, ValidationError) as exc:
        return RunRecord(spec.P, spec.Q, repeat, spec.seed, np.nan, False, 0,
                         time.perf_counter() - t0, str(exc))
    return RunRecord(spec.P, spec.Q, repeat, spec.seed, model.free_energy, model.converged,
                     model.iterations, time.perf_counter() - t0)


def pick_best(p_values: Sequence[int], q_values: Sequence[int], free_energy: np.ndarray,
              converged: np.ndarray, tie_rtol: float = 0.0) -> tuple:
    """Argmin over converged cells; near-ties go to smaller Q, then smaller P."""
    ok = converged & np.isfinite(free_energy)
    if not ok.any():
        raise SelectionError("no grid cell converged")
    fmin = free_energy[ok].min()
    tied = ok & (free_energy <= fmin + tie_rtol * abs(fmin))
    candidates = [(q_values[j], p_values[i]) for i, j in zip(*np.nonzero(tied))]
    q, p = min(candidates)
    return p, q


def grid_select(series, p_values: Sequence[int], q_values: Sequence[int],
                spec_template: Optional[ModelSpec] = None, repeats: int = 3,
                workers: Optional[int] = None, tie_rtol: float = 0.0) -> SelectionGrid:
    """Fit every (P, Q) with ``repeats`` restarts and keep the lowest free energy.

    Restart ``r`` uses seed ``spec_template.seed + r``; restart 0 starts from
    the SVD initialisation, the others from a seeded random one. A restart
    that raises or fails to converge is discarded; a cell with no surviving
    restart is reported as not converged and cannot be selected. Results do
    not depend on ``workers``.
    """
    p_values, q_values = [int(p) for p in p_values], [int(q) for q in q_values]
    if not p_values or not q_values:
        raise ValidationError("grid must be non-empty")
    if repeats < 1:
        raise ValidationError("repeats must be >= 1")
    series = as_series(series)
    data = np.array(center(series).data)
    template = spec_template or ModelSpec(P=p_values[0], Q=q_values[0])
    c = template.c if template.c is None or np.ndim(template.c) == 0 else None
    jobs = []
    for P in p_values:
        for Q in q_values:
            for r in range(repeats):
                spec = template.replace(P=P, Q=Q, c=c, seed=template.seed + r)
                spec.check_against(series.T, series.N)
                jobs.append((spec, r))

    n_workers = default_workers() if workers is None else int(workers)
    if n_workers <= 1:
        runs = [_run_cell(data, spec, r) for spec, r in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            futures = [pool.submit(_run_cell, data, spec, r) for spec, r in jobs]
            runs = [f.result() for f in futures]

    shape = (len(p_values), len(q_values))
    fe = np.full(shape, np.nan)
    conv = np.zeros(shape, dtype=bool)
    iters = np.zeros(shape, dtype=int)
    secs = np.zeros(shape)
    for rec in runs:
        i, j = p_values.index(rec.P), q_values.index(rec.Q)
        secs[i, j] += rec.seconds
        good = rec.error is None and rec.converged
        if good and not (conv[i, j] and fe[i, j] <= rec.free_energy):
            fe[i, j], conv[i, j], iters[i, j] = rec.free_energy, True, rec.iterations
        elif not conv[i, j] and rec.error is None and not (fe[i, j] <= rec.free_energy):
            fe[i, j], iters[i, j] = rec.free_energy, rec.iterations
    best = pick_best(p_values, q_values, fe, conv, tie_rtol)
    return SelectionGrid(p_values, q_values, fe, conv, iters, secs, best, runs)


def grid_to_csv(grid: SelectionGrid) -> str:
    """One row per restart, then a ``# best`` comment line."""
    from .io import fmt

    lines = ["P,Q,free_energy,converged,iterations,seconds,repeat"]
    for rec in grid.runs:
        lines.append(
            f"{rec.P},{rec.Q},{fmt(rec.free_energy)},{int(rec.converged)},"
            f"{rec.iterations},{fmt(round(rec.seconds, 6))},{rec.repeat}"
        )
    lines.append(f"# best P={grid.best[0]} Q={grid.best[1]}")
    return "\n".join(lines) + "\n"
