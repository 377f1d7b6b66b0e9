"""CSV ingestion/emission and versioned JSON model files."""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import ModelSpec, TimeSeries, ValidationError
from .vb import (
    FittedModel,
    FreeEnergyReport,
    GammaFamily,
    LatentPosterior,
    VPosterior,
    WPosterior,
)

MODEL_FORMAT = "lrmar-model-v1"
WCCA_FORMAT = "lrmar-wcca-v1"


def fmt(x: float) -> str:
    """17 significant digits: round-trips every double exactly."""
    return repr(float(x)) if np.isfinite(x) else ("nan" if np.isnan(x) else repr(float(x)))


def atomic_write(path, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see partial output."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def read_csv(path) -> TimeSeries:
    """Read a ``T x N`` series; an optional first row of channel names is allowed."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(tok.strip() for tok in r)]
    if not rows:
        raise ValidationError(f"{path}: empty file")
    names: Sequence[str] = ()
    if not all(_is_number(tok) for tok in rows[0]):
        names = tuple(tok.strip() for tok in rows[0])
        rows = rows[1:]
    width = len(names) if names else len(rows[0]) if rows else 0
    values = []
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValidationError(f"{path}: row {i + 1} has {len(row)} fields, expected {width}")
        try:
            values.append([float(tok) for tok in row])
        except ValueError:
            raise ValidationError(f"{path}: non-numeric or missing value in data row {i + 1}")
    if not values:
        raise ValidationError(f"{path}: no data rows")
    data = np.array(values)
    try:
        return TimeSeries(data, names)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def matrix_to_csv(matrix: np.ndarray, header: Iterable[str] | None = None) -> str:
    lines = []
    if header is not None:
        lines.append(",".join(header))
    for row in np.atleast_2d(matrix):
        lines.append(",".join(fmt(x) for x in row))
    return "\n".join(lines) + "\n"


def write_matrix_csv(path, matrix: np.ndarray, header: Iterable[str] | None = None) -> None:
    atomic_write(path, matrix_to_csv(matrix, header))


# ---------------------------------------------------------------------------
# JSON models
# ---------------------------------------------------------------------------

def _arr(x) -> list:
    return np.asarray(x, dtype=float).tolist()


def spec_to_dict(spec: ModelSpec) -> dict:
    out = {}
    for name in ("P", "Q", "L", "iota", "kappa", "nu", "max_iter", "tol", "seed"):
        out[name] = getattr(spec, name)
    for name in ("a", "b", "c"):
        v = getattr(spec, name)
        out[name] = None if v is None else _arr(v)
    return out


def spec_from_dict(d: dict) -> ModelSpec:
    return ModelSpec(**d)


def _gamma_to_dict(g: GammaFamily) -> dict:
    return {"shape": float(g.shape), "rates": _arr(g.rates)}


def _gamma_from_dict(d: dict) -> GammaFamily:
    return GammaFamily(d["shape"], np.array(d["rates"], dtype=float))


def _check_version(d: dict, expected: str) -> None:
    fmt_name = d.get("format", "")
    name, _, major = fmt_name.rpartition("-v")
    exp_name, _, exp_major = expected.rpartition("-v")
    if name != exp_name:
        raise ValidationError(f"expected a {expected} document, got {fmt_name!r}")
    if not major.isdigit() or int(major) > int(exp_major):
        raise ValidationError(f"unsupported format version {fmt_name!r} (this build reads {expected})")


def model_to_dict(model: FittedModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "spec": spec_to_dict(model.spec),
        "N": model.N,
        "channel_names": list(model.channel_names),
        "means": _arr(model.means),
        "latent": {"z_bar": _arr(model.latent.z_bar), "s_z": _arr(model.latent.s_z)},
        "w": {"w_bar": _arr(model.w.w_bar), "s_w": _arr(model.w.s_w)},
        "v": {"v_bar": _arr(model.v.v_bar), "s_v": _arr(model.v.s_v)},
        "omega": _gamma_to_dict(model.omega),
        "alpha": _gamma_to_dict(model.alpha),
        "gamma": _gamma_to_dict(model.gamma),
        "free_energy_trace": _trace_to_list(model.free_energy_trace),
        "converged": bool(model.converged),
        "iterations": int(model.iterations),
    }


def model_from_dict(d: dict) -> FittedModel:
    _check_version(d, MODEL_FORMAT)
    a = lambda x: np.array(x, dtype=float)  # noqa: E731
    return FittedModel(
        spec=spec_from_dict(d["spec"]),
        latent=LatentPosterior(a(d["latent"]["z_bar"]), a(d["latent"]["s_z"])),
        w=WPosterior(a(d["w"]["w_bar"]), a(d["w"]["s_w"])),
        v=VPosterior(a(d["v"]["v_bar"]), a(d["v"]["s_v"])),
        omega=_gamma_from_dict(d["omega"]),
        alpha=_gamma_from_dict(d["alpha"]),
        gamma=_gamma_from_dict(d["gamma"]),
        free_energy_trace=_trace_from_list(d["free_energy_trace"]),
        means=a(d["means"]),
        converged=d["converged"],
        iterations=d["iterations"],
        N=d["N"],
        channel_names=tuple(d["channel_names"]),
    )


def dumps(d: dict) -> str:
    # json emits repr() of floats: shortest string that round-trips exactly
    return json.dumps(d, indent=1, allow_nan=True) + "\n"


def save_model(model: FittedModel, path) -> None:
    atomic_write(path, dumps(model_to_dict(model)))


def load_model(path) -> FittedModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def _trace_to_list(trace) -> list:
    return [
        {
            "neg_entropy_z": r.neg_entropy_z,
            "kl_phi": r.kl_phi,
            "neg_avg_loglik_y": r.neg_avg_loglik_y,
            "neg_avg_loglik_z": r.neg_avg_loglik_z,
            "total": r.total,
        }
        for r in trace
    ]


def _trace_from_list(items) -> list:
    return [
        FreeEnergyReport(r["neg_entropy_z"], r["kl_phi"], r["neg_avg_loglik_y"], r["neg_avg_loglik_z"])
        for r in items
    ]


def wcca_to_dict(post) -> dict:
    return {
        "format": WCCA_FORMAT,
        "spec": spec_to_dict(post.spec),
        "N": post.N,
        "channel_names": list(post.channel_names),
        "means": _arr(post.means),
        "z_bar": _arr(post.z_bar),
        "s_z": _arr(post.s_z),
        "f_bar": _arr(post.f_bar),
        "s_f": _arr(post.s_f),
        "g_bar": _arr(post.g_bar),
        "s_g": _arr(post.s_g),
        "noise1": _gamma_to_dict(post.noise1),
        "noise2": _gamma_to_dict(post.noise2),
        "ard_f": _gamma_to_dict(post.ard_f),
        "ard_g": _gamma_to_dict(post.ard_g),
        "free_energy_trace": _trace_to_list(post.free_energy_trace),
        "converged": bool(post.converged),
        "iterations": int(post.iterations),
    }


def wcca_from_dict(d: dict):
    from .extensions import WccaPosterior

    _check_version(d, WCCA_FORMAT)
    a = lambda x: np.array(x, dtype=float)  # noqa: E731
    return WccaPosterior(
        z_bar=a(d["z_bar"]),
        s_z=a(d["s_z"]),
        f_bar=a(d["f_bar"]),
        s_f=a(d["s_f"]),
        g_bar=a(d["g_bar"]),
        s_g=a(d["s_g"]),
        noise1=_gamma_from_dict(d["noise1"]),
        noise2=_gamma_from_dict(d["noise2"]),
        ard_f=_gamma_from_dict(d["ard_f"]),
        ard_g=_gamma_from_dict(d["ard_g"]),
        spec=spec_from_dict(d["spec"]),
        free_energy_trace=_trace_from_list(d["free_energy_trace"]),
        means=a(d["means"]),
        converged=d["converged"],
        iterations=d["iterations"],
        N=d["N"],
        channel_names=tuple(d["channel_names"]),
    )


def save_wcca(post, path) -> None:
    atomic_write(path, dumps(wcca_to_dict(post)))


def load_wcca(path):
    with open(path) as fh:
        return wcca_from_dict(json.load(fh))
