"""Command-line front end.

Exit codes: 0 success, 1 invalid input (bad flags, malformed CSV, dimension
mismatch, unreadable model file), 2 numerical failure during fitting.
Grid flags take ``a..b`` (inclusive) or comma lists such as ``2,4,6``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import io
from .bench import DEFAULT_FREQUENCIES, SinusoidConfig, run_benchmark, simulate_sinusoids, write_bench_csv
from .core import ModelSpec, NumericalError, ValidationError
from .extensions import fit_wcca, wcca_transform
from .selection import SelectionError, grid_select, grid_to_csv
from .vb import fit, predict_one_step, reconstruct, transform

log = logging.getLogger("lrmar")


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message} (see {self.prog} --help)")


def parse_range(text: str) -> list[int]:
    """``"2..8"`` -> [2, ..., 8]; ``"1,3,5"`` -> [1, 3, 5]; ``"4"`` -> [4]."""
    try:
        if ".." in text:
            lo, hi = (int(x) for x in text.split("..", 1))
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a..b or a comma list of integers, got {text!r}")


# ---------------------------------------------------------------------------
# argument groups
# ---------------------------------------------------------------------------

def _add_prior_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("priors and stopping")
    g.add_argument("--tol", type=float, default=1e-8, help="relative free-energy change to stop at")
    g.add_argument("--max-iter", type=int, default=500)
    g.add_argument("--seed", type=int, default=0)
    for name, what in (("iota", "noise shape"), ("a", "noise rate"), ("kappa", "W ARD shape"),
                       ("b", "W ARD rate"), ("nu", "V ARD shape"), ("c", "V ARD rate")):
        g.add_argument(f"--{name}", type=float, default=1e-3, help=f"{what} (default 1e-3)")


def _spec(args, P: int, Q: int, L: int = 1) -> ModelSpec:
    return ModelSpec(P=P, Q=Q, L=L, iota=args.iota, a=args.a, kappa=args.kappa, b=args.b,
                     nu=args.nu, c=args.c, max_iter=args.max_iter, tol=args.tol, seed=args.seed)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lrmar", description="Low-rank MAR and wCCA by variational Bayes.",
                     epilog="Grid flags accept a..b (inclusive) or comma lists.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="synthetic sinusoid mixtures")
    p.add_argument("--T", type=int, default=4000)
    p.add_argument("--N", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frequencies", type=lambda s: tuple(float(x) for x in s.split(",")),
                   default=DEFAULT_FREQUENCIES, help="comma list, cycles per sample")
    p.add_argument("--include-prob", type=float, default=0.4)
    p.add_argument("--noise-std", type=float, default=0.5)
    p.add_argument("--phase-mode", choices=("pair", "sinusoid"), default="pair",
                   help="independent phase per channel/sinusoid pair, or one per sinusoid")
    p.add_argument("--out", required=True)
    p.add_argument("--clean-out", help="also write the noise-free signal")

    p = sub.add_parser("fit", help="fit LR-MAR (L > 1 gives the multi-lag model)")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--P", type=int, required=True)
    p.add_argument("--Q", type=int, required=True)
    p.add_argument("--L", type=int, default=1)
    p.add_argument("--init", choices=("svd", "random"), default="svd")
    p.add_argument("--out", required=True, help="model JSON")
    _add_prior_flags(p)

    p = sub.add_parser("select", help="free-energy grid search over P and Q")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--P", type=parse_range, required=True)
    p.add_argument("--Q", type=parse_range, required=True)
    p.add_argument("--L", type=int, default=1)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--workers", type=int, default=None,
                   help="process pool size (default: $LRMAR_WORKERS or the number of cores)")
    p.add_argument("--out", required=True, help="grid CSV")
    _add_prior_flags(p)

    p = sub.add_parser("transform", help="latent means of a series under a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("reconstruct", help="map latent values back to channel space")
    p.add_argument("--model", required=True)
    p.add_argument("--z", required=True)
    p.add_argument("--original-units", action="store_true", help="add the training means back")
    p.add_argument("--out", required=True)

    p = sub.add_parser("predict", help="predictive mean and covariance after the end of a series")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("wcca", help="fit windowed CCA with P = L")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--P", type=int, required=True)
    p.add_argument("--Q", type=int, required=True)
    p.add_argument("--init", choices=("svd", "random"), default="svd")
    p.add_argument("--out", required=True, help="model JSON")
    p.add_argument("--z-out", help="also write the latent means")
    _add_prior_flags(p)

    p = sub.add_parser("bench", help="PCA vs LR-MAR explained variance on synthetic data")
    p.add_argument("--T", type=int, default=4000)
    p.add_argument("--N", type=int, default=12)
    p.add_argument("--noise-std", type=float, default=0.5)
    p.add_argument("--phase-mode", choices=("pair", "sinusoid"), default="pair")
    p.add_argument("--P", type=int, default=6)
    p.add_argument("--Q", type=parse_range, default=list(range(1, 13)))
    p.add_argument("--seeds", type=parse_range, default=[0])
    p.add_argument("--out", required=True)
    return parser


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

class _Stage:
    name = "parsing arguments"


@contextmanager
def stage(name: str):
    _Stage.name = name
    log.info("%s", name)
    yield


def _check_paths(inputs=(), outputs=()) -> None:
    for p in inputs:
        if p is not None and not Path(p).is_file():
            raise ValidationError(f"input file not found: {p}")
    for p in outputs:
        if p is None:
            continue
        parent = Path(p).resolve().parent
        if not parent.is_dir():
            raise ValidationError(f"output directory does not exist: {parent}")
        if not os.access(parent, os.W_OK):
            raise ValidationError(f"output directory is not writable: {parent}")


def _load_any(path):
    """A fitted LR-MAR or wCCA model, by the document's format tag."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not a JSON model file ({exc})")
    if str(doc.get("format", "")).startswith("lrmar-wcca-"):
        return "wcca", io.wcca_from_dict(doc)
    return "lrmar", io.model_from_dict(doc)


def cmd_simulate(args) -> None:
    _check_paths(outputs=(args.out, args.clean_out))
    with stage("simulating"):
        config = SinusoidConfig(T=args.T, N=args.N, n_sinusoids=len(args.frequencies),
                                frequencies=args.frequencies, include_prob=args.include_prob,
                                noise_std=args.noise_std, seed=args.seed, phase_mode=args.phase_mode)
        noisy, clean = simulate_sinusoids(config)
    with stage("writing output"):
        io.write_matrix_csv(args.out, noisy.data)
        if args.clean_out:
            io.write_matrix_csv(args.clean_out, clean.data)


def cmd_fit(args) -> None:
    _check_paths((args.input,), (args.out,))
    with stage("reading input"):
        series = io.read_csv(args.input)
        spec = _spec(args, args.P, args.Q, args.L)
        spec.check_against(series.T, series.N)
    with stage("fitting"):
        model = fit(series, spec, init=args.init)
    with stage("writing output"):
        io.save_model(model, args.out)
    print(f"free_energy={io.fmt(model.free_energy)} iterations={model.iterations} converged={model.converged}")


def cmd_select(args) -> None:
    _check_paths((args.input,), (args.out,))
    with stage("reading input"):
        series = io.read_csv(args.input)
        template = _spec(args, args.P[0], args.Q[0], args.L)
    with stage("grid search"):
        grid = grid_select(series, args.P, args.Q, template, repeats=args.repeats, workers=args.workers)
    with stage("writing output"):
        io.atomic_write(args.out, grid_to_csv(grid))
    print(f"best P={grid.best[0]} Q={grid.best[1]}")


def cmd_transform(args) -> None:
    _check_paths((args.model, args.input), (args.out,))
    with stage("reading input"):
        kind, model = _load_any(args.model)
        series = io.read_csv(args.input)
    with stage("transforming"):
        z = wcca_transform(model, series) if kind == "wcca" else transform(model, series)
    with stage("writing output"):
        io.write_matrix_csv(args.out, z)


def cmd_reconstruct(args) -> None:
    _check_paths((args.model, args.z), (args.out,))
    with stage("reading input"):
        kind, model = _load_any(args.model)
        if kind != "lrmar":
            raise ValidationError("reconstruct needs an LR-MAR model")
        z = io.read_csv(args.z).data
    with stage("reconstructing"):
        y = reconstruct(model, z, original_units=args.original_units)
    with stage("writing output"):
        io.write_matrix_csv(args.out, y)


def cmd_predict(args) -> None:
    _check_paths((args.model, args.input), (args.out,))
    with stage("reading input"):
        kind, model = _load_any(args.model)
        if kind != "lrmar":
            raise ValidationError("predict needs an LR-MAR model")
        series = io.read_csv(args.input)
        P = model.spec.P
        if series.N != model.N or series.T < P:
            raise ValidationError(f"need at least {P} rows of {model.N} channels")
        history = (series.data[-P:] - model.means)[::-1]
    with stage("predicting"):
        mean, cov = predict_one_step(model, history)
    with stage("writing output"):
        K = mean.size
        header = ["mean"] + [f"cov_{k}" for k in range(K)]
        io.write_matrix_csv(args.out, np.column_stack([mean + np.tile(model.means, model.spec.L), cov]), header)


def cmd_wcca(args) -> None:
    _check_paths((args.input,), (args.out, args.z_out))
    with stage("reading input"):
        series = io.read_csv(args.input)
        spec = _spec(args, args.P, args.Q, args.P)
        spec.check_against(series.T, series.N)
    with stage("fitting"):
        post = fit_wcca(series, spec, init=args.init)
    with stage("writing output"):
        io.save_wcca(post, args.out)
        if args.z_out:
            io.write_matrix_csv(args.z_out, post.z_bar)
    print(f"free_energy={io.fmt(post.free_energy)} iterations={post.iterations} converged={post.converged}")


def cmd_bench(args) -> None:
    _check_paths(outputs=(args.out,))
    with stage("benchmarking"):
        config = SinusoidConfig(T=args.T, N=args.N, noise_std=args.noise_std, phase_mode=args.phase_mode)
        rows = run_benchmark(config, args.Q, P=args.P, seeds=args.seeds)
    with stage("writing output"):
        write_bench_csv(rows, args.out)


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "select": cmd_select,
    "transform": cmd_transform,
    "reconstruct": cmd_reconstruct,
    "predict": cmd_predict,
    "wcca": cmd_wcca,
    "bench": cmd_bench,
}


def _prefix(command) -> str:
    return "lrmar" if command is None else f"lrmar {command}"


def run(argv=None) -> int:
    _Stage.name = "parsing arguments"
    command = None
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(name)s: %(message)s", stream=sys.stderr)
        COMMANDS[command](args)
    except (NumericalError, SelectionError) as exc:
        print(f"{_prefix(command)}: {_Stage.name}: numerical error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, OSError) as exc:
        print(f"{_prefix(command)}: {_Stage.name}: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
