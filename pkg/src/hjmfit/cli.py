"""Command-line entry point: ``hjmfit <subcommand> ...``.

Exit status is 0 on success, 1 on usage or input errors and 2 on numerical
failure (a non-converged fit or an aborted Monte Carlo run). Every file
written gets a ``<file>.manifest.json`` sibling with the resolved
configuration, the library version and digests of the inputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import asymptotic_cov, fisher
from .estimation import FitError, FitOptions, fit
from .experiments import McAbort, McConfig, run_clt, run_consistency
from .field_sim import generate_noise, simulate_surface
from .io import (
    InputError,
    atomic_write_json,
    atomic_write_text,
    read_box_json,
    read_curve,
    read_surface_csv,
    write_surface_csv,
)
from .likelihood import log_likelihood_grad_hess
from .market import martingale_check
from .params import ConstraintBox, ModelParams

THREADS_ENV = "HJMFIT_THREADS"
EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"{THREADS_ENV}: expected an integer, got {raw!r}") from None


def _add_params(p: argparse.ArgumentParser) -> None:
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--b", type=float, nargs="+", default=[0.0], help="risk parameters b_0 .. b_J")


def _add_mc(p: argparse.ArgumentParser) -> None:
    _add_params(p)
    p.add_argument("--K", type=float, default=1.0, help="rate constant: K_n = round(n K)")
    p.add_argument("--L", type=float, default=1.0, help="rate constant: L_n = round(n L)")
    p.add_argument("--replications", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--box", help="constraint box JSON (default beta [0.1, 2], rho [-0.9, 0.9], b [-2, 2])")
    p.add_argument("--seed-grid", type=int, default=5, help="multi-start grid size per axis")
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--csv", help="per-replication scaled errors CSV")
    p.add_argument("--threads", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hjmfit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hjmfit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a forward-rate surface")
    _add_params(p)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--initial-curve", help="file with K+L+1 initial forward rates (default flat 0)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit", help="maximum likelihood fit of a surface")
    p.add_argument("--input", required=True)
    p.add_argument("--box", required=True)
    p.add_argument("--J", type=int, required=True)
    p.add_argument("--seed-grid", type=int, default=5, help="multi-start grid size per axis")
    p.add_argument("--out", required=True)

    p = sub.add_parser("loglik", help="log-likelihood, gradient and Hessian at a point")
    _add_params(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out")

    p = sub.add_parser("asym", help="limiting information and covariance matrices")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--K", type=float, required=True)
    p.add_argument("--L", type=float, required=True)
    p.add_argument("--J", type=int, required=True)
    p.add_argument("--out")

    p = sub.add_parser("mc-consistency", help="Monte Carlo consistency study")
    _add_mc(p)
    p.add_argument("--n-grid", type=int, nargs="+", default=[10, 20, 40, 80])

    p = sub.add_parser("mc-clt", help="Monte Carlo check of the normal limit")
    _add_mc(p)
    p.add_argument("--n", type=int, required=True)

    p = sub.add_parser("martingale", help="Monte Carlo check of the discounted bond martingales")
    _add_params(p)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--maturity", type=int, required=True)
    p.add_argument("--replications", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt-drift", action="store_true", help="negative control: drop the convexity drift")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=None)
    return parser


def _digest(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out: str, args: argparse.Namespace, argv: list[str], inputs: list[str]) -> None:
    atomic_write_json(
        f"{out}.manifest.json",
        {
            "schema": 1,
            "version": __version__,
            "argv": argv,
            "resolved": {k: v for k, v in vars(args).items()},
            "inputs": {p: _digest(p) for p in inputs},
        },
    )


def _params(args) -> ModelParams:
    try:
        return ModelParams(args.beta, args.rho, tuple(args.b))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _box(args, J: int) -> ConstraintBox:
    if args.box:
        box = read_box_json(args.box)
        if box.J != J:
            raise UsageError(f"b: box has {box.J + 1} risk intervals, expected {J + 1}")
        return box
    return ConstraintBox((0.1, 2.0), (-0.9, 0.9), tuple((-2.0, 2.0) for _ in range(J + 1)))


def _output(args, obj, argv, inputs=()) -> None:
    if args.out:
        atomic_write_json(args.out, obj)
        _write_manifest(args.out, args, argv, list(inputs))
    else:
        json.dump(obj, sys.stdout, indent=2)
        sys.stdout.write("\n")


def _cmd_simulate(args, argv) -> int:
    params = _params(args)
    if args.K < 1 or args.L < 1:
        raise UsageError("K and L must be positive")
    if args.initial_curve:
        curve = read_curve(args.initial_curve)
        if curve.size != args.K + args.L + 1:
            raise UsageError(f"initial-curve: needs {args.K + args.L + 1} entries, got {curve.size}")
    else:
        curve = np.zeros(args.K + args.L + 1)
    surface = simulate_surface(params, curve, generate_noise(args.K, args.L, args.seed))
    write_surface_csv(surface, args.out)
    _write_manifest(args.out, args, argv, [args.initial_curve] if args.initial_curve else [])
    return EXIT_OK


def _cmd_fit(args, argv) -> int:
    surface = read_surface_csv(args.input)
    box = _box(args, args.J)
    if args.seed_grid < 1:
        raise UsageError("seed-grid: must be >= 1")
    try:
        result = fit(surface, box, FitOptions(grid=args.seed_grid))
    except FitError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    atomic_write_json(args.out, {"schema": 1} | result.to_dict())
    _write_manifest(args.out, args, argv, [args.input, args.box])
    if not result.converged:
        print(f"fit did not converge (projected gradient {result.grad_norm:.3g})", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_loglik(args, argv) -> int:
    params = _params(args)
    if params.beta == 0.0:
        raise UsageError("beta: the likelihood is undefined at beta = 0")
    ev = log_likelihood_grad_hess(params, read_surface_csv(args.input))
    _output(args, {"schema": 1} | ev.to_dict(), argv, [args.input])
    return EXIT_OK


def _cmd_asym(args, argv) -> int:
    if args.J < 0:
        raise UsageError("J: must be non-negative")
    params = ModelParams(args.beta, args.rho, (0.0,) * (args.J + 1))
    if params.beta == 0.0:
        raise UsageError("beta: must be nonzero")
    if not (args.K > 0 and args.L > 0):
        raise UsageError("K and L must be positive")
    cov = asymptotic_cov(params, args.K, args.L)
    obj = {
        "schema": 1,
        "beta": args.beta,
        "rho": args.rho,
        "K": args.K,
        "L": args.L,
        "J": args.J,
        "sigma": fisher(params, args.K, args.L).sigma.tolist(),
        "lambda": cov.full.tolist(),
        "lambda1": cov.lambda1.tolist(),
        "lambda2": cov.lambda2.tolist(),
    }
    _output(args, obj, argv)
    return EXIT_OK


def _mc_config(args, n_grid) -> McConfig:
    params = _params(args)
    try:
        return McConfig(
            true_params=params,
            box=_box(args, params.J),
            rate_constants=(args.K, args.L),
            n_grid=tuple(n_grid),
            replications=args.replications,
            seed=args.seed,
            fit_options=FitOptions(grid=args.seed_grid),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _cmd_mc(args, argv) -> int:
    threads = args.threads or _default_threads()
    args.threads = threads
    if args.command == "mc-clt":
        config = _mc_config(args, [args.n])
        runner = run_clt
    else:
        config = _mc_config(args, args.n_grid)
        runner = run_consistency
    try:
        report = runner(config, threads=threads)
    except McAbort as exc:
        print(f"Monte Carlo aborted: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    atomic_write_json(args.out, report.to_dict())
    _write_manifest(args.out, args, argv, [args.box] if args.box else [])
    if args.csv:
        atomic_write_text(args.csv, report.to_csv())
        _write_manifest(args.csv, args, argv, [args.box] if args.box else [])
    return EXIT_OK


def _cmd_martingale(args, argv) -> int:
    params = _params(args)
    threads = args.threads or _default_threads()
    args.threads = threads
    try:
        report = martingale_check(
            params,
            args.K,
            args.L,
            args.maturity,
            args.replications,
            args.seed,
            convexity=not args.corrupt_drift,
            threads=threads,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    atomic_write_text(args.out, report.to_csv())
    _write_manifest(args.out, args, argv, [])
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "loglik": _cmd_loglik,
    "asym": _cmd_asym,
    "mc-consistency": _cmd_mc,
    "mc-clt": _cmd_mc,
    "martingale": _cmd_martingale,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args, argv)
    except (UsageError, InputError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
