"""Command-line front-end.

Subcommands: ``estimate`` (scatter-only), ``estimate-loc`` (joint
location-scatter), ``estimate-symm`` (symmetrized scatter over pairwise
differences) and ``bench`` (the benchmark harness).  Exit codes: 0 on
convergence, 1 on usage or I/O errors, 2 when the solver ran out of
iterations.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .bench import BenchConfig, run_benchmark, write_report, write_report_csv
from .dataio import CsvFormatError, SCHEMA_VERSION, dump_json, load_csv, result_payload
from .rho import RhoFamily
from .simulate import SimSpec
from .solver import (
    Algorithm,
    SolverConfig,
    estimate_location_scatter,
    estimate_scatter,
)
from .symmetrized import PairMode, estimate_symmetrized

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 2


class _Parser(argparse.ArgumentParser):
    # usage problems are exit code 1 in this tool, not argparse's 2
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit_(message)


class SystemExit_(Exception):
    def __init__(self, message):
        super().__init__(message)


def _solver_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--rho", choices=["tyler", "t"], default="t",
                        help="loss family: scale-free 'tyler' or the t-type "
                             "family (default)")
    parser.add_argument("--nu", type=float, default=1.0,
                        help="degrees of freedom for --rho t (default 1)")
    parser.add_argument("--delta", type=float, default=1e-7,
                        help="stopping tolerance on the gradient norm")
    parser.add_argument("--max-iter", type=int, default=None)
    parser.add_argument("--accept-factor", type=float, default=4.0)
    parser.add_argument("--deterministic", action="store_true",
                        help="force bit-reproducible serial execution")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=None, help="output JSON path "
                        "(default: stdout)")


def _csv_flags(parser: argparse.ArgumentParser, weights: bool = True) -> None:
    parser.add_argument("data", help="input CSV of data rows")
    parser.add_argument("--header", action="store_true",
                        help="skip a header row")
    if weights:
        parser.add_argument("--weights-col", default=None, metavar="NAME",
                            help="header column holding row weights")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robust-scatter",
                     description="M-estimation of multivariate scatter and "
                                 "location")
    sub = parser.add_subparsers(dest="command", required=True)

    p_est = sub.add_parser("estimate", parents=[], help="scatter-only fit")
    _csv_flags(p_est)
    _solver_flags(p_est)
    p_est.add_argument("--algo", choices=["fp", "g", "pn", "newton"],
                       default="pn")
    p_est.set_defaults(func=cmd_estimate)

    p_loc = sub.add_parser("estimate-loc", help="joint location-scatter fit")
    _csv_flags(p_loc)
    _solver_flags(p_loc)
    p_loc.add_argument("--algo", choices=["fp", "g", "pn", "newton", "fp3"],
                       default="pn")
    p_loc.set_defaults(func=cmd_estimate_loc)

    p_sym = sub.add_parser("estimate-symm",
                           help="symmetrized scatter over pairwise differences")
    _csv_flags(p_sym, weights=False)
    _solver_flags(p_sym)
    p_sym.add_argument("--mode", choices=["all", "seq", "auto"],
                       default="auto")
    p_sym.add_argument("--no-prewhiten", action="store_true")
    p_sym.set_defaults(func=cmd_estimate_symm)

    p_bench = sub.add_parser("bench", help="iteration-count benchmark sweep")
    p_bench.add_argument("--task", choices=["scatter", "location",
                                            "symmetrized"],
                         default="scatter")
    p_bench.add_argument("--models", default="gaussian",
                         help="comma list of gaussian,cauchy,outlier")
    p_bench.add_argument("--n", default="500", help="comma list of sample sizes")
    p_bench.add_argument("--q", default="5", help="comma list of dimensions")
    p_bench.add_argument("--nus", default="1", help="comma list of nu values")
    p_bench.add_argument("--algos", default="fp,g,pn",
                         help="comma list of fp,g,pn,newton,fp3")
    p_bench.add_argument("--reps", type=int, default=100)
    p_bench.add_argument("--outlier-delta", type=float, default=0.0)
    p_bench.add_argument("--delta", type=float, default=1e-7)
    p_bench.add_argument("--max-iter", type=int, default=None)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--mode", choices=["all", "seq", "auto"],
                         default="auto")
    p_bench.add_argument("--no-prewhiten", action="store_true")
    p_bench.add_argument("--deterministic", action="store_true")
    p_bench.add_argument("--out", default=None, help="report JSON path")
    p_bench.add_argument("--csv-out", default=None,
                         help="flat per-cell CSV path")
    p_bench.set_defaults(func=cmd_bench)
    return parser


def _family(args, q: int) -> RhoFamily:
    if args.rho == "tyler":
        return RhoFamily(0.0, q)
    if args.nu <= 0:
        raise ValueError("--rho t requires --nu > 0 (use --rho tyler for nu=0)")
    return RhoFamily(args.nu, q)


def _config(args) -> SolverConfig:
    return SolverConfig(
        delta=args.delta,
        max_iter=args.max_iter,
        accept_factor=args.accept_factor,
        algorithm=Algorithm(getattr(args, "algo", "pn")),
        deterministic_reduction=args.deterministic,
    )


def _echo(args, skip=("func", "command")) -> dict:
    return {k: v for k, v in vars(args).items() if k not in skip}


def cmd_estimate(args) -> int:
    sample = load_csv(args.data, header=args.header,
                      weights_col=args.weights_col)
    fit = estimate_scatter(sample, _family(args, sample.q), _config(args))
    dump_json(result_payload(fit, _echo(args)), args.out)
    return EXIT_OK if fit.converged else EXIT_NOT_CONVERGED


def cmd_estimate_loc(args) -> int:
    sample = load_csv(args.data, header=args.header,
                      weights_col=args.weights_col)
    family = _family(args, sample.q)
    fit = estimate_location_scatter(sample, family, _config(args))
    dump_json(result_payload(fit, _echo(args)), args.out)
    return EXIT_OK if fit.converged else EXIT_NOT_CONVERGED


def cmd_estimate_symm(args) -> int:
    sample = load_csv(args.data, header=args.header)
    fit = estimate_symmetrized(
        sample.X,
        _family(args, sample.q),
        _config(args),
        mode=PairMode(args.mode),
        prewhiten=not args.no_prewhiten,
        rng=args.seed,
    )
    dump_json(result_payload(fit, _echo(args)), args.out)
    return EXIT_OK if fit.converged else EXIT_NOT_CONVERGED


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def cmd_bench(args) -> int:
    sims = []
    for model in [m.strip() for m in args.models.split(",") if m.strip()]:
        for n in _int_list(args.n):
            for q in _int_list(args.q):
                sims.append(
                    SimSpec(
                        n=n, q=q, model=model,
                        outlier_delta=(args.outlier_delta
                                       if model == "outlier" else None),
                    )
                )
    config = BenchConfig(
        sims=tuple(sims),
        nus=tuple(float(v) for v in args.nus.split(",") if v.strip()),
        algorithms=tuple(a.strip() for a in args.algos.split(",") if a.strip()),
        task=args.task,
        replications=args.reps,
        seed=args.seed,
        delta=args.delta,
        max_iter=args.max_iter,
        mode=PairMode(args.mode),
        prewhiten=not args.no_prewhiten,
        deterministic=args.deterministic,
    )
    report = run_benchmark(config)
    if args.out:
        write_report(report, args.out)
    else:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "config_echo": report.config,
            "report": {
                "environment": report.environment,
                "cells": [
                    {k: v for k, v in vars(c).items()
                     if not k.endswith("_by_rep")}
                    for c in report.cells
                ],
            },
        }
        dump_json(payload, None)
    if args.csv_out:
        write_report_csv(report, args.csv_out)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit_ as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except SystemExit_ as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, CsvFormatError, ValueError, OverflowError,
            np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
