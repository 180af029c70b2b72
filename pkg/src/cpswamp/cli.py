"""Command-line front end.

Exit codes: 0 when the solver converged, 2 when it hit the iteration cap,
1 on usage or I/O errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from cpswamp.cp_model import read_factors, uniqueness_report, write_factors
from cpswamp.diagnostics import (
    DEFAULT_FLAT_TOL,
    DEFAULT_WINDOW,
    compare_methods,
    detect_swamp,
    export_trace_csv,
    threads_from_env,
)
from cpswamp.linalg_kernels import K_RANK_MAX_COLS
from cpswamp.problems import get_example, synthetic_low_rank
from cpswamp.solvers import Init, Method, SolveReport, SolverConfig, run
from cpswamp.tensor_core import TensorFormatError, read_tensor

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MAX_ITERS = 2

_LAMBDA_FLAGS = ("lambda0", "decay", "lambda_min")
_DEFAULTS = {
    "lambda0": 1.0,
    "decay": 0.75,
    "lambda_min": 1e-12,
    "fit_tol": 1e-5,
    "rel_change_tol": 0.0,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _solver_flags(p, max_iters, method_default="als"):
    p.add_argument("--method", choices=[m.value for m in Method], default=method_default)
    p.add_argument("--fit-tol", type=float)
    p.add_argument("--rel-change-tol", type=float)
    p.add_argument("--max-iters", type=int, default=max_iters)
    p.add_argument("--lambda0", type=float)
    p.add_argument("--decay", type=float)
    p.add_argument("--lambda-min", type=float)
    p.add_argument("--rank-tol", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    p.add_argument("--flat-tol", type=float, default=DEFAULT_FLAT_TOL)
    p.add_argument("--output-prefix")
    p.add_argument("--trace", help="trace CSV path (default: PREFIX.trace.csv)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cpswamp", description="CP decomposition by ALS / RALS")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    dec = sub.add_parser("decompose", help="decompose a tensor file")
    dec.add_argument("--input", required=True)
    dec.add_argument("--rank", type=int, required=True)
    dec.add_argument("--init-factors", help="factor file to start from")
    _solver_flags(dec, max_iters=10000)

    ex = sub.add_parser("example", help="run one of the built-in examples")
    ex.add_argument("which", type=int, choices=[1, 2, 3])
    ex.add_argument("--rank", type=int, help="example 2 only: 2 or 3")
    ex.add_argument("--init", choices=["permuted", "random"], default="permuted",
                    help="example 1 only")
    _solver_flags(ex, max_iters=50000)

    cmp_ = sub.add_parser("compare", help="seed sweep over several methods")
    src = cmp_.add_mutually_exclusive_group(required=True)
    src.add_argument("--input")
    src.add_argument("--example", type=int, choices=[1, 2, 3])
    src.add_argument("--synthetic", metavar="IxJxK",
                     help="exact low-rank tensor with random factors")
    cmp_.add_argument("--rank", type=int)
    cmp_.add_argument("--methods", default="als,rals")
    cmp_.add_argument("--seeds", type=int, default=20)
    _solver_flags(cmp_, max_iters=50000)
    return parser


def _config(args, method: str, rank: int) -> SolverConfig:
    if method == Method.ALS.value:
        ignored = [f for f in _LAMBDA_FLAGS if getattr(args, f) is not None]
        if ignored:
            names = ", ".join("--" + f.replace("_", "-") for f in ignored)
            print(f"warning: {names} ignored for method als", file=sys.stderr)
    values = {
        k: (getattr(args, k) if getattr(args, k) is not None else v)
        for k, v in _DEFAULTS.items()
    }
    try:
        return SolverConfig(
            method=method,
            rank=rank,
            max_iters=args.max_iters,
            rank_tol=args.rank_tol,
            seed=args.seed,
            **values,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _print_report(rep: SolveReport, args):
    print(f"status: {rep.status.value}")
    print(f"iterations: {rep.iterations}")
    print(f"fit_error: {rep.fit_error:.17g}")
    print(f"critical_point_residual: {rep.critical_point_residual:.17g}")
    sw = detect_swamp(rep.trace, args.window, args.flat_tol, rep.config.fit_tol)
    if sw.detected:
        spans = ", ".join(f"{a}-{b}" for a, b in sw.intervals)
        print(f"swamp: yes, iterations {spans}, plateau at {sw.plateau_depth:.4g}")
    else:
        print("swamp: no")


def _finish(rep: SolveReport, args, prefix: str) -> int:
    trace_path = args.trace or f"{prefix}.trace.csv"
    export_trace_csv(rep.trace, trace_path)
    print(f"trace: {trace_path}")
    return EXIT_OK if rep.status.converged else EXIT_MAX_ITERS


def cmd_decompose(args) -> int:
    if args.rank < 1:
        raise UsageError(f"--rank must be at least 1, got {args.rank}")
    cfg = _config(args, args.method, args.rank)
    t = read_tensor(args.input)
    init = None
    if args.init_factors:
        init = read_factors(args.init_factors)
        cfg = replace(cfg, init=Init.PROVIDED)
    try:
        rep = run(t, cfg, init)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    prefix = args.output_prefix or str(Path(args.input).with_suffix(""))
    _print_report(rep, args)
    if t.order == 3 and rep.factors.rank <= K_RANK_MAX_COLS:
        print(f"uniqueness: {uniqueness_report(rep.factors).describe()}")
    factor_path = f"{prefix}.factors.txt"
    write_factors(rep.factors, factor_path)
    print(f"factors: {factor_path}")
    return _finish(rep, args, prefix)


def cmd_example(args) -> int:
    kwargs = {}
    if args.which == 1:
        kwargs = {"init": args.init, "seed": args.seed}
    elif args.which == 2:
        kwargs = {"rank": args.rank or 2}
    elif args.rank is not None:
        raise UsageError("--rank is fixed for example 3")
    try:
        prob = get_example(args.which, **kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cfg = _config(args, args.method, prob.rank)
    rep = run(prob.tensor, cfg, prob.init)
    print(f"{prob.name} ({args.method}, dims {prob.tensor.dims}, rank {prob.rank})")
    _print_report(rep, args)
    prefix = args.output_prefix or f"{prob.name}-{args.method}"
    return _finish(rep, args, prefix)


def _parse_dims(text: str):
    try:
        dims = tuple(int(x) for x in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"bad --synthetic extents {text!r}") from None
    if not dims or any(d < 1 for d in dims):
        raise UsageError(f"bad --synthetic extents {text!r}")
    return dims


def cmd_compare(args) -> int:
    if args.seeds < 1:
        raise UsageError(f"--seeds must be at least 1, got {args.seeds}")
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    valid = {m.value for m in Method}
    if not methods or any(m not in valid for m in methods):
        raise UsageError(f"--methods must list some of {sorted(valid)}")

    if args.example is not None:
        kwargs = {"rank": args.rank or 2} if args.example == 2 else {}
        try:
            prob = get_example(args.example, **kwargs)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        t, rank, name = prob.tensor, prob.rank, prob.name
    else:
        if args.rank is None or args.rank < 1:
            raise UsageError("--rank (>= 1) is required with --input/--synthetic")
        rank = args.rank
        if args.input:
            t, name = read_tensor(args.input), Path(args.input).stem
        else:
            t = synthetic_low_rank(_parse_dims(args.synthetic), rank)
            name = f"synthetic-{args.synthetic}-rank{rank}"

    configs = [_config(args, m, rank) for m in methods]
    summary = compare_methods(t, configs, args.seeds, max_workers=threads_from_env())
    print(f"{name}: {args.seeds} seeds")
    print(summary.to_table())
    prefix = args.output_prefix or f"{name}-compare"
    path = f"{prefix}.csv"
    summary.write_csv(path)
    print(f"summary: {path}")
    return EXIT_OK


_COMMANDS = {"decompose": cmd_decompose, "example": cmd_example, "compare": cmd_compare}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(message)s",
        stream=sys.stderr,
    )
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"cpswamp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TensorFormatError, OSError) as exc:
        print(f"cpswamp: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
