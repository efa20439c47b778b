"""Command-line entry point: ``cyclepile {simulate,couple,verify,experiment,fit}``.

Exit codes: 0 success, 1 failed assertion or verification, 2 invalid input,
3 cap exceeded.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from fractions import Fraction

import numpy as np

from .coupling import run_coupled_fast
from .errors import CapExceededError, CouplingViolationError, CyclepileError, InvalidSpecError, StateSpaceTooLargeError
from .experiment import ExperimentSpec, emit_outputs, fit_by_schedule, initial_counts, read_csv, run_experiment
from .field import InstructionField, Policy, default_cap, stabilize_arw, stabilize_ss
from .kernels import stabilize_arw_fast, stabilize_ss_fast
from .ring import ArwConfig, SandpileConfig

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_CAP = 0, 1, 2, 3


def _lam_arg(text: str, n: int) -> float:
    if text == "log":
        return math.log(n)
    return float(text)


def cmd_simulate(args) -> int:
    n = args.n
    if (args.p is None) == (args.lam is None):
        print("give exactly one of --p, --lambda", file=sys.stderr)
        return EXIT_INPUT
    lam = None if args.lam is None else _lam_arg(args.lam, n)
    field = InstructionField(args.seed, n, p=args.p, lam=lam)
    counts = tuple(int(c) for c in initial_counts(n, args.init, args.seed, 0))
    cap = default_cap(n) if args.cap is None else args.cap
    if args.model == "ss":
        config = SandpileConfig(counts)
        slow, fast = stabilize_ss, stabilize_ss_fast
    else:
        config = ArwConfig(counts)
        slow, fast = stabilize_arw, stabilize_arw_fast
    try:
        if args.policy is None and args.trace is None:
            res = fast(config, field, cap)
        else:
            policy = Policy(args.policy or "min")
            if args.trace:
                with open(args.trace, "w") as fh:
                    res = slow(config, field, policy, cap, policy_seed=args.seed, trace=fh)
            else:
                res = slow(config, field, policy, cap, policy_seed=args.seed)
    except CapExceededError as exc:
        print(f"cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    print(f"model={args.model} n={n} p={field.p:.6g} lambda={field.lam:.6g} seed={args.seed} init={config}")
    print(f"T={res.sequence_length} max_odometer={max(res.odometer)} final={res.final if n <= 64 else '(omitted)'}")
    return EXIT_OK


def cmd_couple(args) -> int:
    n = args.n
    lam = _lam_arg(args.lam, n)
    eta0 = ArwConfig.point(n)
    print("seed,n,lambda,T_minus_1,T_SS,T_ARW,max_odometer")
    status = EXIT_OK
    for trial in range(args.trials):
        seed = args.seed + trial
        field = InstructionField(seed, n, lam=lam)
        try:
            run = run_coupled_fast(eta0, field, args.cap)
        except CouplingViolationError as exc:
            print(f"VIOLATION seed={seed}: {exc}", file=sys.stderr)
            status = EXIT_FAIL
            continue
        except CapExceededError as exc:
            print(f"cap exceeded seed={seed}: {exc}", file=sys.stderr)
            return EXIT_CAP
        print(f"{seed},{n},{lam:g},{run.t_minus_1},{run.t_ss},{run.t_arw},{run.max_odometer}")
    if status == EXIT_OK:
        print(f"# {args.trials} runs: v = ceil(u_bar/2) and u_bar <= u at every site", file=sys.stderr)
    return status


def cmd_verify(args) -> int:
    from .exact import verify_suite

    try:
        lam = Fraction(args.lam)
    except (ValueError, ZeroDivisionError):
        print(f"--lambda must be rational, got {args.lam!r}", file=sys.stderr)
        return EXIT_INPUT
    try:
        report = verify_suite(args.n, lam, args.horizon)
    except (StateSpaceTooLargeError, ValueError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT
    print(report.render())
    return EXIT_OK if report.passed else EXIT_FAIL


def _print_fits(records) -> None:
    for label, fit in fit_by_schedule(records).items():
        print(f"{label}: slope={fit.slope:.4f} intercept={fit.intercept:.4f} R^2={fit.r_squared:.5f}")
        for n, m in fit.points:
            print(f"    n={n:<5d} mean T={m:.6g}")


def cmd_experiment(args) -> int:
    try:
        spec = ExperimentSpec.from_file(args.config)
    except (OSError, ValueError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INPUT
    records = run_experiment(spec, workers=args.workers)
    capped = [r for r in records if r.capped]
    print(f"{len(records)} runs, {len(capped)} capped")
    try:
        fits = fit_by_schedule(records)
    except CyclepileError as exc:
        print(f"no fit: {exc}", file=sys.stderr)
        fits = {}
    else:
        _print_fits(records)
    emit_outputs(records, fits, csv_path=args.out_csv, svg_path=args.out_svg)
    return EXIT_OK


def cmd_fit(args) -> int:
    try:
        records = read_csv(args.csv)
        _print_fits(records)
    except (OSError, CyclepileError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cyclepile", description="Stochastic sandpile / ARW on the cycle Z_n")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="stabilize one SS or ARW configuration")
    p.add_argument("--model", choices=["ss", "arw"], required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float)
    p.add_argument("--lambda", dest="lam", help="sleep rate, or 'log' for log n")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", choices=["point", "uniform"], default="point")
    p.add_argument("--policy", choices=[x.value for x in Policy],
                   help="use the reference driver with this toppling policy (default: compiled worklist)")
    p.add_argument("--cap", type=int)
    p.add_argument("--trace", help="write step,site,instruction,config lines to this file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("couple", help="coupled ARW/SS runs with identity checks")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--lambda", dest="lam", required=True, help="sleep rate, or 'log' for log n")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--cap", type=int)
    p.set_defaults(func=cmd_couple)

    p = sub.add_parser("verify", help="exact rational verification of the quotient construction")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--lambda", dest="lam", required=True, help="rational sleep rate, e.g. 7/3")
    p.add_argument("--horizon", type=int)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("experiment", help="Monte Carlo sweep from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-csv")
    p.add_argument("--out-svg")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("fit", help="log-log fits from a records CSV")
    p.add_argument("--csv", required=True)
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InvalidSpecError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
