"""Command-line interface: ``qdiscrim {helstrom,sweep,simulate,solve,oracle}``.

Exit codes: 0 success, 1 invalid input, 2 non-convergence (``solve`` only).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import calibsim, runner
from .helstrom import brute_force_oracle, helstrom_two_state
from .mlse import MlseOptions
from .states import StateParams, make_prior_povm, make_state, parse_settings, state_pair

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NOT_CONVERGED = 2


def _fmt_matrix(a: np.ndarray) -> str:
    rows = []
    for row in a:
        rows.append("  [" + ", ".join(f"{z.real:+.12f}{z.imag:+.12f}j" for z in row) + "]")
    return "\n".join(rows)


def cmd_helstrom(args) -> int:
    rho1, rho2 = state_pair(args.alpha, args.d1, args.d2)
    rep = helstrom_two_state(rho1, rho2)
    print(f"error_rate {rep.error_rate!r}")
    for label, e in zip(rep.povm.labels, rep.povm.elements):
        print(f"Pi_{label} =")
        print(_fmt_matrix(e))
    print(f"extremal_residual {rep.extremal_residual!r}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    rho1, rho2 = state_pair(args.alpha, args.d1, args.d2)
    print(f"error_rate {brute_force_oracle(rho1, rho2, args.grid)!r}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = runner.load_sweep_config(args.config)
    rows = runner.run_sweep(config)
    runner.write_csv(rows, args.out)
    bad = sum(1 for r in rows if not r.converged)
    print(f"wrote {len(rows)} rows to {args.out} ({bad} not converged)")
    return EXIT_OK


def cmd_simulate(args) -> int:
    sign = {"+": 1, "-": -1, "+1": 1, "-1": -1}.get(args.sign)
    if sign is None:
        raise ValueError(f"--sign must be + or -, got {args.sign!r}")
    params = StateParams(args.alpha, args.d, sign)
    settings = parse_settings(args.settings)
    cal = calibsim.CalibrationConfig((params,), settings, args.shots, args.seed)
    freqs = calibsim.sample_frequencies(cal)[0]
    prior = make_prior_povm(settings)
    doc = {
        "alpha": args.alpha,
        "d": args.d,
        "sign": args.sign,
        "settings": list(settings),
        "shots": "inf" if cal.asymptotic else cal.shots,
        "seed": cal.seed,
        "labels": list(prior.labels),
        "frequencies": [float(x) for x in freqs],
        "state": runner.encode_matrix(make_state(params)),
    }
    if not cal.asymptotic:
        doc["counts_plus"] = [int(c) for c in calibsim.sample_counts(cal)[0]]
    Path(args.out).write_text(json.dumps(doc, indent=1) + "\n")
    print(f"wrote calibration dataset to {args.out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    overrides = {}
    if args.tol is not None:
        overrides["tol"] = args.tol
    if args.max_iter is not None:
        overrides["max_iter"] = args.max_iter
    if args.damping is not None:
        overrides["damping"] = args.damping
    result, report = runner.solve_problem_file(args.problem, MlseOptions(**overrides))
    text = json.dumps(report, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdiscrim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("helstrom", help="exact optimum for two known states")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--d1", type=float, required=True)
    p.add_argument("--d2", type=float, required=True)
    p.set_defaults(func=cmd_helstrom)

    p = sub.add_parser("sweep", help="run an alpha/seed sweep and write CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="emit one calibration dataset")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--d", type=float, required=True)
    p.add_argument("--sign", required=True)
    p.add_argument("--settings", default="x,y")
    p.add_argument("--shots", default="1000")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve", help="estimate states and design the POVM for a problem file")
    p.add_argument("--problem", required=True)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--damping", type=float)
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("oracle", help="brute-force error rate over projective measurements")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--d1", type=float, required=True)
    p.add_argument("--d2", type=float, required=True)
    p.add_argument("--grid", type=int, default=400)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, NotImplementedError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ArithmeticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED if args.command == "solve" else EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
