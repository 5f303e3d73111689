"""Command-line entry point: one subcommand per study.

    pam-mild solve-mild --seed 7 --K 128 --N 512 --W zero
    pam-mild full-acceptance --out out

Exit status: 0 when the study passed (or declares no pass criterion),
1 when its criteria failed, 2 for configuration errors, 3 for solver failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConfigurationError, PAMError
from .studies import STUDIES, run_study

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

# flag -> (config path, type, help)
OVERRIDES = {
    "seed": (("seed",), int, "master seed; ensemble member i uses seed ^ i"),
    "paths": (("paths",), int, "ensemble size"),
    "K": (("solver", "K"), int, "sine modes of the solution"),
    "N": (("solver", "N"), int, "grid intervals (N >= 2K)"),
    "T": (("solver", "T"), float, "final time"),
    "dt": (("solver", "dt"), float, "time step"),
    "delta": (("solver", "delta"), float, "Picard block length"),
    "tol": (("solver", "tol"), float, "Picard tolerance"),
    "max_iter": (("solver", "max_iter"), int, "Picard iteration cap per block"),
    "beta": (("solver", "beta"), float, "solution space index H^{1+beta}_2"),
    "gamma": (("solver", "gamma"), float, "Hoelder index of the potential"),
    "W": (("noise", "potential"), str, "potential: bm, fbm, zero or linear"),
    "K_W": (("noise", "K_W"), int, "Karhunen-Loeve modes of the path (default N/2)"),
    "hurst": (("noise", "hurst"), float, "Hurst index for --W fbm"),
    "u0": (("u0",), str, "initial datum: m1, m2, random-hbeta or file"),
    "u0_file": (("u0_file",), str, "JSON sine field or CSV grid for --u0 file"),
    "mollifier": (("mollifier", "kind"), str, "GaussianKernel or SpectralCutoff"),
    "epsilon": (("mollifier", "epsilon"), float, "mollifier width"),
    "P": (("chaos", "P"), int, "chaos order"),
    "M": (("chaos", "M"), int, "noise modes in the chaos expansion"),
    "chaos_epsilon": (("chaos", "epsilon"), float, "mollifier width of the chaos noise"),
    "draws": (("chaos", "gram_draws"), int, "Monte-Carlo draws for the Gram check"),
    "stride": (("trajectory_stride",), int, "time stride of the saved trajectory"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file (see schemas/config.schema.json)")
    common.add_argument("--out", metavar="DIR", default="out", help="output root (default: out)")
    common.add_argument("--no-write", action="store_true", help="do not write report files")
    common.add_argument("--eps", type=float, nargs="+", metavar="E", help="decreasing mollifier widths")
    common.add_argument("--theta", type=float, nargs="+", metavar="T", help="smoothing exponents for study-kry")
    common.add_argument("-v", "--verbose", action="store_true")
    for flag, (_, typ, hlp) in OVERRIDES.items():
        common.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=typ, help=hlp)

    parser = argparse.ArgumentParser(prog="pam-mild", description="Parabolic Anderson model studies")
    sub = parser.add_subparsers(dest="study", required=True, metavar="STUDY")
    for name in STUDIES:
        sub.add_parser(name, parents=[common], help=f"run the {name} study")
    return parser


def overrides_from_args(args: argparse.Namespace) -> dict:
    out: dict = {}
    for flag, (path, _, _) in OVERRIDES.items():
        value = getattr(args, flag)
        if value is None:
            continue
        node = out
        for key in path[:-1]:
            node = node.setdefault(key, {})
        node[path[-1]] = value
    if args.eps:
        out["eps_list"] = args.eps
    if args.theta:
        out.setdefault("kry", {})["theta_list"] = args.theta
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        report = run_study(args.study, args.config, overrides_from_args(args),
                           out_dir=None if args.no_write else args.out)
    except ConfigurationError as exc:
        print(f"pam-mild: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PAMError, ArithmeticError, RuntimeError) as exc:
        print(f"pam-mild: {args.study} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    summary = {"study": report.study, "seed": report.seed, "passed": report.passed,
               "wallclock": round(report.wallclock, 3)}
    criteria = report.metrics.get("criteria")
    if criteria:
        summary["criteria"] = criteria
    print(json.dumps(summary, indent=2))
    return EXIT_FAILED if report.passed is False else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
