"""Command-line interface.

Subcommands: simulate, compare-modes, check-identities, report.
Exit codes: 0 success, 1 identity-check failure, 2 configuration error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import sys

from .errors import (BohmsimError, ConfigurationError, NumericalBlowupError,
                     OutOfBoxError)
from .identities import run_identity_suite, suite_failed
from .qcorr import CONVENTION_AS_PRINTED, CONVENTION_EXACT, QBAR_ANTICOMMUTATOR, QBAR_DIRECT

EXIT_OK = 0
EXIT_IDENTITY = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bohmsim",
        description="Pilot-wave lattice simulator with a field-space correction layer")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario and persist a bundle")
    sim.add_argument("--config", required=True, help="scenario JSON path")
    sim.add_argument("--out", help="output directory (overrides output.directory)")
    sim.add_argument("--seed", type=int, help="trajectory seed override")
    sim.add_argument("--quiet", action="store_true")

    cmp_p = sub.add_parser("compare-modes",
                           help="run standard and modified side by side")
    cmp_p.add_argument("--config", required=True)
    cmp_p.add_argument("--out", help="output directory (overrides output.directory)")
    cmp_p.add_argument("--seed", type=int)
    cmp_p.add_argument("--quiet", action="store_true")

    chk = sub.add_parser("check-identities", help="run the built-in identity suite")
    chk.add_argument("--convention", default=CONVENTION_EXACT,
                     choices=[CONVENTION_EXACT, CONVENTION_AS_PRINTED, "as-printed"])
    chk.add_argument("--qbar-mode", default=QBAR_ANTICOMMUTATOR,
                     choices=[QBAR_ANTICOMMUTATOR, QBAR_DIRECT])
    chk.add_argument("--quiet", action="store_true")

    rep = sub.add_parser("report", help="emit plot-ready CSV files and figures")
    rep.add_argument("--bundle", required=True, help="bundle directory from simulate")
    rep.add_argument("--out", help="report directory (default: <bundle>/report)")
    rep.add_argument("--no-figures", action="store_true",
                     help="skip PNG rendering, keep only the CSV files")
    rep.add_argument("--quiet", action="store_true")
    return parser


def _say(args, message):
    if not getattr(args, "quiet", False):
        print(message)


def cmd_simulate(args) -> int:
    from .runner import run_simulation, write_bundle
    from .scenario import load_scenario

    cfg = load_scenario(args.config, out_override=args.out, seed_override=args.seed)
    if cfg.out_dir is None:
        raise ConfigurationError("no output directory: set output.directory or pass --out")
    result = run_simulation(cfg)
    write_bundle(result, cfg.out_dir)
    _say(args, f"bundle written to {cfg.out_dir} "
               f"({len(result.times)} output times, final norm {result.norms[-1]:.9f})")
    return EXIT_OK


def cmd_compare_modes(args) -> int:
    from .runner import compare_modes, write_comparison
    from .scenario import load_scenario

    cfg = load_scenario(args.config, out_override=args.out, seed_override=args.seed)
    if cfg.out_dir is None:
        raise ConfigurationError("no output directory: set output.directory or pass --out")
    comp = compare_modes(cfg)
    write_comparison(comp, cfg, cfg.out_dir)
    _say(args, f"comparison written to {cfg.out_dir} "
               f"(max L2 distance {comp.l2_distance.max():.3e}, "
               f"mean trajectory displacement {comp.displacement_mean:.3e})")
    return EXIT_OK


def cmd_check_identities(args) -> int:
    convention = args.convention.replace("-", "_")
    results = run_identity_suite(convention=convention, qbar_mode=args.qbar_mode)
    width = max(len(name) for name, _, _ in results)
    for name, status, detail in results:
        _say(args, f"{name:<{width}}  {status:<4}  {detail}")
    if suite_failed(results):
        _say(args, "identity suite FAILED")
        return EXIT_IDENTITY
    _say(args, "identity suite passed")
    return EXIT_OK


def cmd_report(args) -> int:
    import os

    from .report import write_report

    out_dir = args.out or os.path.join(args.bundle, "report")
    write_report(args.bundle, out_dir, render=not args.no_figures)
    _say(args, f"report written to {out_dir}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "compare-modes": cmd_compare_modes,
        "check-identities": cmd_check_identities,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except ConfigurationError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalBlowupError, OutOfBoxError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except BohmsimError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
