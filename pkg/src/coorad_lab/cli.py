"""Command-line entry point.

Subcommands: coverage, simulate, estimate, montecarlo, counterfactual,
fractionalization, print-defaults.  Validation problems exit with code 2,
computation failures with code 3; both print a machine-readable error JSON
on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .errors import ComputationError, ParameterError
from .scenario import default_scenario, load_scenario, scenario_to_text

EXIT_VALIDATION = 2
EXIT_COMPUTATION = 3


def _add_common(p, need_out=True):
    p.add_argument("--scenario", help="scenario file (INI); defaults used when omitted")
    p.add_argument("--seed", type=int, help="override the scenario base seed")
    if need_out:
        p.add_argument("--out", help="output directory (scenario out_dir when omitted)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coorad",
        description="Synthetic lab: radio coverage, epidemic panels, and their estimators",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("coverage", help="terrain, roster, and coverage shares"))
    _add_common(sub.add_parser("simulate", help="epidemic panel and micro survey"))

    p = sub.add_parser("estimate", help="event study and DiD on a panel CSV")
    _add_common(p)
    p.add_argument("--panel", required=True, help="panel CSV produced by simulate")

    p = sub.add_parser("montecarlo", help="repeated simulation and estimation summary")
    _add_common(p)
    p.add_argument("--reps", type=int, help="override scenario Monte Carlo reps")
    p.add_argument("--threads", type=int, default=1, help="process fan-out for reps")

    p = sub.add_parser("counterfactual", help="prevented-cases arithmetic from results")
    _add_common(p)
    p.add_argument("--results", required=True, help="results.json from estimate")
    p.add_argument("--panel", required=True, help="panel CSV the results were fit on")

    _add_common(sub.add_parser("fractionalization", help="diversity indices per level"))

    sub.add_parser("print-defaults", help="write the default scenario to stdout")
    return parser


def _load(args):
    scenario = load_scenario(args.scenario) if args.scenario else default_scenario()
    if args.seed is not None:
        scenario = replace(scenario, base_seed=args.seed)
    return scenario


def _out_dir(args, scenario):
    return args.out if args.out else scenario.out_dir


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    # Imported lazily so --help stays fast.
    from . import pipeline

    try:
        if args.command == "print-defaults":
            sys.stdout.write(scenario_to_text(default_scenario()))
            return 0
        scenario = _load(args)
        if args.command == "coverage":
            out = pipeline.cmd_coverage(scenario, _out_dir(args, scenario))
        elif args.command == "simulate":
            out = pipeline.cmd_simulate(scenario, _out_dir(args, scenario))
        elif args.command == "estimate":
            out = pipeline.cmd_estimate(scenario, args.panel, _out_dir(args, scenario))
        elif args.command == "montecarlo":
            if args.threads is not None and args.threads < 1:
                raise ParameterError(f"--threads must be >= 1, got {args.threads}")
            out = pipeline.cmd_montecarlo(scenario, _out_dir(args, scenario), reps=args.reps, threads=args.threads)
        elif args.command == "counterfactual":
            out = pipeline.cmd_counterfactual(scenario, args.results, args.panel, _out_dir(args, scenario))
        elif args.command == "fractionalization":
            out = pipeline.cmd_fractionalization(scenario, _out_dir(args, scenario))
        else:  # pragma: no cover - argparse enforces the choices
            raise ParameterError(f"unknown command {args.command!r}")
    except (ParameterError, FileNotFoundError) as exc:
        _emit_error(exc)
        return EXIT_VALIDATION
    except ComputationError as exc:
        _emit_error(exc)
        return EXIT_COMPUTATION
    for path in out.get("outputs", []):
        print(path)
    print(out["manifest"])
    return 0


def _emit_error(exc) -> None:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")


if __name__ == "__main__":
    sys.exit(main())
