"""Command line entry point: ``tclinv {validate,run,cycles,bound} <scenario>``.

Exit codes: 0 success, 1 invalid configuration, 2 setup failure (no safe
cycle, empty invariant set, infeasible first step), 3 controller
infeasible during the run.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from .network import PowerFlowError
from .runner import (EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, EXIT_SETUP, SetupError, cycles_report,
                     network_bound, run_scenario)
from .scenario import ScenarioError, load_scenario


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tclinv", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)
    for verb, text in (("validate", "parse and check a scenario"),
                       ("run", "run the scenario and write its outputs"),
                       ("cycles", "print the selected safe cycles as JSON"),
                       ("bound", "print the network-safe aggregate power bound")):
        sp = sub.add_parser(verb, help=text)
        sp.add_argument("scenario", type=Path)
    run = sub.choices["run"]
    run.add_argument("-o", "--output", type=Path, default=None,
                     help="output directory (overrides run.output and the output root)")
    run.add_argument("--steps", type=int, default=None, help="override run.steps")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        sc = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"error: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.verb == "validate":
            print(f"ok: {len(sc.groups)} group(s), controller {sc.kind}, {sc.steps} steps")
            return EXIT_OK
        if args.verb == "bound":
            if sc.feeder_path() is None:
                print("error: scenario has no feeder", file=sys.stderr)
                return EXIT_CONFIG
            print(f"{network_bound(sc):.6f}")
            return EXIT_OK
        if args.verb == "cycles":
            print(cycles_report(sc))
            return EXIT_OK
        if args.steps is not None:
            if args.steps < 1:
                print("error: --steps must be at least 1", file=sys.stderr)
                return EXIT_CONFIG
            sc.steps = args.steps
        res = run_scenario(sc, out_dir=args.output)
    except (SetupError, PowerFlowError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SETUP
    print(f"{res.status}; RMSE {res.rmse:.4f} kW; lockout violations {res.lockout_pct:.2f}%; "
          f"bound violated {'yes' if res.bound_violated else 'no'}; outputs in {res.out_dir}")
    return EXIT_INFEASIBLE if res.exit_code == EXIT_INFEASIBLE else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
