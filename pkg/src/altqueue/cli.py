"""Command-line front end over scenario files.

Exit status is 0 on success, 2 for invalid input or unsupported sampling
requests and 3 when a solver cannot produce a trustworthy answer.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .errors import CapabilityError, DomainError, ModelValidationError, NumericalFailure, UndefinedCorrelationError
from .scenario import (
    CORRELATION_HEADER,
    CSV_HEADER,
    correlation_rows,
    parse_scenario,
    run_scenario,
    to_csv,
)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="altqueue", description="Waiting times in the alternating-service queue.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "solve-markov": "analytic solution of a Markov-modulated scenario",
        "solve-joint": "analytic solution of a joint-transform scenario",
        "simulate": "Monte Carlo estimates for a scenario",
        "sweep": "run the scenario's sweep in its configured run mode",
        "correlations": "closed-form lag-n autocorrelations and cross-correlation",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--scenario", required=True, help="scenario file")
        p.add_argument("--out", help="CSV destination (default: standard output)")
        p.add_argument("--seed", type=int, help="override the scenario's simulation seed")
        if name == "correlations":
            p.add_argument("--lag", type=int, default=1, help="autocorrelation lag (default 1)")
    return parser


def _execute(args) -> str:
    with open(args.scenario, encoding="utf-8") as fh:
        scenario = parse_scenario(fh.read())
    if args.seed is not None:
        scenario = replace(scenario, sim=replace(scenario.sim, seed=args.seed))
    cmd = args.command
    if cmd == "correlations":
        if args.lag < 1:
            raise ModelValidationError("--lag must be a positive integer")
        return to_csv(correlation_rows(scenario, args.lag), CORRELATION_HEADER)
    if cmd in ("solve-markov", "solve-joint"):
        expected = "markov" if cmd == "solve-markov" else "joint"
        if scenario.kind != expected:
            raise ModelValidationError(f"{cmd} needs a {expected} scenario, got {scenario.kind}")
        mode = "analytic"
    elif cmd == "simulate":
        mode = "simulate"
    else:
        mode = scenario.run
    return to_csv(run_scenario(scenario, mode), CSV_HEADER)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        text = _execute(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except CapabilityError as exc:
        print(f"capability error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except UndefinedCorrelationError as exc:
        print(f"undefined correlation: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ModelValidationError, DomainError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
