"""Command-line entry point.

    sgdlab run <config.toml>      run an experiment (seed sweep), write CSV/JSON
    sgdlab verify <suite>         run an acceptance suite, print pass/fail JSON
    sgdlab costs --N 4 --lat 1.5 --tr 0.2 [--size 64] [--eta 0.5]
                                  print the closed-form vs simulated cost table

Exit codes: 0 success, 1 invalid configuration or failed suite, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import collectives
from .harness import ConfigError, load_experiment, run_experiment
from .netsim import NetworkParams, as_fraction, makespan
from .trainers import TrainerConfigError
from .verify import SUITES, run_suite


def _cmd_run(args) -> int:
    config = load_experiment(args.config)
    summary = run_experiment(config)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _cmd_verify(args) -> int:
    result = run_suite(args.suite)
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0 if result["passed"] else 1


def _cmd_costs(args) -> int:
    params = NetworkParams(as_fraction(args.lat), as_fraction(args.tr), max(args.N, 2))
    size = as_fraction(args.size)
    eta = as_fraction(args.eta)
    rows = []
    for kind in collectives.KINDS:
        if kind == collectives.DECENTRALIZED_RING and args.N < 3:
            continue
        formula = collectives.closed_form_cost(kind, args.N, size, params, eta)
        scaled = size * eta
        simulated = makespan(
            collectives.simulate_round(
                kind, args.N, params,
                part_sizes=[scaled / args.N] * args.N, vector_size=scaled,
            )
        )
        rows.append(
            {
                "collective": kind,
                "closed_form": str(formula),
                "simulated": str(simulated),
                "exact_match": formula == simulated,
            }
        )
    width = max(len(r["collective"]) for r in rows)
    print(f"W={args.N} workers, size={size} units, latency={params.t_latency}, "
          f"transfer={params.t_transfer_per_unit}/unit, eta={eta}")
    for r in rows:
        mark = "=" if r["exact_match"] else "!"
        print(f"  {r['collective'].ljust(width)}  closed {r['closed_form']:>12}  "
              f"{mark}  simulated {r['simulated']:>12}")
    return 0 if all(r["exact_match"] for r in rows) else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgdlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config", help="TOML (or JSON) experiment file")
    p_run.set_defaults(func=_cmd_run)

    p_verify = sub.add_parser("verify", help="run an acceptance suite")
    p_verify.add_argument("suite", choices=sorted(SUITES))
    p_verify.set_defaults(func=_cmd_verify)

    p_costs = sub.add_parser("costs", help="closed-form vs simulated cost table")
    p_costs.add_argument("--N", type=int, default=4, help="worker count")
    p_costs.add_argument("--lat", default="1", help="per-message latency")
    p_costs.add_argument("--tr", default="1", help="transfer time per size unit")
    p_costs.add_argument("--size", default="1", help="vector size in units")
    p_costs.add_argument("--eta", default="1", help="compression ratio in (0, 1]")
    p_costs.set_defaults(func=_cmd_costs)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TrainerConfigError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - unexpected runtime faults
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
