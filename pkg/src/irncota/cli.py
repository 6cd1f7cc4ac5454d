"""Command line entry point: ``irncota run <config> [--flags]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .harness import emit_results, load_config, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irncota", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment and write runs.csv / summary.json")
    run.add_argument("config", nargs="?", help="flat YAML config (omit for defaults)")
    run.add_argument("--seed", type=int)
    run.add_argument("--out", default="results", help="output directory (default: results)")
    run.add_argument("--estimator", choices=["ncota", "ir-ncota", "oracle"])
    run.add_argument("--interference", choices=["none", "gaussian-jammer", "single-sample"])
    run.add_argument("--iterations", type=int)
    run.add_argument("--realizations", type=int)
    run.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {
        "seed": args.seed,
        "estimator": args.estimator,
        "interference": args.interference,
        "iterations": args.iterations,
        "realizations": args.realizations,
    }
    try:
        cfg = load_config(args.config, overrides)
        result = run_experiment(cfg)
        runs, summary = emit_results(result, args.out)
    except Exception as exc:  # noqa: BLE001 - reported as a machine-readable line
        print(json.dumps({"status": "error", "type": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1
    if not args.quiet:
        final = result.summary["final"]
        print(f"wrote {runs} and {summary}")
        print("final: " + ", ".join(f"{k}={v:.4g}" for k, v in final.items()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
