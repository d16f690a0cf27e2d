"""Command line entry point: ``teamcfr solve|eval|verify|best-response``."""

from __future__ import annotations

import argparse
import json
import sys

from teamcfr.errors import ConfigError, SizeCapExceeded, TrainingDiverged
from teamcfr.harness import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, best_response_report, evaluate_checkpoint, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="teamcfr", description="Team-vs-adversary CFR with product-form "
                                     "regret decomposition.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="run the solver and evaluation described by a config file")
    p.add_argument("config")
    p = sub.add_parser("eval", help="match-play a checkpoint against a uniform adversary")
    p.add_argument("config")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--episodes", type=int, default=None)
    p = sub.add_parser("verify", help="run the built-in consistency, gradient and sampling checks")
    p.add_argument("--quick", action="store_true", help="smaller sample sizes")
    p = sub.add_parser("best-response", help="exact best responses against a checkpoint (small games)")
    p.add_argument("config")
    p.add_argument("--ckpt", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "solve":
            return run(args.config)
        if args.command == "eval":
            print(json.dumps(evaluate_checkpoint(args.config, args.ckpt, args.episodes), indent=2, default=str))
            return EXIT_OK
        if args.command == "best-response":
            print(json.dumps(best_response_report(args.config, args.ckpt), indent=2, default=str))
            return EXIT_OK
        from teamcfr.verify import run_all
        checks = run_all(args.quick)
        for check in checks:
            print(check.line(), flush=True)
        failed = [c.name for c in checks if not c.passed]
        print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
        return EXIT_FAIL if failed else EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SizeCapExceeded as exc:
        print(f"game too large: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
