"""Command line entry point: ``displab <command> --config FILE [options]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .experiments import COMMANDS, ConfigError, ExperimentConfig, run, write_result


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="displab", description=__doc__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="flat key = value config file")
    parser.add_argument("--oracle", action="store_true",
                        help="also evaluate the brute-force route and report agreement")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="output directory (default from config)")
    parser.add_argument("--threads", type=int, help="worker threads over moduli")
    parser.add_argument("--override-budget", action="store_true",
                        help="lift the desk-scale size limits")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {"seed": args.seed, "out": args.out, "threads": args.threads,
                 "oracle": True if args.oracle else None,
                 "budget_override": True if args.override_budget else None}
    try:
        cfg = ExperimentConfig.from_file(args.config, args.command, **overrides)
        if cfg.command != args.command:
            raise ConfigError(f"config is for {cfg.command!r}, not {args.command!r}")
    except (OSError, ConfigError) as exc:
        print(f"displab: {exc}", file=sys.stderr)
        return 2
    result = run(cfg)
    for path in write_result(result, cfg.out, cfg.plot):
        print(path)
    print(f"config_hash {result.config_hash}")
    for name, ok in result.checks.items():
        print(f"check {name}: {'PASS' if ok else 'FAIL'}")
    return 0 if all(result.checks.values()) else 1


if __name__ == "__main__":
    sys.exit(main())
