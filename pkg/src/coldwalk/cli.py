"""Command line driver: coldwalk {prepare,train,evaluate} --config FILE."""

from __future__ import annotations

import argparse
import logging
import sys

from .data import DatasetError
from .learner import DivergenceError
from .pipeline import ConfigError, PipelineError, cmd_evaluate, cmd_prepare, cmd_train, load_config

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

STAGES = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coldwalk",
        description="Cold-start item recommendation pipeline over a tripartite interaction graph.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("prepare", "filter raw files and write the cold-item split"),
        ("train", "learn feature weights for the hybrid recommenders"),
        ("evaluate", "score every requested algorithm on the test-cold items"),
    ):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", required=True, help="JSON pipeline config file")
        sub.add_argument("--output", default=None, help="override the configured output dir")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config, output_override=args.output)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        STAGES[args.command](config)
    except (PipelineError, DatasetError, DivergenceError, OSError) as exc:
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
