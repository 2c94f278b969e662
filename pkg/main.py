#!/usr/bin/env python3
"""
LatCo Planning CLI - Main Entry Point

This script runs planning experiments from configuration files:

    python main.py plan --config configs/lqr.yaml
    python main.py train --config configs/lottery.yaml --seed 1 --out results/lottery
    python main.py preset lottery --out configs/lottery --run --jobs 4
    python main.py bench-solver --out results/bench
"""

import argparse
import logging
import sys
from typing import List, Optional

from src import __version__
from src.core.harness import PRESETS, run_experiment, write_preset
from src.core.settings import ExperimentConfig
from src.utils.batch_processor import BatchProcessor
from src.utils.config_loader import load_config
from src.utils.errors import LatcoError


def show_version():
    """Display the version information."""
    print(f"LatCo Planning CLI v{__version__}")
    sys.exit(0)


def _resolve_config(args, mode: str) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg.mode = mode
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.output_dir = args.out
    cfg.validate()
    return cfg


def _run_mode(args, mode: str) -> int:
    try:
        cfg = _resolve_config(args, mode)
    except (OSError, LatcoError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    status = run_experiment(cfg, verbose=args.verbose)
    if status == 0:
        print(f"Results written to: {cfg.output_dir}")
    else:
        print(f"Run failed; see {cfg.output_dir}/manifest.json", file=sys.stderr)
    return status


def plan_main(args) -> int:
    """Main function for a single planning call."""
    return _run_mode(args, "plan")


def train_main(args) -> int:
    """Main function for the online training loop."""
    return _run_mode(args, "train")


def bench_main(args) -> int:
    """Main function for the solver benchmark."""
    return _run_mode(args, "bench_solver")


def preset_main(args) -> int:
    """Main function for preset generation (and optionally execution)."""
    out_dir = args.out or f"presets/{args.name}"
    try:
        paths = write_preset(args.name, out_dir, seed=args.seed)
    except (OSError, LatcoError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    print(f"Wrote {len(paths)} configurations to: {out_dir}")
    for path in paths:
        print(f"  - {path}")
    if not args.run:
        return 0

    processor = BatchProcessor(paths, max_processes=args.jobs, verbose=args.verbose)
    results = processor.process_all()
    success_count = sum(1 for result in results.values() if result)
    print(f"\nBatch processing complete: {success_count}/{len(results)} runs succeeded")
    for path, success in results.items():
        status = "Success" if success else "Failed"
        print(f"  - {path}: {status}")
    return 0 if success_count == len(results) else 1


def _add_common(parser: argparse.ArgumentParser, with_config: bool = True) -> None:
    if with_config:
        parser.add_argument("--config", help="Path to a configuration file (YAML or JSON)")
    parser.add_argument("--seed", type=int, help="Override the master seed")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--verbose", action="store_true", help="Enable debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Plan with latent collocation and shooting baselines on learned or analytic models")
    parser.add_argument("--version", action="store_true", help="Display version information")

    subparsers = parser.add_subparsers(title="commands", dest="command")

    plan_parser = subparsers.add_parser("plan", help="Run a single planning call")
    _add_common(plan_parser)
    plan_parser.set_defaults(func=plan_main)

    train_parser = subparsers.add_parser("train", help="Run the online model-based training loop")
    _add_common(train_parser)
    train_parser.set_defaults(func=train_main)

    preset_parser = subparsers.add_parser("preset", help="Write (and optionally run) a study's configurations")
    preset_parser.add_argument("name", choices=sorted(PRESETS), help="Preset name")
    preset_parser.add_argument("--run", action="store_true", help="Run the written configurations")
    preset_parser.add_argument("--jobs", type=int, default=1, help="Concurrent runs")
    _add_common(preset_parser, with_config=False)
    preset_parser.set_defaults(func=preset_main)

    bench_parser = subparsers.add_parser("bench-solver", help="Benchmark the block-tridiagonal solver")
    _add_common(bench_parser)
    bench_parser.set_defaults(func=bench_main)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main function to dispatch to appropriate subcommands."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.version:
        show_version()

    if not hasattr(args, "func"):
        parser.print_help()
        return 1

    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
