"""
Command-line entry point: ``python -m src.cli <command> [flags]``.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from src.models.config import COMMANDS, PRESETS, RunConfig
from src.services.errors import KineticsError
from src.services.harness import run_experiment

logger = logging.getLogger(__name__)

HELP = {
    "sample": "perfect sampler of the weighted equation",
    "maxwell": "recursive velocity sampler for Maxwellian molecules",
    "wild": "Wild-sum mixture sampler",
    "series": "truncated tree series and per-tree mass table",
    "dsmc": "Nanbu particle-system oracle",
    "compare": "weighted samples against the oracle",
    "check": "acceptance suite",
}


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Monte Carlo toolkit for the homogeneous Boltzmann equation")
    commands = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = commands.add_parser(name, help=HELP[name])
        sub.add_argument("--config", type=Path, help="Run file (KEY=value lines)")
        sub.add_argument("--seed", type=int, help="Base seed")
        sub.add_argument("--t", help="Comma-separated time grid")
        sub.add_argument("--reps", type=int, help="Replicates per time")
        sub.add_argument("--out", help="Output directory")
        sub.add_argument("--workers", type=int, help="Worker processes")
        sub.add_argument("--preset", choices=sorted(PRESETS), help="Named size preset")
        sub.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
        sub.add_argument("--progress", action="store_true", help="Show progress bars")
    return parser.parse_args(argv)


def build_config(args: argparse.Namespace) -> RunConfig:
    """Merges the run file (if any) with the flags; flags win."""
    overrides: Dict[str, Any] = {
        "base_seed": args.seed,
        "t_grid": args.t,
        "n_rep": args.reps,
        "output_dir": args.out,
        "workers": args.workers,
        "preset": args.preset,
    }
    if args.preset is None:
        overrides["commands"] = args.command
    if args.config is not None:
        config = RunConfig.from_file(args.config, overrides)
    else:
        config = RunConfig.from_mapping({k: v for k, v in overrides.items() if v is not None})
    if args.command not in config.commands:
        config = config.model_copy(update={"commands": [args.command]})
    return config


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        config = build_config(args)
        experiment = run_experiment(config, progress=args.progress)
    except KineticsError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(f"{experiment.directory} (config {experiment.manifest.config_hash[:12]})")
    for check in experiment.checks:
        print(f"{check.name:<18} {'PASS' if check.passed else 'FAIL'}")
    return 0 if experiment.passed else 1


if __name__ == "__main__":
    sys.exit(main())
