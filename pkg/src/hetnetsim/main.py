"""Command-line entry point for hetnetsim."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from .config import (
    BUILTIN_SCENARIOS,
    ParseError,
    ScenarioConfig,
    UnknownScenario,
    ValidationError,
    builtin,
    resolve_scenario,
    validate,
)
from .report import METRIC_DEFS, BucketMismatch, bundle_stem, compare, load_bundle, plot_overlay, write_bundle
from .scheduler import CausalityError
from .simulation import run_many
from .wimax_mac import AdmissionRefused

logger = logging.getLogger(__name__)

SEED_ENV = "HETNETSIM_SEED"

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2


def parse_args(argv: List[str]) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Simulate VoIP QoS over WiFi and WiMAX subnets.")
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="Increase log verbosity (can be specified multiple times).",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run_cmd = commands.add_parser("run", help="Run a scenario and write CSV, JSON and SVG output.")
    run_cmd.add_argument("--scenario", required=True, help="Builtin scenario name or path to a JSON scenario file.")
    run_cmd.add_argument("--seed", type=int, default=None, help=f"Master seed (falls back to ${SEED_ENV}, then the file).")
    run_cmd.add_argument("--duration", type=float, default=None, help="Simulated seconds, overriding the scenario.")
    run_cmd.add_argument("--repetitions", type=int, default=None, help="Number of consecutive seeds to run.")
    run_cmd.add_argument("--jobs", type=int, default=1, help="Worker processes for multi-seed runs.")
    run_cmd.add_argument("--out", required=True, help="Output directory.")

    compare_cmd = commands.add_parser("compare", help="Overlay two or more result bundles.")
    compare_cmd.add_argument("bundles", nargs="+", help="Bundle JSON files written by 'run'.")
    compare_cmd.add_argument("--out", required=True, help="Output directory.")

    commands.add_parser("list-scenarios", help="List builtin scenarios.")
    return parser.parse_args(argv)


def setup_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )


def resolve_seed(flag: Optional[int], config: ScenarioConfig) -> int:
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ValidationError("seed", f"{SEED_ENV}={env!r} is not an integer") from None
    return config.seed


def _cmd_run(args: argparse.Namespace) -> int:
    config = resolve_scenario(args.scenario)
    seed = resolve_seed(args.seed, config)
    overrides = {"seed": seed}
    if args.duration is not None:
        overrides["duration_s"] = args.duration
    if args.repetitions is not None:
        overrides["repetitions"] = args.repetitions
    config = dataclasses.replace(config, **overrides)
    validate(config)

    seeds = list(range(seed, seed + config.repetitions))
    out_dir = Path(args.out)
    for bundle in run_many(config, seeds, jobs=args.jobs):
        csv_path, json_path = write_bundle(bundle, out_dir)
        for key, metric in METRIC_DEFS.items():
            plot_overlay({bundle.scenario: bundle.series}, metric, out_dir / f"{bundle_stem(bundle)}_{key}.svg")
        qos = bundle.summary["qos"]
        print(
            f"{bundle.scenario} seed {bundle.seed}: jitter {qos['mean_jitter_ms']} ms, "
            f"delay {qos['mean_delay_ms']} ms, MOS {qos['mean_mos']} -> {csv_path}, {json_path}"
        )
    return EXIT_OK


def _cmd_compare(args: argparse.Namespace) -> int:
    bundles = [load_bundle(Path(path)) for path in args.bundles]
    report = compare(bundles, Path(args.out))
    for key, shares in report["best_share"].items():
        ranked = ", ".join(f"{label} {share:.0%}" for label, share in shares.items())
        print(f"best {key}: {ranked}")
    return EXIT_OK


def _cmd_list() -> int:
    for name in BUILTIN_SCENARIOS:
        config = builtin(name)
        subnets = ", ".join(f"{s.name} ({s.mac_kind}, {s.station_count} stations)" for s in config.subnets)
        print(f"{name}: {subnets}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(sys.argv[1:] if argv is None else argv)
    setup_logging(args.verbose)

    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "compare":
            return _cmd_compare(args)
        return _cmd_list()
    except (AdmissionRefused, CausalityError, OSError) as exc:
        logger.error("Run failed: %s", exc)
        return EXIT_RUNTIME
    except (ParseError, ValidationError, UnknownScenario, BucketMismatch) as exc:
        logger.error("%s", exc)
        return EXIT_INVALID
    except ValueError as exc:
        logger.error("Invalid input: %s", exc)
        return EXIT_INVALID


if __name__ == "__main__":
    raise SystemExit(main())
