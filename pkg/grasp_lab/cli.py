"""Command-line entry point: ``grasp-lab {collect,train,eval,compare}``.

Exit codes: 0 on success, 2 for configuration problems (bad or missing config, missing
or incompatible demonstration file), 3 for any other failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from collections.abc import Sequence

from .config import ALGORITHMS, GRASP_MODES, ExperimentConfig, load_experiment_config
from .errors import ConfigError, ConfigHashMismatch, MissingDemoFile, SchemaMismatch
from .harness import cmd_collect, cmd_compare, cmd_eval, cmd_train
from .logging_config import configure_logging, log_with_fallback

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
CONFIG_ERRORS = (ConfigError, MissingDemoFile, ConfigHashMismatch, SchemaMismatch)


def _seed_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"--seeds expects comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grasp-lab", description="Demonstration-seeded grasp learning experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="Experiment YAML (bundled default when omitted)")
        p.add_argument("--object", dest="object_id", help="Object id from the catalogue")
        p.add_argument("--grasp-mode", choices=GRASP_MODES, help="Oracle grasp generator")
        p.add_argument("--algo", choices=ALGORITHMS, help="Learning algorithm")
        p.add_argument("--demo", help="Demonstration buffer path")

    collect = sub.add_parser("collect", help="Collect scripted demonstrations")
    common(collect)
    collect.add_argument("--seed", type=int, default=0)
    collect.add_argument("--out", help="Output buffer path")
    collect.add_argument("--force", action="store_true", help="Overwrite an existing buffer")

    train = sub.add_parser("train", help="Train one learner per seed")
    common(train)
    train.add_argument("--seeds", type=_seed_list, help="Comma-separated seeds, e.g. 0,1,2")
    train.add_argument("--seed", type=int, help="Single seed (shorthand for --seeds N)")
    train.add_argument("--out", help="Run directory")
    train.add_argument(
        "--force", action="store_true", help="Use demonstrations collected under a different environment config"
    )

    evaluate = sub.add_parser("eval", help="Evaluate a checkpoint or the scripted demonstrator")
    common(evaluate)
    evaluate.add_argument("--checkpoint", help="Checkpoint .npz written by train")
    evaluate.add_argument("--episodes", type=int, help="Evaluation episodes")
    evaluate.add_argument("--seed", type=int, help="Evaluation seed")
    evaluate.add_argument("--scripted", action="store_true", help="Replay the scripted demonstrator")
    evaluate.add_argument("--out", help="Write the result as JSON")

    compare = sub.add_parser("compare", help="Merge evaluation curves into one CSV")
    compare.add_argument("runs", nargs="+", help="Run directories or metrics.csv files")
    compare.add_argument("--out", help="Output CSV")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Load the experiment config and apply command-line overrides."""
    config = load_experiment_config(args.config)
    if args.object_id:
        config = dataclasses.replace(config, env=dataclasses.replace(config.env, object_id=args.object_id))
    if args.grasp_mode:
        config = dataclasses.replace(config, planner=dataclasses.replace(config.planner, mode=args.grasp_mode))
    if args.algo:
        config = dataclasses.replace(config, algorithm=args.algo)
    if args.demo:
        config = dataclasses.replace(config, demo_path=args.demo)
    return config


def run(args: argparse.Namespace) -> int:
    if args.command == "compare":
        merged = cmd_compare(args.runs, out=args.out)
        if args.out is None:
            sys.stdout.write(merged.to_csv(index=False, lineterminator="\n"))
        return EXIT_OK

    config = resolve_config(args)
    if args.command == "collect":
        buffer, path = cmd_collect(config, seed=args.seed, out=args.out, force=args.force)
        log_with_fallback(logger, logging.INFO, f"Wrote {buffer.transition_count} transitions to {path}")
    elif args.command == "train":
        seeds = args.seeds or ([args.seed] if args.seed is not None else None)
        cmd_train(config, seeds=seeds, out=args.out, force=args.force)
    elif args.command == "eval":
        cmd_eval(
            config,
            checkpoint=args.checkpoint,
            episodes=args.episodes,
            seed=args.seed,
            scripted=args.scripted,
            out=args.out,
        )
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except CONFIG_ERRORS as exc:
        log_with_fallback(logger, logging.ERROR, f"{type(exc).__name__}: {exc}")
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        log_with_fallback(logger, logging.ERROR, f"Command {args.command} failed: {type(exc).__name__}: {exc}")
        logger.debug("Traceback", exc_info=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
