#!/usr/bin/env python
"""
Run the full object x grasp-mode grid: collect demonstrations, then train.

Each cell gets its own demonstration buffer under ``<out_dir>/demos/`` and its runs
under ``<out_dir>/<object>_<mode>/<algorithm>/seed_<n>/``. Existing buffers are reused
unless ``--force`` is given.

Usage:
    python scripts/run_experiment_grid.py --config my_experiment.yml
    python scripts/run_experiment_grid.py --objects sugar_box,power_drill --algos gpayn,sac

SPDX-License-Identifier: MIT
"""

import argparse
import dataclasses
import logging
import sys

from grasp_lab.config import ALGORITHMS, GRASP_MODES, load_experiment_config
from grasp_lab.errors import GraspLabError
from grasp_lab.harness import cmd_collect, cmd_train, default_demo_path, experiment_grid
from grasp_lab.logging_config import configure_logging, log_with_fallback

logger = logging.getLogger(__name__)


def _csv(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def main() -> int:
    parser = argparse.ArgumentParser(description="Collect and train over every object and grasp mode")
    parser.add_argument("--config", help="Base experiment YAML")
    parser.add_argument("--objects", type=_csv, help="Comma-separated object ids (default: whole catalogue)")
    parser.add_argument("--modes", type=_csv, default=list(GRASP_MODES))
    parser.add_argument("--algos", type=_csv, default=list(ALGORITHMS))
    parser.add_argument("--force", action="store_true", help="Re-collect existing demonstration buffers")
    args = parser.parse_args()

    configure_logging()
    base = load_experiment_config(args.config)
    cells = experiment_grid(base, objects=args.objects, modes=tuple(args.modes))
    log_with_fallback(logger, logging.INFO, f"Running {len(cells)} cells x {len(args.algos)} algorithms")

    failed = 0
    for cell in cells:
        try:
            demo_path = default_demo_path(cell)
            if args.force or not demo_path.exists():
                cmd_collect(cell, seed=base.seeds[0], force=True)
            for algorithm in args.algos:
                cmd_train(dataclasses.replace(cell, algorithm=algorithm), demo_path=str(demo_path))
        except GraspLabError as exc:
            failed += 1
            log_with_fallback(logger, logging.ERROR, f"Cell {cell.object_id}/{cell.grasp_mode} failed: {exc}")

    log_with_fallback(logger, logging.INFO, f"Grid finished: {len(cells) - failed}/{len(cells)} cells completed")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
