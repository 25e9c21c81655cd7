"""Package exports for grasp-lab.

Quasi-static grasping simulator, oracle grasp prior, scripted demonstrations and
demonstration-seeded soft actor-critic learners.
"""

from __future__ import annotations

from importlib import import_module
from typing import Any

from .logging_config import configure_logging

try:
    from importlib.metadata import PackageNotFoundError, version

    __version__ = version("grasp-lab")
except PackageNotFoundError:
    # Source checkout without an installed distribution
    __version__ = "0.0.0+unknown"

# Configure package logger once at import time.
configure_logging()

# Heavy submodules (torch) load on first attribute access.
_LAZY_EXPORTS: dict[str, tuple[str, str]] = {
    "GraspEnv": ("grasp_lab.hand_sim", "GraspEnv"),
    "GraspPlanner": ("grasp_lab.grasp_prior", "GraspPlanner"),
    "GraspTask": ("grasp_lab.task", "GraspTask"),
    "ExperimentConfig": ("grasp_lab.config", "ExperimentConfig"),
    "load_experiment_config": ("grasp_lab.config", "load_experiment_config"),
    "collect_demos": ("grasp_lab.demo_gen", "collect_demos"),
    "train": ("grasp_lab.rl.trainer", "train"),
}


def __getattr__(name: str) -> Any:
    if name in _LAZY_EXPORTS:
        module_name, symbol_name = _LAZY_EXPORTS[name]
        value = getattr(import_module(module_name), symbol_name)
        globals()[name] = value
        return value
    raise AttributeError(f"module 'grasp_lab' has no attribute '{name}'")


def __dir__() -> list[str]:
    return sorted(list(globals().keys()) + list(_LAZY_EXPORTS.keys()))


__all__ = [*list(_LAZY_EXPORTS.keys()), "__version__"]
