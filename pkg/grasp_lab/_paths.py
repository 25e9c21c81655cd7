"""Package-relative path resolution for bundled reference data.

Hand descriptions, the object catalogue, default configs and golden values live
inside the package at ``grasp_lab/data/reference/``. This module provides the single
canonical helper so every consumer resolves the same directory regardless of working
directory or install location.

SPDX-License-Identifier: MIT
"""

from __future__ import annotations

from pathlib import Path

_PACKAGE_DIR = Path(__file__).resolve().parent
_DATA_REFERENCE_DIR = _PACKAGE_DIR / "data" / "reference"


def get_reference_dir() -> Path:
    """Return the package-internal reference data directory.

    Returns
    -------
    Path
        Absolute path to ``grasp_lab/data/reference/``.
    """
    return _DATA_REFERENCE_DIR


def default_hand_path() -> Path:
    """Return the bundled hand-description YAML."""
    return _DATA_REFERENCE_DIR / "hand" / "five_finger_hand_v1.yml"


def default_objects_path() -> Path:
    """Return the bundled primitive object catalogue YAML."""
    return _DATA_REFERENCE_DIR / "objects" / "objects.yml"


def default_env_config_path() -> Path:
    """Return the bundled default environment config YAML."""
    return _DATA_REFERENCE_DIR / "config" / "env_default.yml"


def default_experiment_config_path() -> Path:
    """Return the bundled default experiment config YAML."""
    return _DATA_REFERENCE_DIR / "config" / "experiment_default.yml"
