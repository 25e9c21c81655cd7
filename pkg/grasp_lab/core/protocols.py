"""Structural contracts between the simulator, the trainer and pluggable inputs.

The trainer only needs a ``RolloutEnv``; the grasping task adapter, the bandit used in
sanity tests and any future vectorized wrapper all satisfy it structurally.
"""

from __future__ import annotations

from typing import Any, Protocol, runtime_checkable

import numpy as np


@runtime_checkable
class RolloutEnv(Protocol):
    """Gymnasium-style episodic environment with normalized actions in ``[-1, 1]``."""

    @property
    def observation_dim(self) -> int:
        """Length of the flat observation vector."""

    @property
    def action_dim(self) -> int:
        """Length of the action vector."""

    def reset(self, seed: int) -> np.ndarray:
        """Start an episode and return the first observation."""

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, bool, bool, dict[str, Any]]:
        """Apply an action; return ``(obs, reward, terminated, truncated, info)``."""


@runtime_checkable
class VisualFeatureSource(Protocol):
    """Per-frame feature vectors appended to observations."""

    @property
    def dim(self) -> int:
        """Feature length ``V``."""

    def features(self, step_index: int) -> np.ndarray:
        """Return the ``V``-vector for a step of the current episode."""


@runtime_checkable
class PlanSource(Protocol):
    """Anything producing a grasp plan for an environment and a placement seed."""

    def plan_for(self, env: Any, seed: int) -> Any:
        """Return a grasp plan for the object placement ``env`` derives from ``seed``."""
