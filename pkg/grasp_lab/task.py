"""RL-facing grasping task: plan, reset to pre-grasp, then act with normalized actions."""

from __future__ import annotations

import logging
from typing import Any

import numpy as np

from .episode import TerminationCause
from .errors import NoReachableCandidate, PreGraspInfeasible
from .grasp_prior import GraspPlan, GraspPlanner
from .hand_sim import Action, GraspEnv

logger = logging.getLogger(__name__)


class GraspTask:
    """``RolloutEnv`` adapter over a ``GraspEnv`` and a ``GraspPlanner``.

    Each ``reset(seed)`` places the object for ``seed``, plans a grasp and starts the
    hand at its pre-grasp pose. Placements with no reachable plan are replaced by
    placements drawn from a seed-derived stream, so a reset never fails silently and
    stays deterministic.

    Parameters
    ----------
    env : GraspEnv
        Simulator owned by this task.
    planner : GraspPlanner
        Grasp prior used at every reset.
    max_placement_attempts : int
        Placements tried before giving up with ``NoReachableCandidate``.
    """

    def __init__(self, env: GraspEnv, planner: GraspPlanner, *, max_placement_attempts: int = 20):
        self.env = env
        self.planner = planner
        self.max_placement_attempts = max_placement_attempts
        self.plan: GraspPlan | None = None
        self.placement_seed: int | None = None
        self._orientation = env.config.orientation_repr
        self._limits = env.config.action_limits
        self._return = 0.0
        self._components = np.zeros(4)

    @property
    def observation_dim(self) -> int:
        return self.env.observation_dim

    @property
    def action_dim(self) -> int:
        return self.env.action_dim

    def reset(self, seed: int) -> np.ndarray:
        """Start an episode for ``seed`` and return the flat observation.

        Raises
        ------
        NoReachableCandidate
            If ``max_placement_attempts`` placements in a row are unreachable.
        """
        rng = np.random.default_rng(np.random.SeedSequence([int(seed) % 2**64, 3]))
        placement = int(seed)
        for attempt in range(self.max_placement_attempts):
            try:
                plan = self.planner.plan_for(self.env, placement)
                observation = self.env.reset(plan, placement)
            except (NoReachableCandidate, PreGraspInfeasible) as exc:
                logger.debug("Placement %d unreachable (attempt %d): %s", placement, attempt, exc)
                placement = int(rng.integers(0, 2**63 - 1))
                continue
            self.plan = plan
            self.placement_seed = placement
            self._return = 0.0
            self._components = np.zeros(4)
            return observation.to_array(self._orientation)
        raise NoReachableCandidate(f"No reachable placement after {self.max_placement_attempts} attempts (seed {seed})")

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, bool, bool, dict[str, Any]]:
        """Step with a policy-space action in ``[-1, 1]^15``.

        ``terminated`` covers success and failures; a timeout is reported as
        ``truncated`` so learners bootstrap through it. ``info`` carries the running
        reward component sums and the step's own ``reward_breakdown``.
        """
        normalized = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        result = self.env.step(Action.from_normalized(normalized, self._limits))
        breakdown = result.reward_breakdown
        self._return += result.reward
        self._components += (breakdown.r_fingers, breakdown.r_dist, breakdown.r_height, breakdown.r_end)
        termination = result.termination
        truncated = termination is TerminationCause.TIMEOUT
        terminated = termination.is_terminal and not truncated
        info = {
            "termination": termination.label,
            "success": termination is TerminationCause.SUCCESS,
            "length": result.info.step_index,
            "h_mm": result.info.h_mm,
            "f_count": result.info.f_count,
            "episode_return": self._return,
            "r_fingers": float(self._components[0]),
            "r_dist": float(self._components[1]),
            "r_height": float(self._components[2]),
            "r_end": float(self._components[3]),
            "reward_breakdown": breakdown,
        }
        return result.observation.to_array(self._orientation), result.reward, terminated, truncated, info
