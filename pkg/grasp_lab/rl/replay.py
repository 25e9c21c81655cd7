"""Ring replay buffer with demonstration pre-fill."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from ..demo_gen import DemoBufferFile
from ..errors import BufferTooSmall, ConfigHashMismatch, ShapeMismatch
from ..hand_sim import ACTION_DIM

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Transition:
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool
    is_demo: bool = False


@dataclass(frozen=True, eq=False)
class TransitionBatch:
    """Float64 tensors of a sampled minibatch plus the buffer slots drawn."""

    obs: torch.Tensor
    actions: torch.Tensor
    rewards: torch.Tensor
    next_obs: torch.Tensor
    dones: torch.Tensor
    is_demo: torch.Tensor
    indices: np.ndarray

    def __len__(self) -> int:
        return int(self.indices.shape[0])


class ReplayBuffer:
    """Fixed-capacity FIFO store sampled uniformly with replacement.

    Parameters
    ----------
    capacity : int
        Maximum number of transitions.
    obs_dim, action_dim : int
        Vector lengths.
    demo_retention : int
        Leading demonstration slots that are never overwritten. With the default 0,
        demonstrations are evicted like any other transition.

    Attributes
    ----------
    samples_drawn : int
        Transitions handed out by ``sample`` so far.
    """

    def __init__(self, capacity: int, obs_dim: int, action_dim: int, *, demo_retention: int = 0):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        if not 0 <= demo_retention < capacity:
            raise ValueError("demo_retention must lie in [0, capacity)")
        self.capacity = capacity
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.demo_retention = demo_retention
        self.obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.dones = np.zeros(capacity)
        self.is_demo = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.samples_drawn = 0
        self._cursor = 0
        self._leading_demos = 0
        self._online_seen = False

    def __len__(self) -> int:
        return self.size

    @property
    def demo_count(self) -> int:
        return int(self.is_demo[: self.size].sum())

    @property
    def protected_slots(self) -> int:
        return min(self.demo_retention, self._leading_demos)

    def add(self, transition: Transition) -> None:
        self.add_arrays(
            transition.obs,
            transition.action,
            transition.reward,
            transition.next_obs,
            transition.done,
            is_demo=transition.is_demo,
        )

    def add_arrays(self, obs, action, reward: float, next_obs, done: bool, *, is_demo: bool = False) -> None:
        obs = np.asarray(obs, dtype=float)
        action = np.asarray(action, dtype=float)
        if obs.shape != (self.obs_dim,) or action.shape != (self.action_dim,):
            raise ShapeMismatch(f"Transition shapes {obs.shape}/{action.shape} do not match the buffer")
        if not np.isfinite(reward):
            raise ValueError("Transition reward must be finite")
        if is_demo and not self._online_seen:
            self._leading_demos += 1
        elif not is_demo:
            self._online_seen = True
        slot = self._cursor
        self.obs[slot] = obs
        self.actions[slot] = action
        self.rewards[slot] = reward
        self.next_obs[slot] = next_obs
        self.dones[slot] = float(done)
        self.is_demo[slot] = is_demo
        self.size = min(self.size + 1, self.capacity)
        self._cursor += 1
        if self._cursor == self.capacity:
            self._cursor = self.protected_slots

    def sample(self, batch_size: int, rng: np.random.Generator) -> TransitionBatch:
        """Uniform minibatch (with replacement) over the stored transitions.

        Raises
        ------
        BufferTooSmall
            If fewer than ``batch_size`` transitions are stored.
        """
        if self.size < batch_size:
            raise BufferTooSmall(f"Buffer holds {self.size} transitions, batch needs {batch_size}")
        indices = rng.integers(0, self.size, size=batch_size)
        self.samples_drawn += batch_size
        return self.batch(indices)

    def batch(self, indices: np.ndarray) -> TransitionBatch:
        return TransitionBatch(
            obs=torch.from_numpy(self.obs[indices]),
            actions=torch.from_numpy(self.actions[indices]),
            rewards=torch.from_numpy(self.rewards[indices]),
            next_obs=torch.from_numpy(self.next_obs[indices]),
            dones=torch.from_numpy(self.dones[indices]),
            is_demo=torch.from_numpy(self.is_demo[indices]),
            indices=np.asarray(indices),
        )


def gpayn_init(
    buffer: ReplayBuffer,
    demo_file: DemoBufferFile,
    *,
    expected_hash: str | None = None,
) -> ReplayBuffer:
    """Pre-fill ``buffer`` with every demonstration transition, flagged as demo.

    Raises
    ------
    ConfigHashMismatch
        If ``expected_hash`` is given and the demo file was collected under another config.
    ShapeMismatch
        If the demo observation length differs from the buffer's.
    """
    if expected_hash is not None and demo_file.env_config_hash != expected_hash:
        raise ConfigHashMismatch(
            f"Demo buffer hash {demo_file.env_config_hash[:12]} does not match environment {expected_hash[:12]}"
        )
    if demo_file.obs_dim != buffer.obs_dim:
        raise ShapeMismatch(f"Demo obs_dim {demo_file.obs_dim} != buffer obs_dim {buffer.obs_dim}")
    records = demo_file.records
    for row in records:
        buffer.add_arrays(
            row["obs"],
            row["action"],
            float(row["reward"]),
            row["next_obs"],
            bool(row["done"]),
            is_demo=True,
        )
    logger.debug("Pre-filled replay buffer with %d demonstrations", records.shape[0])
    return buffer


def buffer_from_demo_file(
    demo_file: DemoBufferFile,
    *,
    capacity: int | None = None,
    expected_hash: str | None = None,
) -> ReplayBuffer:
    """A buffer holding only the demonstrations (the BC sample source)."""
    size = max(1, demo_file.transition_count) if capacity is None else capacity
    buffer = ReplayBuffer(size, demo_file.obs_dim, ACTION_DIM)
    return gpayn_init(buffer, demo_file, expected_hash=expected_hash)
