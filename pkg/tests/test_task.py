from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from grasp_lab.config import EnvConfig
from grasp_lab.episode import TerminationCause
from grasp_lab.errors import NoReachableCandidate
from grasp_lab.hand_sim import ACTION_DIM, BASE_OBSERVATION_DIM, GraspEnv
from grasp_lab.task import GraspTask

INFO_KEYS = {
    "termination",
    "success",
    "length",
    "h_mm",
    "f_count",
    "episode_return",
    "r_fingers",
    "r_dist",
    "r_height",
    "r_end",
    "reward_breakdown",
}


def test_reset_returns_flat_observation(task) -> None:
    obs = task.reset(0)
    assert obs.shape == (BASE_OBSERVATION_DIM,)
    assert task.observation_dim == BASE_OBSERVATION_DIM
    assert task.action_dim == ACTION_DIM
    assert task.plan is not None
    assert task.placement_seed is not None


def test_reset_is_deterministic(env, planner) -> None:
    a = GraspTask(env, planner).reset(11)
    b = GraspTask(GraspEnv(EnvConfig()), planner).reset(11)
    np.testing.assert_array_equal(a, b)


def test_quaternion_observations(planner) -> None:
    task = GraspTask(GraspEnv(EnvConfig(orientation_repr="quat")), planner)
    assert task.reset(0).shape == (BASE_OBSERVATION_DIM + 1,)


def test_step_reports_the_info_contract(task) -> None:
    task.reset(0)
    obs, reward, terminated, truncated, info = task.step(np.zeros(ACTION_DIM))
    assert obs.shape == (BASE_OBSERVATION_DIM,)
    assert set(info) == INFO_KEYS
    assert isinstance(reward, float)
    assert not terminated and not truncated
    assert info["length"] == 1
    assert info["termination"] == TerminationCause.RUNNING.label
    assert info["reward_breakdown"].total == pytest.approx(reward)


def test_out_of_range_actions_are_clipped(env, planner) -> None:
    wild = GraspTask(env, planner)
    tame = GraspTask(GraspEnv(EnvConfig()), planner)
    wild.reset(2)
    tame.reset(2)
    action = np.linspace(-5.0, 5.0, ACTION_DIM)
    np.testing.assert_array_equal(wild.step(action)[0], tame.step(np.clip(action, -1.0, 1.0))[0])


def test_timeout_is_truncation(planner) -> None:
    task = GraspTask(GraspEnv(EnvConfig(t_max=3)), planner)
    task.reset(0)
    for _ in range(2):
        assert task.step(np.zeros(ACTION_DIM))[3] is False
    _, _, terminated, truncated, info = task.step(np.zeros(ACTION_DIM))
    assert truncated and not terminated
    assert info["termination"] == TerminationCause.TIMEOUT.label
    assert info["r_end"] == -1.0


def test_components_accumulate_to_the_return(task) -> None:
    task.reset(0)
    rng = np.random.default_rng(0)
    total = 0.0
    for _ in range(30):
        _, reward, terminated, truncated, info = task.step(rng.uniform(-1.0, 1.0, ACTION_DIM))
        total += reward
        if terminated or truncated:
            break
    components = info["r_fingers"] + info["r_dist"] + info["r_height"] + info["r_end"]
    assert info["episode_return"] == pytest.approx(total, abs=1e-9)
    assert components == pytest.approx(total, abs=1e-9)


def test_reset_clears_the_running_return(task) -> None:
    task.reset(0)
    task.step(np.ones(ACTION_DIM))
    task.reset(1)
    _, reward, _, _, info = task.step(np.zeros(ACTION_DIM))
    assert info["episode_return"] == pytest.approx(reward)


def test_gives_up_after_max_placement_attempts(planner) -> None:
    config = EnvConfig()
    tiny = dataclasses.replace(config.workspace, half_extents=(0.001, 0.001, 0.001))
    task = GraspTask(GraspEnv(dataclasses.replace(config, workspace=tiny)), planner, max_placement_attempts=3)
    with pytest.raises(NoReachableCandidate, match="3 attempts"):
        task.reset(0)
