"""Shared pytest fixtures for test modules."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import pytest

from grasp_lab.config import DemoConfig, EnvConfig, ExperimentConfig, SacConfig, environment_hash
from grasp_lab.demo_gen import collect_demos
from grasp_lab.errors import NoReachableCandidate, PreGraspInfeasible
from grasp_lab.grasp_prior import GraspPlanner
from grasp_lab.hand_model import load_hand_model
from grasp_lab.hand_sim import GraspEnv
from grasp_lab.harness import THREADS_ENV_VAR
from grasp_lab.objects import get_object_model
from grasp_lab.rl.trainer import METRIC_COLUMNS, METRICS_NAME, write_metrics_csv
from grasp_lab.task import GraspTask


class BanditEnv:
    """One-state continuous bandit: constant observation, reward ``-scale * a^2``.

    Episodes last ``horizon`` steps; ``terminal=False`` ends them by truncation so
    learners bootstrap through the boundary.
    """

    observation_dim = 1
    action_dim = 1

    def __init__(self, *, reward: str = "quadratic", horizon: int = 1, terminal: bool = True):
        self.reward = reward
        self.horizon = horizon
        self.terminal = terminal
        self.resets = 0
        self._t = 0

    def reset(self, seed: int) -> np.ndarray:
        self.resets += 1
        self._t = 0
        return np.ones(1)

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, bool, bool, dict[str, Any]]:
        a = float(np.clip(np.asarray(action, dtype=float)[0], -1.0, 1.0))
        reward = -a * a if self.reward == "quadratic" else 1.0
        self._t += 1
        ended = self._t >= self.horizon
        info = {"success": abs(a) < 0.05}
        return np.ones(1), reward, ended and self.terminal, ended and not self.terminal, info


@pytest.fixture
def make_bandit():
    """Factory for fresh bandit environments."""
    return BanditEnv


@pytest.fixture
def tiny_sac_config() -> SacConfig:
    """Small learner for counting and determinism tests."""
    return SacConfig(
        batch_size=8,
        hidden_sizes=(16, 16),
        total_timesteps=200,
        buffer_capacity=20_000,
        eval_interval=0,
        eval_episodes=3,
        demo_batch_size=4,
    )


@pytest.fixture(scope="session")
def hand_model():
    return load_hand_model()


@pytest.fixture(scope="session")
def sugar_box():
    return get_object_model("sugar_box")


@pytest.fixture
def env() -> GraspEnv:
    return GraspEnv(EnvConfig())


@pytest.fixture
def planner(hand_model) -> GraspPlanner:
    return GraspPlanner(hand_model=hand_model)


@pytest.fixture
def task(env, planner) -> GraspTask:
    return GraspTask(env, planner)


def reachable_plan(env: GraspEnv, planner: GraspPlanner, start: int = 0):
    """First ``(seed, plan)`` from ``start`` whose placement has a reachable grasp."""
    for seed in range(start, start + 50):
        try:
            plan = planner.plan_for(env, seed)
            env.reset(plan, seed)
        except (NoReachableCandidate, PreGraspInfeasible):
            continue
        return seed, plan
    raise AssertionError("no reachable placement in 50 seeds")


@pytest.fixture
def started_env(env, planner):
    """Environment reset at a reachable placement; returns ``(env, seed, plan)``."""
    seed, plan = reachable_plan(env, planner)
    env.reset(plan, seed)
    return env, seed, plan


@pytest.fixture
def plan_finder():
    """``reachable_plan`` for tests that build their own environments."""
    return reachable_plan


@pytest.fixture(scope="session")
def demo_buffer():
    """One scripted episode on the default environment, with its manifest."""
    config = EnvConfig()
    buffer = collect_demos(
        lambda: GraspEnv(config),
        GraspPlanner(),
        1,
        seed=0,
        env_config_hash=environment_hash(config),
        report=False,
    )
    return buffer, buffer.manifest(seed=0)


def write_fake_run(
    root: Path,
    algorithm: str,
    seed: int,
    *,
    env_hash: str = "e" * 64,
    object_id: str = "sugar_box",
    rates: tuple[float, ...] = (0.1, 0.4),
) -> Path:
    """Metrics CSV and run summary laid out the way ``cmd_train`` writes them."""
    run_dir = root / algorithm / f"seed_{seed}"
    rows = [{"kind": "episode", "env_steps": 7, "episode": 0, "success": 0}]
    rows += [
        {"kind": "eval", "env_steps": 100 * (i + 1), "episode": i, "eval_success_rate": rate}
        for i, rate in enumerate(rates)
    ]
    write_metrics_csv(pd.DataFrame(rows, columns=METRIC_COLUMNS), run_dir / METRICS_NAME, config_hash="c", seed=seed)
    summary = {
        "algorithm": algorithm,
        "object_id": object_id,
        "grasp_mode": "lateral",
        "seed": seed,
        "env_hash": env_hash,
    }
    (run_dir / "run_summary.json").write_text(json.dumps(summary), encoding="utf-8")
    return run_dir


@pytest.fixture
def fake_run():
    return write_fake_run


@pytest.fixture
def quick_config(tmp_path, monkeypatch) -> ExperimentConfig:
    """Experiment cell small enough to collect, train and evaluate in seconds."""
    monkeypatch.delenv(THREADS_ENV_VAR, raising=False)
    return ExperimentConfig(
        algorithm="sac",
        seeds=(0,),
        out_dir=str(tmp_path / "runs"),
        env=EnvConfig(t_max=50),
        demo=DemoConfig(quota_transitions=100, max_episodes=5),
        sac=SacConfig(
            batch_size=8,
            hidden_sizes=(16,),
            total_timesteps=20,
            buffer_capacity=1000,
            demo_batch_size=4,
            eval_interval=0,
            eval_episodes=1,
        ),
    )
