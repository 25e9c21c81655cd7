from __future__ import annotations

import numpy as np
import pytest
import torch
from scipy import stats

from grasp_lab.demo_gen import DemoBufferFile, record_dtype
from grasp_lab.errors import BufferTooSmall, ConfigHashMismatch, ShapeMismatch
from grasp_lab.hand_sim import ACTION_DIM, BASE_OBSERVATION_DIM
from grasp_lab.rl.replay import ReplayBuffer, Transition, buffer_from_demo_file, gpayn_init

HASH = "ef" * 32


def _transition(reward: float, *, demo: bool = False, obs_dim: int = 2, action_dim: int = 1) -> Transition:
    return Transition(np.full(obs_dim, reward), np.zeros(action_dim), reward, np.full(obs_dim, reward), False, demo)


def _demo_file(n: int, obs_dim: int = BASE_OBSERVATION_DIM) -> DemoBufferFile:
    rng = np.random.default_rng(n)
    records = np.zeros(n, dtype=record_dtype(obs_dim))
    records["obs"] = rng.normal(size=(n, obs_dim))
    records["next_obs"] = rng.normal(size=(n, obs_dim))
    records["action"] = rng.uniform(-1.0, 1.0, size=(n, ACTION_DIM))
    records["reward"] = rng.normal(size=n)
    records["done"] = np.arange(n) % 650 == 649
    return DemoBufferFile(HASH, obs_dim, records, 1, max(1, n // 650), 0)


class TestStorage:
    def test_fifo_eviction(self) -> None:
        buffer = ReplayBuffer(5, 2, 1)
        for i in range(7):
            buffer.add(_transition(float(i)))
        assert len(buffer) == 5
        assert buffer.rewards.tolist() == [5.0, 6.0, 2.0, 3.0, 4.0]

    def test_retained_demonstrations_are_never_evicted(self) -> None:
        buffer = ReplayBuffer(5, 2, 1, demo_retention=2)
        buffer.add(_transition(-1.0, demo=True))
        buffer.add(_transition(-2.0, demo=True))
        for i in range(10, 16):
            buffer.add(_transition(float(i)))
        assert buffer.protected_slots == 2
        assert buffer.rewards.tolist() == [-1.0, -2.0, 13.0, 14.0, 15.0]
        assert buffer.demo_count == 2

    def test_retention_only_covers_leading_demonstrations(self) -> None:
        buffer = ReplayBuffer(3, 2, 1, demo_retention=2)
        buffer.add(_transition(0.0))
        buffer.add(_transition(1.0, demo=True))
        for i in range(2, 6):
            buffer.add(_transition(float(i)))
        assert buffer.protected_slots == 0
        assert buffer.rewards.tolist() == [3.0, 4.0, 5.0]

    def test_demos_are_evicted_without_retention(self) -> None:
        buffer = ReplayBuffer(3, 2, 1)
        for i in range(3):
            buffer.add(_transition(float(i), demo=True))
        for i in range(3):
            buffer.add(_transition(10.0 + i))
        assert buffer.demo_count == 0

    def test_shape_and_reward_checks(self) -> None:
        buffer = ReplayBuffer(4, 2, 1)
        with pytest.raises(ShapeMismatch):
            buffer.add_arrays(np.zeros(3), np.zeros(1), 0.0, np.zeros(2), False)
        with pytest.raises(ShapeMismatch):
            buffer.add_arrays(np.zeros(2), np.zeros(2), 0.0, np.zeros(2), False)
        with pytest.raises(ValueError):
            buffer.add_arrays(np.zeros(2), np.zeros(1), float("nan"), np.zeros(2), False)
        assert len(buffer) == 0

    @pytest.mark.parametrize("capacity, retention", [(0, 0), (4, 4), (4, -1)])
    def test_invalid_construction(self, capacity: int, retention: int) -> None:
        with pytest.raises(ValueError):
            ReplayBuffer(capacity, 2, 1, demo_retention=retention)


class TestSampling:
    def test_too_small(self) -> None:
        buffer = ReplayBuffer(10, 2, 1)
        buffer.add(_transition(0.0))
        with pytest.raises(BufferTooSmall):
            buffer.sample(2, np.random.default_rng(0))

    def test_batch_contents(self) -> None:
        buffer = ReplayBuffer(10, 2, 1)
        for i in range(6):
            buffer.add(_transition(float(i), demo=i < 2))
        batch = buffer.sample(32, np.random.default_rng(1))
        assert len(batch) == 32
        assert batch.obs.dtype == torch.float64
        np.testing.assert_array_equal(batch.rewards.numpy(), batch.indices.astype(float))
        np.testing.assert_array_equal(batch.is_demo.numpy(), batch.indices < 2)
        assert buffer.samples_drawn == 32

    def test_sampling_is_uniform(self) -> None:
        buffer = ReplayBuffer(64, 2, 1)
        for i in range(50):
            buffer.add(_transition(float(i)))
        rng = np.random.default_rng(0)
        counts = np.zeros(50)
        for _ in range(100):
            counts += np.bincount(buffer.sample(200, rng).indices, minlength=50)
        assert counts.sum() == 20_000
        assert stats.chisquare(counts).pvalue > 1e-4

    def test_same_generator_gives_same_batch(self) -> None:
        buffer = ReplayBuffer(10, 2, 1)
        for i in range(10):
            buffer.add(_transition(float(i)))
        a = buffer.sample(16, np.random.default_rng(5)).indices
        b = buffer.sample(16, np.random.default_rng(5)).indices
        np.testing.assert_array_equal(a, b)


class TestDemoPrefill:
    def test_prefill_with_twenty_thousand_records(self) -> None:
        demos = _demo_file(20_000)
        buffer = gpayn_init(ReplayBuffer(50_000, BASE_OBSERVATION_DIM, ACTION_DIM), demos, expected_hash=HASH)
        assert len(buffer) == 20_000
        assert buffer.demo_count == 20_000
        np.testing.assert_array_equal(buffer.rewards[:20_000], demos.records["reward"].astype(float))
        np.testing.assert_array_equal(buffer.dones[:20_000], demos.records["done"].astype(float))
        np.testing.assert_array_equal(buffer.actions[:20_000], demos.records["action"].astype(float))

    def test_prefill_rejects_a_foreign_hash(self) -> None:
        buffer = ReplayBuffer(100, BASE_OBSERVATION_DIM, ACTION_DIM)
        with pytest.raises(ConfigHashMismatch):
            gpayn_init(buffer, _demo_file(10), expected_hash="00" * 32)
        assert len(buffer) == 0

    def test_prefill_rejects_other_observation_lengths(self) -> None:
        with pytest.raises(ShapeMismatch):
            gpayn_init(ReplayBuffer(100, BASE_OBSERVATION_DIM + 1, ACTION_DIM), _demo_file(10))

    def test_demo_only_buffer(self) -> None:
        demos = _demo_file(300)
        buffer = buffer_from_demo_file(demos, expected_hash=HASH)
        assert buffer.capacity == 300
        assert len(buffer) == 300 and buffer.demo_count == 300

    def test_empty_demo_file_gives_an_empty_buffer(self) -> None:
        buffer = buffer_from_demo_file(DemoBufferFile.empty(HASH, BASE_OBSERVATION_DIM))
        assert len(buffer) == 0
