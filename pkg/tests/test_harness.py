"""Tests for the experiment commands (collect, train, eval, compare)."""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np
import pytest

from grasp_lab.config import ExperimentConfig, load_experiment_config
from grasp_lab.demo_gen import load_demo_buffer, load_manifest
from grasp_lab.errors import ConfigError, ConfigHashMismatch, MissingDemoFile
from grasp_lab.harness import (
    COMPARE_COLUMNS,
    REWARD_TRACE_NAME,
    RUN_SUMMARY_NAME,
    THREADS_ENV_VAR,
    TIMING_NAME,
    cell_name,
    cmd_collect,
    cmd_compare,
    cmd_eval,
    cmd_train,
    default_demo_path,
    experiment_grid,
    thread_cap,
)
from grasp_lab.reward import TRACE_COLUMNS
from grasp_lab.rl.trainer import METRICS_NAME, read_metrics_csv

pytestmark = pytest.mark.integration


def quick_config_root(config: ExperimentConfig) -> Path:
    return Path(config.out_dir) / cell_name(config) / config.algorithm


class TestCollect:
    def test_writes_buffer_manifest_and_timing(self, quick_config) -> None:
        buffer, path = cmd_collect(quick_config, seed=1)
        assert path == default_demo_path(quick_config)
        assert path.name == "sugar_box_lateral.gldemo"
        assert buffer.transition_count >= 100
        manifest = load_manifest(path)
        assert manifest["seed"] == 1
        assert manifest["object_id"] == "sugar_box"
        assert path.with_name(path.stem + ".timing.json").exists()
        assert load_demo_buffer(path, expected_hash=quick_config.env_hash()).equals(buffer)

    def test_refuses_to_overwrite(self, quick_config, tmp_path) -> None:
        target = tmp_path / "demos.gldemo"
        cmd_collect(quick_config, out=target)
        with pytest.raises(ConfigError, match="already exists"):
            cmd_collect(quick_config, out=target)
        cmd_collect(quick_config, out=target, force=True)

    def test_same_seed_reproduces_the_file(self, quick_config, tmp_path) -> None:
        a = cmd_collect(quick_config, seed=2, out=tmp_path / "a.gldemo")[1]
        b = cmd_collect(quick_config, seed=2, out=tmp_path / "b.gldemo")[1]
        assert a.read_bytes() == b.read_bytes()


class TestTrain:
    def test_sac_run_layout(self, quick_config) -> None:
        summary = cmd_train(quick_config)
        root = quick_config_root(quick_config)
        assert (root / "config.yml").exists()
        assert json.loads((root / RUN_SUMMARY_NAME).read_text(encoding="utf-8"))["algorithm"] == "sac"
        seed_dir = root / "seed_0"
        for name in (METRICS_NAME, "checkpoint.npz", RUN_SUMMARY_NAME, TIMING_NAME):
            assert (seed_dir / name).exists()
        assert set(summary.final_success) == {0}
        assert summary.demo_success_rate is None
        _, header = read_metrics_csv(seed_dir / METRICS_NAME)
        assert header["config_hash"] == summary.config_hash

    def test_timing_stays_out_of_reproducible_artifacts(self, quick_config, tmp_path) -> None:
        cmd_train(quick_config, out=tmp_path / "a")
        cmd_train(quick_config, out=tmp_path / "b")
        for name in (METRICS_NAME, "checkpoint.npz"):
            assert (tmp_path / "a" / "seed_0" / name).read_bytes() == (tmp_path / "b" / "seed_0" / name).read_bytes()
        summaries = [
            json.loads((tmp_path / run / "seed_0" / RUN_SUMMARY_NAME).read_text(encoding="utf-8")) for run in "ab"
        ]
        for summary in summaries:
            del summary["metrics_path"], summary["checkpoint_path"]
        assert summaries[0] == summaries[1]

    def test_demo_algorithms_need_a_demo_file(self, quick_config) -> None:
        config = dataclasses.replace(quick_config, algorithm="gpayn")
        with pytest.raises(MissingDemoFile):
            cmd_train(config)

    def test_gpayn_uses_collected_demonstrations(self, quick_config) -> None:
        config = dataclasses.replace(quick_config, algorithm="gpayn")
        cmd_collect(config)
        summary = cmd_train(config, seeds=[3])
        assert set(summary.final_success) == {3}
        assert summary.demo_success_rate is not None

    def test_demonstrations_from_another_environment_are_rejected(self, quick_config) -> None:
        config = dataclasses.replace(quick_config, algorithm="gpayn")
        cmd_collect(config)
        other = dataclasses.replace(config, env=dataclasses.replace(config.env, t_max=60))
        with pytest.raises(ConfigHashMismatch):
            cmd_train(other, demo_path=default_demo_path(config))

    def test_forced_training_accepts_foreign_demonstrations(self, quick_config) -> None:
        config = dataclasses.replace(quick_config, algorithm="gpayn")
        cmd_collect(config)
        other = dataclasses.replace(config, env=dataclasses.replace(config.env, t_max=60))
        summary = cmd_train(other, demo_path=default_demo_path(config), force=True)
        assert set(summary.final_success) == {0}
        assert summary.env_hash == other.env_hash() != config.env_hash()


class TestEval:
    def test_checkpoint_is_required(self, quick_config) -> None:
        with pytest.raises(ConfigError, match="checkpoint"):
            cmd_eval(quick_config)

    def test_evaluates_a_trained_checkpoint(self, quick_config, tmp_path) -> None:
        cmd_train(quick_config)
        checkpoint = quick_config_root(quick_config) / "seed_0" / "checkpoint.npz"
        result = cmd_eval(quick_config, checkpoint=checkpoint, episodes=2, seed=4, out=tmp_path / "eval.json")
        assert result.episodes == 2
        assert 0.0 <= result.success_rate <= 1.0
        assert json.loads((tmp_path / "eval.json").read_text(encoding="utf-8"))["checkpoint"] == str(checkpoint)

    def test_checkpoint_for_another_observation_size(self, quick_config) -> None:
        cmd_train(quick_config)
        checkpoint = quick_config_root(quick_config) / "seed_0" / "checkpoint.npz"
        quat = dataclasses.replace(quick_config, env=dataclasses.replace(quick_config.env, orientation_repr="quat"))
        with pytest.raises(ConfigError, match="obs_dim"):
            cmd_eval(quat, checkpoint=checkpoint, episodes=1)

    def test_scripted_timeouts_are_not_successes(self, quick_config) -> None:
        result = cmd_eval(quick_config, scripted=True, episodes=2, seed=0)
        assert result.scripted
        assert result.success_rate == 0.0
        assert result.mean_length == 50.0

    def test_scripted_eval_writes_the_reward_trace(self, quick_config, tmp_path) -> None:
        cmd_eval(quick_config, scripted=True, episodes=2, seed=0, out=tmp_path / "eval.json")
        frame, header = read_metrics_csv(tmp_path / REWARD_TRACE_NAME)
        assert list(frame.columns) == TRACE_COLUMNS
        assert header["seed"] == "0"
        # Two timed-out episodes of 50 steps each.
        assert len(frame) == 100
        assert frame["step"].tolist() == list(range(1, 51)) * 2
        components = frame[["r_fingers", "r_dist", "r_height", "r_end"]].sum(axis=1)
        np.testing.assert_allclose(frame["total"], components, rtol=1e-7, atol=1e-7)
        assert frame["r_end"].iloc[-1] == -1.0

    def test_policy_eval_trace_matches_episode_lengths(self, quick_config, tmp_path) -> None:
        cmd_train(quick_config)
        checkpoint = quick_config_root(quick_config) / "seed_0" / "checkpoint.npz"
        result = cmd_eval(quick_config, checkpoint=checkpoint, episodes=2, seed=1, out=tmp_path / "eval.json")
        frame, _ = read_metrics_csv(tmp_path / REWARD_TRACE_NAME)
        assert len(frame) == round(result.mean_length * result.episodes)
        assert (frame["step"] == 1).sum() == 2


class TestCompare:
    def test_merges_runs_sorted(self, tmp_path, fake_run) -> None:
        fake_run(tmp_path, "sac", 1, rates=(0.0, 0.2))
        fake_run(tmp_path, "gpayn", 0)
        fake_run(tmp_path, "sac", 0)
        merged = cmd_compare([tmp_path])
        assert list(merged.columns) == COMPARE_COLUMNS
        assert merged["method"].tolist() == ["gpayn", "gpayn", "sac", "sac", "sac", "sac"]
        assert merged["seed"].tolist() == [0, 0, 0, 0, 1, 1]
        assert merged["env_steps"].tolist() == [100, 200] * 3
        assert merged["eval_success_rate"].tolist() == [0.1, 0.4, 0.1, 0.4, 0.0, 0.2]

    def test_writes_csv_with_env_hash(self, tmp_path, fake_run) -> None:
        fake_run(tmp_path, "sac", 0)
        out = tmp_path / "curves.csv"
        cmd_compare([tmp_path / "sac"], out=out)
        lines = out.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "# env_hash=" + "e" * 64
        assert lines[1] == ",".join(COMPARE_COLUMNS)

    def test_accepts_metric_files_directly(self, tmp_path, fake_run) -> None:
        run_dir = fake_run(tmp_path, "oerld", 2)
        assert len(cmd_compare([run_dir / METRICS_NAME])) == 2

    def test_no_runs(self, tmp_path) -> None:
        with pytest.raises(ConfigError, match="No metrics.csv"):
            cmd_compare([tmp_path])

    def test_different_environments(self, tmp_path, fake_run) -> None:
        fake_run(tmp_path, "sac", 0)
        fake_run(tmp_path, "gpayn", 0, env_hash="f" * 64)
        with pytest.raises(ConfigHashMismatch):
            cmd_compare([tmp_path])

    def test_different_objects(self, tmp_path, fake_run) -> None:
        fake_run(tmp_path, "sac", 0)
        fake_run(tmp_path, "gpayn", 0, object_id="power_drill")
        with pytest.raises(ConfigError, match="different objects"):
            cmd_compare([tmp_path])

    def test_missing_summary(self, tmp_path, fake_run) -> None:
        run_dir = fake_run(tmp_path, "sac", 0)
        (run_dir / RUN_SUMMARY_NAME).unlink()
        with pytest.raises(ConfigError, match=RUN_SUMMARY_NAME):
            cmd_compare([tmp_path])


@pytest.mark.parametrize("raw, expected", [("4", 4), ("", None), ("abc", None), ("0", None), (" 2 ", 2)])
def test_thread_cap(monkeypatch, raw: str, expected) -> None:
    monkeypatch.setenv(THREADS_ENV_VAR, raw)
    assert thread_cap() == expected


def test_experiment_grid_covers_objects_and_modes() -> None:
    cells = experiment_grid(ExperimentConfig(demo_path="somewhere.gldemo"))
    assert len(cells) == 10
    assert len({cell_name(c) for c in cells}) == 10
    assert all(c.demo_path is None for c in cells)
    assert {c.grasp_mode for c in cells} == {"lateral", "topdown"}


class TestEndToEnd:
    def test_collect_train_eval_chain_is_byte_identical(self, quick_config, tmp_path) -> None:
        config = dataclasses.replace(quick_config, algorithm="gpayn")
        artifacts = {}
        for name in ("a", "b"):
            root = tmp_path / name
            _, demo = cmd_collect(config, seed=4, out=root / "demos.gldemo")
            cmd_train(config, out=root / "train", demo_path=demo)
            checkpoint = root / "train" / "seed_0" / "checkpoint.npz"
            cmd_eval(config, checkpoint=checkpoint, episodes=2, out=root / "eval" / "eval.json")
            artifacts[name] = {
                "demos": demo.read_bytes(),
                "metrics": (root / "train" / "seed_0" / METRICS_NAME).read_bytes(),
                "checkpoint": checkpoint.read_bytes(),
                "reward_trace": (root / "eval" / REWARD_TRACE_NAME).read_bytes(),
            }
        for key, content in artifacts["a"].items():
            assert content == artifacts["b"][key], key

    @pytest.mark.slow
    def test_demonstrations_beat_plain_sac(self, tmp_path) -> None:
        # Bundled defaults: hidden 128, 1e5 steps, 20,000 demo transitions, lateral oracle
        # with 5 mm noise, seeds 0-2.
        base = dataclasses.replace(load_experiment_config(), out_dir=str(tmp_path))
        cmd_collect(base)
        gpayn = cmd_train(dataclasses.replace(base, algorithm="gpayn"))
        sac = cmd_train(dataclasses.replace(base, algorithm="sac"))
        seeds = sorted(gpayn.final_success)
        assert len(seeds) == 3
        wins = sum(gpayn.final_success[s] >= sac.final_success[s] for s in seeds)
        assert wins >= 2
        assert gpayn.demo_success_rate is not None
        mean_success = sum(gpayn.final_success.values()) / len(seeds)
        assert mean_success >= 0.9 * gpayn.demo_success_rate
