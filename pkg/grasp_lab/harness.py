"""Experiment commands: collect demonstrations, train, evaluate and compare runs.

Every artifact carries the config hash and the seed. Wall-clock durations are kept out
of the artifacts and written to ``timing.json`` sidecars, so re-running a command with
the same inputs reproduces its outputs byte for byte.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import pandas as pd

from .config import GRASP_MODES, ExperimentConfig, build_dataclass, config_hash, dump_config
from .demo_gen import (
    DemoBufferFile,
    collect_demos,
    load_demo_buffer,
    load_manifest,
    run_scripted_episode,
    save_demo_buffer,
)
from .errors import ConfigError, ConfigHashMismatch, MissingDemoFile
from .grasp_prior import GraspPlanner
from .hand_sim import GraspEnv
from .logging_config import log_with_fallback, run_context
from .objects import load_object_catalogue
from .reward import RewardBreakdown, reward_trace_frame
from .rl.sac import load_checkpoint
from .rl.trainer import (
    DEMO_ALGORITHMS,
    METRICS_NAME,
    EvalStats,
    evaluate_policy,
    evaluation_seeds,
    read_metrics_csv,
    set_torch_threads,
    train,
    write_metrics_csv,
)
from .task import GraspTask
from .validation import validate_demo_buffer

logger = logging.getLogger(__name__)

THREADS_ENV_VAR = "GPAYN_THREADS"
RUN_SUMMARY_NAME = "run_summary.json"
TIMING_NAME = "timing.json"
REWARD_TRACE_NAME = "reward_trace.csv"
COMPARE_COLUMNS = ["method", "seed", "env_steps", "eval_success_rate"]


@dataclass
class RunSummary:
    """Outcome of ``cmd_train`` over all seeds of one experiment cell.

    Attributes
    ----------
    algorithm, object_id, grasp_mode : str
        Experiment cell.
    config_hash, env_hash : str
        Full-config and environment hashes.
    final_success : dict[int, float]
        Final evaluation success rate per seed.
    demo_success_rate : float | None
        Success rate of the scripted pipeline that produced the demonstrations.
    curve_paths, checkpoint_paths : dict[int, str]
        Per-seed metrics CSV and checkpoint.
    """

    algorithm: str
    object_id: str
    grasp_mode: str
    config_hash: str
    env_hash: str
    final_success: dict[int, float] = field(default_factory=dict)
    demo_success_rate: float | None = None
    curve_paths: dict[int, str] = field(default_factory=dict)
    checkpoint_paths: dict[int, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        payload = dataclasses.asdict(self)
        for key in ("final_success", "curve_paths", "checkpoint_paths"):
            payload[key] = {str(k): v for k, v in sorted(payload[key].items())}
        return payload


@dataclass
class EvalResult:
    """Success rate and episode lengths of an evaluation batch."""

    episodes: int
    success_rate: float
    mean_length: float
    mean_success_length: float
    scripted: bool
    config_hash: str
    seed: int
    checkpoint: str | None = None

    @classmethod
    def from_stats(cls, stats: EvalStats, *, scripted: bool, config_hash: str, seed: int, checkpoint=None):
        return cls(
            episodes=stats.episodes,
            success_rate=stats.success_rate,
            mean_length=stats.mean_length,
            mean_success_length=stats.mean_success_length,
            scripted=scripted,
            config_hash=config_hash,
            seed=seed,
            checkpoint=None if checkpoint is None else str(checkpoint),
        )

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _write_json(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def thread_cap() -> int | None:
    """Value of ``GPAYN_THREADS`` or None when unset or invalid."""
    raw = os.environ.get(THREADS_ENV_VAR, "").strip()
    if not raw:
        return None
    try:
        value = int(raw)
    except ValueError:
        logger.warning("Ignoring %s=%r (not an integer)", THREADS_ENV_VAR, raw)
        return None
    return value if value > 0 else None


def build_env(config: ExperimentConfig) -> GraspEnv:
    return GraspEnv(config.env, reward_config=config.reward)


def build_task(config: ExperimentConfig) -> GraspTask:
    env = build_env(config)
    return GraspTask(env, GraspPlanner(config.planner, hand_model=env.hand_model))


def cell_name(config: ExperimentConfig) -> str:
    return f"{config.object_id}_{config.grasp_mode}"


def default_demo_path(config: ExperimentConfig) -> Path:
    if config.demo_path:
        return Path(config.demo_path)
    return Path(config.out_dir) / "demos" / f"{cell_name(config)}.gldemo"


def cmd_collect(
    config: ExperimentConfig,
    *,
    seed: int = 0,
    out: str | Path | None = None,
    force: bool = False,
) -> tuple[DemoBufferFile, Path]:
    """Collect demonstrations for one cell and save buffer, manifest and timing.

    Raises
    ------
    ConfigError
        If the target exists and ``force`` is False.
    """
    path = Path(out) if out is not None else default_demo_path(config)
    if path.exists() and not force:
        raise ConfigError(f"{path} already exists; pass --force to overwrite")
    planner = GraspPlanner(config.planner, hand_model=build_env(config).hand_model)
    started = time.perf_counter()
    with run_context(f"collect/{cell_name(config)}"):
        buffer = collect_demos(
            lambda: build_env(config),
            planner,
            config.demo.quota_transitions,
            seed=seed,
            config=config.demo,
            env_config_hash=config.env_hash(),
        )
    extra = {
        "config_hash": config_hash(config),
        "object_id": config.object_id,
        "grasp_mode": config.grasp_mode,
        "noise_std": config.noise_std,
        "success_only": config.demo.success_only,
    }
    save_demo_buffer(buffer, path, seed=seed, extra=extra)
    _write_json(path.with_name(path.stem + ".timing.json"), {"collect_seconds": time.perf_counter() - started})

    report = validate_demo_buffer(
        buffer,
        load_manifest(path),
        expected_hash=config.env_hash(),
        orientation_repr=config.env.orientation_repr,
        reward_config=config.reward,
        success_only=config.demo.success_only,
        artifact=str(path),
    )
    if report.status == "FAIL":
        log_with_fallback(logger, logging.ERROR, str(report))
    return buffer, path


def _train_seed(
    config_dict: dict, seed: int, demo_path: str | None, run_dir: str, force: bool, threads: int | None
) -> dict:
    """Train one seed; module-level so worker processes can run it.

    With ``force`` the demonstrations are used even when their environment hash differs
    from the current config; the mismatch is logged as a warning.
    """
    config = build_dataclass(ExperimentConfig, config_dict)
    set_torch_threads(threads)
    demo = None
    if config.algorithm in DEMO_ALGORITHMS:
        demo = load_demo_buffer(demo_path, expected_hash=config.env_hash(), force=force)  # type: ignore[arg-type]
    out_dir = Path(run_dir)
    started = time.perf_counter()
    with run_context(f"{config.algorithm}/seed_{seed}"):
        result = train(
            config.algorithm,
            build_task(config),
            config.sac,
            seed,
            demo_file=demo,
            expected_demo_hash=None if force else config.env_hash(),
            eval_env=build_task(config),
            eval_seed=config.eval_seed,
            out_dir=out_dir,
            config_hash=config_hash(config),
        )
    summary = {
        "algorithm": config.algorithm,
        "object_id": config.object_id,
        "grasp_mode": config.grasp_mode,
        "seed": seed,
        "config_hash": config_hash(config),
        "env_hash": config.env_hash(),
        "env_steps": result.env_steps,
        "episodes": result.episodes,
        "gradient_passes": result.gradient_passes,
        "final_eval": None if result.final_eval is None else result.final_eval.to_dict(),
        "metrics_path": str(result.metrics_path),
        "checkpoint_path": str(result.checkpoint_path),
    }
    _write_json(out_dir / RUN_SUMMARY_NAME, summary)
    _write_json(out_dir / TIMING_NAME, {"train_seconds": time.perf_counter() - started})
    return summary


def cmd_train(
    config: ExperimentConfig,
    *,
    seeds: list[int] | None = None,
    out: str | Path | None = None,
    demo_path: str | Path | None = None,
    force: bool = False,
) -> RunSummary:
    """Train every seed of a cell, in parallel worker processes when ``GPAYN_THREADS > 1``.

    ``force`` accepts demonstrations collected under a different environment config.

    Raises
    ------
    MissingDemoFile
        If ``gpayn``/``oerld`` is requested and the demonstration file does not exist.
    ConfigHashMismatch
        If the demonstrations carry another environment hash and ``force`` is False.
    """
    run_seeds = list(seeds) if seeds else list(config.seeds)
    root = Path(out) if out is not None else Path(config.out_dir) / cell_name(config) / config.algorithm
    demo = Path(demo_path) if demo_path is not None else default_demo_path(config)
    if config.algorithm in DEMO_ALGORITHMS and not demo.exists():
        raise MissingDemoFile(f"{config.algorithm} needs demonstrations; {demo} not found (run 'collect' first)")

    root.mkdir(parents=True, exist_ok=True)
    dump_config(config, root / "config.yml")
    cap = thread_cap()
    workers = min(cap or 1, len(run_seeds))
    jobs = [(config.to_dict(), s, str(demo), str(root / f"seed_{s}"), force) for s in run_seeds]
    log_with_fallback(
        logger,
        logging.INFO,
        f"Starting {config.algorithm} on {cell_name(config)}: seeds {run_seeds}, {workers} worker(s)",
    )
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_train_seed, *job, 1) for job in jobs]
            results = [f.result() for f in futures]
    else:
        results = [_train_seed(*job, cap) for job in jobs]

    manifest = load_manifest(demo) if config.algorithm in DEMO_ALGORITHMS else None
    summary = RunSummary(
        algorithm=config.algorithm,
        object_id=config.object_id,
        grasp_mode=config.grasp_mode,
        config_hash=config_hash(config),
        env_hash=config.env_hash(),
        demo_success_rate=None if manifest is None else manifest.get("success_rate"),
    )
    for item in results:
        seed = int(item["seed"])
        summary.final_success[seed] = float(item["final_eval"]["success_rate"]) if item["final_eval"] else float("nan")
        summary.curve_paths[seed] = item["metrics_path"]
        summary.checkpoint_paths[seed] = item["checkpoint_path"]
    _write_json(root / RUN_SUMMARY_NAME, summary.to_dict())
    log_with_fallback(
        logger,
        logging.INFO,
        f"Completed {config.algorithm} on {cell_name(config)}: final success per seed "
        + ", ".join(f"{s}={r:.3f}" for s, r in sorted(summary.final_success.items())),
    )
    return summary


def _scripted_stats(
    config: ExperimentConfig, episodes: int, seed: int, traces: list[list[RewardBreakdown]] | None = None
) -> EvalStats:
    task = build_task(config)
    lengths, success_lengths = [], []
    successes = 0
    total_return = 0.0
    for episode_seed in evaluation_seeds(seed, episodes):
        task.reset(episode_seed)
        plan, placement = task.plan, task.placement_seed
        assert plan is not None and placement is not None
        episode = run_scripted_episode(task.env, plan, placement, literal_schedule=config.demo.literal_schedule)
        if traces is not None:
            traces.append(episode.breakdowns)
        lengths.append(episode.length)
        total_return += float(episode.records["reward"].astype(float).sum())
        if episode.success:
            successes += 1
            success_lengths.append(episode.length)
    return EvalStats(
        episodes=episodes,
        success_rate=successes / episodes if episodes else 0.0,
        mean_length=float(sum(lengths) / len(lengths)) if lengths else 0.0,
        mean_return=total_return / episodes if episodes else 0.0,
        mean_success_length=float(sum(success_lengths) / len(success_lengths)) if success_lengths else float("nan"),
    )


def cmd_eval(
    config: ExperimentConfig,
    *,
    checkpoint: str | Path | None = None,
    episodes: int | None = None,
    seed: int | None = None,
    scripted: bool = False,
    out: str | Path | None = None,
) -> EvalResult:
    """Evaluate a checkpoint's deterministic policy, or the scripted demonstrator.

    Success counts only episodes that end with ``Success``. With ``out`` the result goes
    to that JSON file and the per-step reward breakdown of every episode to
    ``reward_trace.csv`` beside it.
    """
    n = config.sac.eval_episodes if episodes is None else episodes
    eval_seed = config.eval_seed if seed is None else seed
    traces: list[list[RewardBreakdown]] = []
    if scripted:
        stats = _scripted_stats(config, n, eval_seed, traces)
    else:
        if checkpoint is None:
            raise ConfigError("eval needs --checkpoint (or --scripted)")
        state = load_checkpoint(checkpoint).state
        task = build_task(config)
        if state.obs_dim != task.observation_dim:
            raise ConfigError(f"Checkpoint obs_dim {state.obs_dim} does not match environment {task.observation_dim}")
        stats = evaluate_policy(lambda obs: state.act(obs, deterministic=True), task, n, eval_seed, traces)
    result = EvalResult.from_stats(
        stats, scripted=scripted, config_hash=config_hash(config), seed=eval_seed, checkpoint=checkpoint
    )
    log_with_fallback(
        logger,
        logging.INFO,
        f"{'Scripted' if scripted else 'Policy'} evaluation on {cell_name(config)}: success "
        f"{result.success_rate:.3f} over {n} episodes, mean length {result.mean_length:.1f}",
    )
    if out is not None:
        _write_json(Path(out), result.to_dict())
        trace_path = Path(out).parent / REWARD_TRACE_NAME
        write_metrics_csv(reward_trace_frame(traces), trace_path, config_hash=result.config_hash, seed=eval_seed)
    return result


def _discover_runs(paths: list[str | Path]) -> list[Path]:
    found: list[Path] = []
    for raw in paths:
        path = Path(raw)
        if path.is_file():
            found.append(path)
        else:
            found.extend(sorted(path.rglob(METRICS_NAME)))
    return found


def cmd_compare(runs: list[str | Path], *, out: str | Path | None = None) -> pd.DataFrame:
    """Merge evaluation curves of several runs into one plot-ready frame.

    Columns are ``method, seed, env_steps, eval_success_rate``, sorted by method, seed
    and step.

    Raises
    ------
    ConfigError
        If no runs are found or runs target different objects.
    ConfigHashMismatch
        If runs were produced under different environment configs.
    """
    metric_paths = _discover_runs(runs)
    if not metric_paths:
        raise ConfigError(f"No {METRICS_NAME} found under {', '.join(map(str, runs))}")
    frames = []
    cells: set[tuple[str, str]] = set()
    env_hashes: set[str] = set()
    for path in metric_paths:
        summary_path = path.with_name(RUN_SUMMARY_NAME)
        if not summary_path.exists():
            raise ConfigError(f"{path} has no {RUN_SUMMARY_NAME} next to it")
        summary = json.loads(summary_path.read_text(encoding="utf-8"))
        cells.add((summary["object_id"], summary["grasp_mode"]))
        env_hashes.add(summary["env_hash"])
        metrics, header = read_metrics_csv(path)
        evals = metrics.loc[metrics["kind"] == "eval", ["env_steps", "eval_success_rate"]].copy()
        evals.insert(0, "seed", int(header.get("seed", summary["seed"])))
        evals.insert(0, "method", summary["algorithm"])
        frames.append(evals)
    if len({obj for obj, _ in cells}) > 1:
        raise ConfigError(f"Runs target different objects: {sorted(cells)}")
    if len(env_hashes) > 1:
        raise ConfigHashMismatch(f"Runs were produced under {len(env_hashes)} different environment configs")
    merged = (
        pd.concat(frames, ignore_index=True)
        .astype({"env_steps": int})
        .sort_values(["method", "seed", "env_steps"], kind="mergesort")
        .reset_index(drop=True)[COMPARE_COLUMNS]
    )
    if out is not None:
        target = Path(out)
        target.parent.mkdir(parents=True, exist_ok=True)
        with target.open("w", encoding="utf-8", newline="") as handle:
            handle.write(f"# env_hash={env_hashes.pop()}\n")
            merged.to_csv(handle, index=False, float_format="%.9g", lineterminator="\n")
    return merged


def experiment_grid(
    base: ExperimentConfig,
    objects: list[str] | None = None,
    modes: tuple[str, ...] = GRASP_MODES,
) -> list[ExperimentConfig]:
    """One config per object x grasp mode, each writing under its own cell directory."""
    object_ids = objects or sorted(load_object_catalogue())
    cells = []
    for object_id in object_ids:
        for mode in modes:
            cells.append(
                dataclasses.replace(
                    base,
                    env=dataclasses.replace(base.env, object_id=object_id),
                    planner=dataclasses.replace(base.planner, mode=mode),
                    demo_path=None,
                )
            )
    return cells
