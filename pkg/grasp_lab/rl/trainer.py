"""Episode loop for SAC, G-PAYN and OERLD with periodic deterministic evaluation."""

from __future__ import annotations

import json
import logging
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
import torch

from ..config import ALGORITHMS, SacConfig
from ..core.protocols import RolloutEnv
from ..demo_gen import DemoBufferFile
from ..errors import ConfigError, MissingDemoFile, TrainingDiverged
from ..logging_config import log_with_fallback
from ..reward import RewardBreakdown
from .replay import ReplayBuffer, Transition, buffer_from_demo_file, gpayn_init
from .sac import SacState, TrainingRng, UpdateLosses, bc_weight_at, oerld_update, sac_update, save_checkpoint

logger = logging.getLogger(__name__)

METRIC_COLUMNS = [
    "kind",
    "env_steps",
    "episode",
    "success",
    "episode_length",
    "episode_return",
    "r_fingers",
    "r_dist",
    "r_height",
    "r_end",
    "alpha",
    "actor_loss",
    "critic_loss",
    "eval_success_rate",
    "eval_mean_length",
]
CHECKPOINT_NAME = "checkpoint.npz"
METRICS_NAME = "metrics.csv"
NAN_DUMP_NAME = "nan_dump.json"
DEMO_ALGORITHMS = ("gpayn", "oerld")


@dataclass(frozen=True)
class EvalStats:
    """Outcome of a batch of deterministic evaluation episodes."""

    episodes: int
    success_rate: float
    mean_length: float
    mean_return: float
    mean_success_length: float

    def to_dict(self) -> dict:
        return {
            "episodes": self.episodes,
            "success_rate": self.success_rate,
            "mean_length": self.mean_length,
            "mean_return": self.mean_return,
            "mean_success_length": self.mean_success_length,
        }


@dataclass
class TrainResult:
    algorithm: str
    seed: int
    state: SacState
    metrics: pd.DataFrame
    gradient_passes: int
    env_steps: int
    episodes: int
    warmup_steps: int = 0
    final_eval: EvalStats | None = None
    checkpoint_path: Path | None = None
    metrics_path: Path | None = None


def evaluation_seeds(seed: int, episodes: int) -> list[int]:
    """Fresh placement seeds for evaluation, disjoint in stream from training seeds."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) % 2**64, 2]))
    return [int(s) for s in rng.integers(0, 2**63 - 1, size=episodes)]


def evaluate_policy(
    policy: Callable[[np.ndarray], np.ndarray],
    env: RolloutEnv,
    episodes: int,
    seed: int,
    traces: list[list[RewardBreakdown]] | None = None,
) -> EvalStats:
    """Run ``episodes`` episodes with a fixed policy; success counts only ``Success``.

    Parameters
    ----------
    policy : Callable[[np.ndarray], np.ndarray]
        Maps a flat observation to a policy-space action.
    env : RolloutEnv
        Environment dedicated to evaluation.
    episodes : int
        Number of episodes.
    seed : int
        Seed of the evaluation placement stream.
    traces : list[list[RewardBreakdown]] | None
        When given, one list of per-step reward breakdowns is appended per episode
        (steps whose ``info`` has no ``reward_breakdown`` are skipped).
    """
    lengths, returns, success_lengths = [], [], []
    successes = 0
    for episode_seed in evaluation_seeds(seed, episodes):
        obs = env.reset(episode_seed)
        total, length = 0.0, 0
        trace: list[RewardBreakdown] = []
        if traces is not None:
            traces.append(trace)
        while True:
            obs, reward, terminated, truncated, info = env.step(policy(obs))
            if "reward_breakdown" in info:
                trace.append(info["reward_breakdown"])
            total += reward
            length += 1
            if terminated or truncated:
                break
        lengths.append(length)
        returns.append(total)
        if info.get("success"):
            successes += 1
            success_lengths.append(length)
    return EvalStats(
        episodes=episodes,
        success_rate=successes / episodes if episodes else 0.0,
        mean_length=float(np.mean(lengths)) if lengths else 0.0,
        mean_return=float(np.mean(returns)) if returns else 0.0,
        mean_success_length=float(np.mean(success_lengths)) if success_lengths else float("nan"),
    )


def write_metrics_csv(frame: pd.DataFrame, path: str | Path, *, config_hash: str, seed: int) -> Path:
    """CSV with a leading ``# config_hash=... seed=...`` line."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8", newline="") as handle:
        handle.write(f"# config_hash={config_hash} seed={seed}\n")
        frame.to_csv(handle, index=False, float_format="%.9g", lineterminator="\n")
    return target


def read_metrics_csv(path: str | Path) -> tuple[pd.DataFrame, dict[str, str]]:
    """Inverse of ``write_metrics_csv``; returns the frame and the header fields."""
    target = Path(path)
    with target.open(encoding="utf-8") as handle:
        first = handle.readline().strip()
    fields = dict(part.split("=", 1) for part in first.lstrip("# ").split() if "=" in part)
    return pd.read_csv(target, comment="#"), fields


def _dump_divergence(
    out_dir: Path | None, losses: UpdateLosses, env_steps: int, episode: int, config_hash: str, seed: int
) -> None:
    if out_dir is None:
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "losses": {k: repr(v) for k, v in losses.to_dict().items()},
        "env_steps": env_steps,
        "episode": episode,
        "config_hash": config_hash,
        "seed": seed,
    }
    (out_dir / NAN_DUMP_NAME).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def train(
    algorithm: str,
    env: RolloutEnv,
    config: SacConfig,
    seed: int,
    *,
    demo_file: DemoBufferFile | None = None,
    expected_demo_hash: str | None = None,
    eval_env: RolloutEnv | None = None,
    eval_seed: int | None = None,
    out_dir: str | Path | None = None,
    config_hash: str = "",
) -> TrainResult:
    """Train one learner for ``config.total_timesteps`` environment steps.

    Before the clock starts, policy rollouts fill the replay buffer to
    ``config.warmup_size`` transitions; a demo-filled buffer may need none. These
    warm-up steps are reported in ``TrainResult.warmup_steps`` but count neither toward
    ``total_timesteps`` nor the metrics. From then on one round of ``gradient_steps``
    passes runs every ``train_freq`` env steps, so ``total_timesteps // train_freq *
    gradient_steps`` passes run in total. Episodes restart through ``env.reset`` with seeds
    drawn from the run seed, so the trace depends only on ``seed`` and the configs.

    Parameters
    ----------
    algorithm : str
        ``sac`` (empty buffer), ``gpayn`` (buffer pre-filled with demonstrations) or
        ``oerld`` (empty buffer, demonstrations feed a BC term).
    env : RolloutEnv
        Training environment with normalized actions.
    config : SacConfig
        Learner hyperparameters and cadences.
    seed : int
        Run seed.
    demo_file : DemoBufferFile | None
        Demonstrations; required for ``gpayn`` and ``oerld``.
    expected_demo_hash : str | None
        Environment hash the demonstrations must carry.
    eval_env : RolloutEnv | None
        Separate environment for evaluation; evaluation is skipped when None.
    eval_seed : int | None
        Seed of the evaluation placements (defaults to ``seed``).
    out_dir : str | Path | None
        Where the metrics CSV and checkpoints go; nothing is written when None.
    config_hash : str
        Embedded in every artifact.

    Raises
    ------
    MissingDemoFile
        If a demo-based algorithm gets no demonstrations.
    TrainingDiverged
        If a loss becomes non-finite; ``nan_dump.json`` is written first.
    """
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"Unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    if algorithm in DEMO_ALGORITHMS and demo_file is None:
        raise MissingDemoFile(f"Algorithm {algorithm!r} needs a demonstration buffer")
    out_path = Path(out_dir) if out_dir is not None else None
    eval_seed = seed if eval_seed is None else eval_seed

    rng = TrainingRng(seed)
    state = SacState.create(env.observation_dim, env.action_dim, config, seed)
    buffer = ReplayBuffer(
        config.buffer_capacity, env.observation_dim, env.action_dim, demo_retention=config.demo_retention
    )
    demo_buffer: ReplayBuffer | None = None
    if algorithm == "gpayn":
        gpayn_init(buffer, demo_file, expected_hash=expected_demo_hash)  # type: ignore[arg-type]
    elif algorithm == "oerld":
        demo_buffer = buffer_from_demo_file(demo_file, expected_hash=expected_demo_hash)  # type: ignore[arg-type]

    log_with_fallback(
        logger,
        logging.INFO,
        f"Starting {algorithm} training: seed={seed} steps={config.total_timesteps} "
        f"buffer={len(buffer)} (demos {buffer.demo_count})",
        fallback_print=False,
    )

    rows: list[dict] = []
    losses: UpdateLosses | None = None
    final_eval: EvalStats | None = None
    episode = 0
    env_steps = 0
    warmup_steps = 0

    def policy(obs: np.ndarray) -> np.ndarray:
        return state.act(obs, deterministic=True)

    def loss_fields() -> dict:
        return {
            "alpha": state.alpha,
            "actor_loss": losses.actor_loss if losses else float("nan"),
            "critic_loss": losses.critic_loss if losses else float("nan"),
        }

    def run_eval() -> EvalStats:
        stats = evaluate_policy(policy, eval_env, config.eval_episodes, eval_seed)  # type: ignore[arg-type]
        rows.append(
            {
                "kind": "eval",
                "env_steps": env_steps,
                "episode": episode,
                **loss_fields(),
                "eval_success_rate": stats.success_rate,
                "eval_mean_length": stats.mean_length,
            }
        )
        log_with_fallback(
            logger,
            logging.INFO,
            f"[{algorithm} seed={seed}] step {env_steps}: eval success {stats.success_rate:.3f}",
            fallback_print=False,
        )
        return stats

    if config.total_timesteps > 0:
        # Warm-up rollouts stay off the training clock.
        if len(buffer) < config.warmup_size:
            obs = env.reset(rng.episode_seed())
            while len(buffer) < config.warmup_size:
                action = state.act(obs, rng.torch)
                next_obs, reward, terminated, truncated, _ = env.step(action)
                buffer.add(Transition(obs, action, reward, next_obs, terminated))
                warmup_steps += 1
                obs = env.reset(rng.episode_seed()) if terminated or truncated else next_obs
            logger.debug("Warm-up collected %d transitions", warmup_steps)

        obs = env.reset(rng.episode_seed())
        ep_return, ep_length = 0.0, 0
        while env_steps < config.total_timesteps:
            action = state.act(obs, rng.torch)
            next_obs, reward, terminated, truncated, info = env.step(action)
            env_steps += 1
            ep_return += reward
            ep_length += 1
            buffer.add(Transition(obs, action, reward, next_obs, terminated))
            obs = next_obs

            if terminated or truncated:
                rows.append(
                    {
                        "kind": "episode",
                        "env_steps": env_steps,
                        "episode": episode,
                        "success": int(bool(info.get("success", False))),
                        "episode_length": ep_length,
                        "episode_return": ep_return,
                        "r_fingers": info.get("r_fingers", float("nan")),
                        "r_dist": info.get("r_dist", float("nan")),
                        "r_height": info.get("r_height", float("nan")),
                        "r_end": info.get("r_end", float("nan")),
                        **loss_fields(),
                    }
                )
                logger.debug("Episode %d finished after %d steps (return %.3f)", episode, ep_length, ep_return)
                episode += 1
                obs = env.reset(rng.episode_seed())
                ep_return, ep_length = 0.0, 0

            if env_steps % config.train_freq == 0:
                for _ in range(config.gradient_steps):
                    if demo_buffer is not None:
                        losses = oerld_update(
                            state, buffer, demo_buffer, rng, bc_weight=bc_weight_at(config, env_steps)
                        )
                    else:
                        losses = sac_update(state, buffer, rng)
                    if not losses.is_finite():
                        _dump_divergence(out_path, losses, env_steps, episode, config_hash, seed)
                        raise TrainingDiverged(f"Non-finite loss at env step {env_steps}: {losses.to_dict()}")

            if eval_env is not None and config.eval_interval and env_steps % config.eval_interval == 0:
                final_eval = run_eval()

            if out_path is not None and config.checkpoint_interval and env_steps % config.checkpoint_interval == 0:
                save_checkpoint(
                    out_path / "checkpoints" / f"step_{env_steps:09d}.npz",
                    state,
                    rng=rng,
                    counters={"env_steps": env_steps, "episodes": episode},
                    config_hash=config_hash,
                    seed=seed,
                )

        if eval_env is not None and not (config.eval_interval and env_steps % config.eval_interval == 0):
            final_eval = run_eval()

    metrics = pd.DataFrame(rows, columns=METRIC_COLUMNS)
    checkpoint_path = metrics_path = None
    if out_path is not None:
        checkpoint_path = save_checkpoint(
            out_path / CHECKPOINT_NAME,
            state,
            rng=rng,
            counters={"env_steps": env_steps, "episodes": episode},
            config_hash=config_hash,
            seed=seed,
        )
        metrics_path = write_metrics_csv(metrics, out_path / METRICS_NAME, config_hash=config_hash, seed=seed)

    log_with_fallback(
        logger,
        logging.INFO,
        f"Completed {algorithm} training: seed={seed} steps={env_steps} episodes={episode} "
        f"warm-up steps={warmup_steps} gradient passes={state.gradient_passes}",
        fallback_print=False,
    )
    return TrainResult(
        algorithm=algorithm,
        seed=seed,
        state=state,
        metrics=metrics,
        gradient_passes=state.gradient_passes,
        env_steps=env_steps,
        episodes=episode,
        warmup_steps=warmup_steps,
        final_eval=final_eval,
        checkpoint_path=checkpoint_path,
        metrics_path=metrics_path,
    )


def set_torch_threads(threads: int | None) -> None:
    """Cap intra-op parallelism for reproducible CPU runs."""
    if threads:
        torch.set_num_threads(int(threads))
