"""Scripted three-phase demonstrations and the demonstration buffer file.

The scripted policy approaches the object from the pre-grasp pose in 100 waypoints,
closes the fingers adaptively over 500 steps, then lifts by 2 mm per step. Every
transition of every rolled-out episode is stored (optionally only successful ones)
until the transition quota is met.

Buffer file layout (little-endian)::

    offset  size  field
    0       8     magic b"GLDEMOBF"
    8       4     schema_version        u4
    12      4     obs_dim               u4
    16      4     action_dim            u4
    20      8     transition_count      u8
    28      8     success_count         u8
    36      8     episode_count         u8
    44      8     skipped_episodes      u8
    52      64    env_config_hash       ascii hex
    116     ...   transition_count fixed-width records (see ``record_dtype``)
"""

from __future__ import annotations

import enum
import json
import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import DemoConfig
from .core.protocols import PlanSource
from .errors import ConfigHashMismatch, NoReachableCandidate, PreGraspInfeasible, SchemaMismatch
from .grasp_prior import GraspPlan
from .hand_model import HandModel
from .hand_sim import ACTION_DIM, Action, GraspEnv, HandState, TerminationCause
from .logging_config import log_with_fallback
from .reward import RewardBreakdown

logger = logging.getLogger(__name__)

DEMO_SCHEMA_VERSION = 1
DEMO_MAGIC = b"GLDEMOBF"
APPROACH_STEPS = 100
CLOSE_STEPS = 500
CLOSE_RATE_DIVISOR = 250.0
LIFT_STEP = 0.002
LITERAL_SCHEDULE_OFFSET = 500

HEADER_DTYPE = np.dtype(
    [
        ("magic", "S8"),
        ("schema_version", "<u4"),
        ("obs_dim", "<u4"),
        ("action_dim", "<u4"),
        ("transition_count", "<u8"),
        ("success_count", "<u8"),
        ("episode_count", "<u8"),
        ("skipped_episodes", "<u8"),
        ("env_config_hash", "S64"),
    ]
)


def record_dtype(obs_dim: int) -> np.dtype:
    """Fixed-width transition record for an observation length."""
    return np.dtype(
        [
            ("obs", "<f4", (obs_dim,)),
            ("action", "<f4", (ACTION_DIM,)),
            ("reward", "<f4"),
            ("next_obs", "<f4", (obs_dim,)),
            ("done", "u1"),
            ("termination", "u1"),
            ("next_h_mm", "<f4"),
            ("episode", "<u4"),
        ]
    )


class DemoPhase(enum.Enum):
    APPROACH = "approach"
    CLOSE = "close"
    LIFT = "lift"

    @classmethod
    def for_step(cls, step_index: int) -> DemoPhase:
        if step_index < APPROACH_STEPS:
            return cls.APPROACH
        if step_index < APPROACH_STEPS + CLOSE_STEPS:
            return cls.CLOSE
        return cls.LIFT


@dataclass
class ScriptedPhaseState:
    """Mutable per-episode state of the scripted policy.

    Attributes
    ----------
    tmp_fingers : np.ndarray
        Last closing action, repeated during the lift.
    literal_schedule : bool
        Use ``k - 500`` instead of ``k - 100`` in the closing progress.
    """

    tmp_fingers: np.ndarray = field(default_factory=lambda: np.zeros(9))
    literal_schedule: bool = False


def closing_progress(step_index: int, literal_schedule: bool = False) -> float:
    offset = LITERAL_SCHEDULE_OFFSET if literal_schedule else APPROACH_STEPS
    return (step_index - offset) / CLOSE_STEPS


def scripted_action(
    step_index: int,
    hand_state: HandState,
    plan: GraspPlan,
    hand_model: HandModel,
    phase_state: ScriptedPhaseState,
) -> Action:
    """Action of the scripted demonstrator at ``step_index``.

    During the close phase each joint takes the smaller of a constant rate and the gap
    to the linear open-to-closed schedule, so a blocked finger never races ahead.
    """
    phase = DemoPhase.for_step(step_index)
    if phase is DemoPhase.APPROACH:
        offset = (plan.grasp_pose.position - plan.pre_grasp_pose.position) / APPROACH_STEPS
        return Action(offset, np.zeros(3), np.zeros(9))
    if phase is DemoPhase.CLOSE:
        delta = hand_model.qpos_close - hand_model.qpos_open
        rate = delta / CLOSE_RATE_DIVISOR
        progress = closing_progress(step_index, phase_state.literal_schedule)
        gap = hand_model.qpos_open + progress * delta - np.asarray(hand_state.qpos)
        fingers = np.minimum(rate, gap)
        phase_state.tmp_fingers = fingers.copy()
        return Action(np.zeros(3), np.zeros(3), fingers)
    return Action(np.array([0.0, 0.0, LIFT_STEP]), np.zeros(3), phase_state.tmp_fingers.copy())


@dataclass
class ScriptedEpisode:
    records: np.ndarray
    termination: TerminationCause
    length: int
    breakdowns: list[RewardBreakdown] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.termination is TerminationCause.SUCCESS


def run_scripted_episode(
    env: GraspEnv,
    plan: GraspPlan,
    seed: int,
    *,
    episode_index: int = 0,
    literal_schedule: bool = False,
) -> ScriptedEpisode:
    """Roll out the scripted policy for one episode and return its transition records.

    Raises
    ------
    PreGraspInfeasible
        Propagated from ``env.reset``.
    """
    observation = env.reset(plan, seed)
    orientation = env.config.orientation_repr
    limits = env.config.action_limits
    phase_state = ScriptedPhaseState(literal_schedule=literal_schedule)
    obs = observation.to_array(orientation)
    rows = []
    breakdowns: list[RewardBreakdown] = []
    step_index = 0
    while True:
        action = scripted_action(step_index, env.hand_state, plan, env.hand_model, phase_state).clipped(limits)
        result = env.step(action)
        next_obs = result.observation.to_array(orientation)
        breakdowns.append(result.reward_breakdown)
        terminal = result.termination.is_terminal and result.termination is not TerminationCause.TIMEOUT
        rows.append(
            (
                obs,
                action.normalized(limits),
                result.reward,
                next_obs,
                terminal,
                int(result.termination),
                result.info.h_mm,
                episode_index,
            )
        )
        obs = next_obs
        step_index += 1
        if result.done:
            break
    records = np.array(rows, dtype=record_dtype(env.observation_dim))
    return ScriptedEpisode(records, result.termination, step_index, breakdowns)


@dataclass(eq=False)
class DemoBufferFile:
    """In-memory demonstration buffer with its header fields.

    Attributes
    ----------
    env_config_hash : str
        Hash of the configuration that produced the transitions.
    obs_dim : int
        Observation length of every record.
    records : np.ndarray
        Structured array with ``record_dtype(obs_dim)``.
    success_count, episode_count : int
        Successful and rolled-out episodes during collection.
    skipped_episodes : int
        Placements skipped because no plan was reachable.
    """

    env_config_hash: str
    obs_dim: int
    records: np.ndarray
    success_count: int = 0
    episode_count: int = 0
    skipped_episodes: int = 0
    schema_version: int = DEMO_SCHEMA_VERSION

    @classmethod
    def empty(cls, env_config_hash: str, obs_dim: int) -> DemoBufferFile:
        return cls(env_config_hash, obs_dim, np.zeros(0, dtype=record_dtype(obs_dim)))

    @property
    def transition_count(self) -> int:
        return int(self.records.shape[0])

    @property
    def success_rate(self) -> float:
        return self.success_count / self.episode_count if self.episode_count else 0.0

    def equals(self, other: DemoBufferFile) -> bool:
        return (
            self.env_config_hash == other.env_config_hash
            and self.obs_dim == other.obs_dim
            and self.schema_version == other.schema_version
            and self.success_count == other.success_count
            and self.episode_count == other.episode_count
            and self.skipped_episodes == other.skipped_episodes
            and self.records.dtype == other.records.dtype
            and self.records.tobytes() == other.records.tobytes()
        )

    def manifest(self, seed: int | None = None, extra: dict | None = None) -> dict:
        """Sidecar summary of the buffer."""
        payload = {
            "schema_version": self.schema_version,
            "env_config_hash": self.env_config_hash,
            "seed": seed,
            "obs_dim": self.obs_dim,
            "action_dim": ACTION_DIM,
            "transition_count": self.transition_count,
            "episode_count": self.episode_count,
            "success_count": self.success_count,
            "skipped_episodes": self.skipped_episodes,
            "success_rate": self.success_rate,
        }
        if extra:
            payload.update(extra)
        return payload


def manifest_path_for(path: str | Path) -> Path:
    target = Path(path)
    return target.with_name(target.stem + ".manifest.json")


def load_manifest(path: str | Path) -> dict | None:
    """Sidecar manifest of a buffer file, or None when it is missing."""
    sidecar = manifest_path_for(path)
    if not sidecar.exists():
        return None
    return json.loads(sidecar.read_text(encoding="utf-8"))


def save_demo_buffer(
    buffer: DemoBufferFile, path: str | Path, *, seed: int | None = None, extra: dict | None = None
) -> Path:
    """Write the binary buffer and its JSON manifest next to it."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    header = np.zeros(1, dtype=HEADER_DTYPE)
    header["magic"] = DEMO_MAGIC
    header["schema_version"] = buffer.schema_version
    header["obs_dim"] = buffer.obs_dim
    header["action_dim"] = ACTION_DIM
    header["transition_count"] = buffer.transition_count
    header["success_count"] = buffer.success_count
    header["episode_count"] = buffer.episode_count
    header["skipped_episodes"] = buffer.skipped_episodes
    header["env_config_hash"] = buffer.env_config_hash.encode("ascii")
    records = np.ascontiguousarray(buffer.records, dtype=record_dtype(buffer.obs_dim))
    target.write_bytes(header.tobytes() + records.tobytes())
    manifest_path_for(target).write_text(
        json.dumps(buffer.manifest(seed, extra), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    logger.debug("Saved %d demo transitions to %s", buffer.transition_count, target)
    return target


def load_demo_buffer(
    path: str | Path,
    *,
    expected_hash: str | None = None,
    force: bool = False,
) -> DemoBufferFile:
    """Read a buffer written by ``save_demo_buffer``.

    Raises
    ------
    SchemaMismatch
        On a bad magic, unknown schema version or truncated payload.
    ConfigHashMismatch
        If ``expected_hash`` differs from the stored hash and ``force`` is False.
    """
    data = Path(path).read_bytes()
    if len(data) < HEADER_DTYPE.itemsize:
        raise SchemaMismatch(f"{path}: file too short for a demo buffer header")
    header = np.frombuffer(data[: HEADER_DTYPE.itemsize], dtype=HEADER_DTYPE)[0]
    if bytes(header["magic"]) != DEMO_MAGIC:
        raise SchemaMismatch(f"{path}: not a demo buffer (bad magic)")
    if int(header["schema_version"]) != DEMO_SCHEMA_VERSION:
        raise SchemaMismatch(f"{path}: unsupported schema_version {int(header['schema_version'])}")
    if int(header["action_dim"]) != ACTION_DIM:
        raise SchemaMismatch(f"{path}: action_dim {int(header['action_dim'])} != {ACTION_DIM}")
    obs_dim = int(header["obs_dim"])
    count = int(header["transition_count"])
    dtype = record_dtype(obs_dim)
    payload = data[HEADER_DTYPE.itemsize :]
    if len(payload) != count * dtype.itemsize:
        raise SchemaMismatch(f"{path}: expected {count} records, payload has {len(payload)} bytes")
    stored_hash = bytes(header["env_config_hash"]).decode("ascii")
    if expected_hash is not None and stored_hash != expected_hash:
        if not force:
            raise ConfigHashMismatch(
                f"{path}: collected under config {stored_hash[:12]}, current config is {expected_hash[:12]}"
            )
        logger.warning("Loading %s despite config hash mismatch (forced)", path)
    return DemoBufferFile(
        env_config_hash=stored_hash,
        obs_dim=obs_dim,
        records=np.frombuffer(payload, dtype=dtype).copy(),
        success_count=int(header["success_count"]),
        episode_count=int(header["episode_count"]),
        skipped_episodes=int(header["skipped_episodes"]),
        schema_version=int(header["schema_version"]),
    )


def collect_demos(
    env_factory: Callable[[], GraspEnv],
    plan_source: PlanSource,
    quota_transitions: int,
    *,
    seed: int = 0,
    config: DemoConfig | None = None,
    env_config_hash: str = "",
    report: bool = True,
) -> DemoBufferFile:
    """Collect scripted episodes until at least ``quota_transitions`` are stored.

    Parameters
    ----------
    env_factory : Callable[[], GraspEnv]
        Builds the environment owned by this collector.
    plan_source : PlanSource
        Produces the grasp plan for each placement seed.
    quota_transitions : int
        Stop at the first episode boundary with at least this many transitions.
    seed : int
        Seed of the episode placement sequence.
    config : DemoConfig | None
        ``success_only``, ``literal_schedule`` and ``max_episodes`` switches.
    env_config_hash : str
        Stored in the header for later compatibility checks.
    report : bool
        Mirror the final success rate to stdout.

    Returns
    -------
    DemoBufferFile
        Whole episodes only; unreachable placements are skipped and counted.
    """
    cfg = config or DemoConfig()
    env = env_factory()
    rng = np.random.default_rng(np.random.SeedSequence(int(seed) % 2**64))
    dtype = record_dtype(env.observation_dim)
    chunks: list[np.ndarray] = []
    stored = successes = episodes = skipped = attempts = 0

    while stored < quota_transitions and attempts < cfg.max_episodes:
        attempts += 1
        episode_seed = int(rng.integers(0, 2**63 - 1))
        try:
            plan = plan_source.plan_for(env, episode_seed)
            episode = run_scripted_episode(
                env, plan, episode_seed, episode_index=episodes, literal_schedule=cfg.literal_schedule
            )
        except (NoReachableCandidate, PreGraspInfeasible) as exc:
            skipped += 1
            logger.debug("Skipping placement %d: %s", episode_seed, exc)
            continue
        episodes += 1
        successes += int(episode.success)
        logger.debug(
            "Demo episode %d: %s after %d steps", episodes - 1, episode.termination.label, episode.length
        )
        if cfg.success_only and not episode.success:
            continue
        chunks.append(episode.records)
        stored += episode.length

    if stored < quota_transitions and quota_transitions > 0:
        logger.warning(
            "Demo collection stopped after %d episodes with %d/%d transitions", attempts, stored, quota_transitions
        )
    records = np.concatenate(chunks) if chunks else np.zeros(0, dtype=dtype)
    buffer = DemoBufferFile(env_config_hash, env.observation_dim, records, successes, episodes, skipped)
    if report:
        log_with_fallback(
            logger,
            logging.INFO,
            f"Demonstrations pipeline success rate: {buffer.success_rate:.3f} "
            f"({successes}/{episodes} episodes, {skipped} skipped, {buffer.transition_count} transitions)",
        )
    return buffer
