"""Dataclass configuration objects, YAML loading and config hashing.

Every config exposes ``to_dict()``; ``config_hash`` is the SHA-256 of its canonical
JSON. Loading is strict: unknown keys and ill-typed values raise ``ConfigError`` so a
typo in an experiment file never silently falls back to a default.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ._paths import default_env_config_path, default_experiment_config_path
from .errors import ConfigError

logger = logging.getLogger(__name__)

GRASP_MODES = ("lateral", "topdown")
ALGORITHMS = ("gpayn", "sac", "oerld")
ORIENTATION_REPRS = ("rpy", "quat")
REFERENCE_POINT_MODES = ("auto", "centroid", "median")


@dataclass
class WorkspaceConfig:
    """Analytic reachability region standing in for an IK solver.

    Attributes
    ----------
    center : tuple[float, float, float]
        Box center (m).
    half_extents : tuple[float, float, float]
        Box half sizes (m); defaults give a 0.4 x 0.6 x 0.4 m box above the table.
    cone_half_angle_deg : float
        Allowed deviation of the hand approach axis from the reference approach.
    """

    center: tuple[float, float, float] = (0.0, 0.0, 0.2)
    half_extents: tuple[float, float, float] = (0.2, 0.3, 0.2)
    cone_half_angle_deg: float = 60.0

    def __post_init__(self) -> None:
        if any(h < 0 for h in self.half_extents):
            raise ConfigError("workspace.half_extents must be non-negative")
        if not 0.0 <= self.cone_half_angle_deg <= 180.0:
            raise ConfigError("workspace.cone_half_angle_deg must lie in [0, 180]")


@dataclass
class PlacementConfig:
    """Table region where objects are placed at reset."""

    center: tuple[float, float] = (0.0, 0.0)
    half_extents: tuple[float, float] = (0.08, 0.12)
    randomize_yaw: bool = True

    def __post_init__(self) -> None:
        if any(h < 0 for h in self.half_extents):
            raise ConfigError("placement.half_extents must be non-negative")


@dataclass
class ActionLimits:
    """Per-step action bounds (symmetric)."""

    eef_pos: float = 0.01
    eef_rpy: float = 0.05
    fingers: float = 0.1

    def __post_init__(self) -> None:
        if min(self.eef_pos, self.eef_rpy, self.fingers) <= 0:
            raise ConfigError("action_limits must be positive")


@dataclass
class EnvConfig:
    """Tabletop environment settings.

    Attributes
    ----------
    object_id : str
        Catalogue key of the object to grasp.
    hand_path : str | None
        Hand description YAML; bundled default when None.
    t_max : int
        Step index at which an episode times out.
    d_max : float
        Planar object displacement (m) beyond which the episode fails.
    contact_tolerance : float
        Fingertip-surface distance (m) counted as touching.
    attach_normal_dot : float
        Two contacts grip when their normals' dot product is at most this value.
    success_height_mm : float
        Lift (mm) that ends the episode in success while attached.
    orientation_repr : str
        Observation orientation encoding, ``"rpy"`` (23-dim base) or ``"quat"`` (24).
    visual_features_path : str | None
        Optional ``.npy`` of per-frame visual features appended to observations.
    """

    object_id: str = "sugar_box"
    hand_path: str | None = None
    t_max: int = 1000
    d_max: float = 0.15
    contact_tolerance: float = 0.002
    attach_normal_dot: float = -0.5
    success_height_mm: float = 100.0
    orientation_repr: str = "rpy"
    visual_features_path: str | None = None
    workspace: WorkspaceConfig = field(default_factory=WorkspaceConfig)
    placement: PlacementConfig = field(default_factory=PlacementConfig)
    action_limits: ActionLimits = field(default_factory=ActionLimits)

    def __post_init__(self) -> None:
        if self.t_max <= 0:
            raise ConfigError("t_max must be positive")
        if self.d_max <= 0:
            raise ConfigError("d_max must be positive")
        if self.contact_tolerance < 0:
            raise ConfigError("contact_tolerance must be non-negative")
        if self.orientation_repr not in ORIENTATION_REPRS:
            raise ConfigError(f"orientation_repr must be one of {ORIENTATION_REPRS}")

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass
class RewardConfig:
    """Reward shaping switches.

    Attributes
    ----------
    reward_retreat : bool
        When True ``r_dist = d(t+1) - d(t)`` (rewards moving away); the default rewards
        approaching the reference point.
    """

    reward_retreat: bool = False

    @property
    def dist_sign(self) -> float:
        return 1.0 if self.reward_retreat else -1.0

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass
class PlannerConfig:
    """Grasp-pose oracle and selection settings.

    Attributes
    ----------
    mode : str
        ``"lateral"`` (side approaches) or ``"topdown"`` (approach along -z).
    noise_std : float
        Gaussian std applied to candidate position (m) and orientation (rad).
    pregrasp_distance : float
        Retreat (m) along the approach axis for the pre-grasp pose.
    hand_rotation_deg : float
        Roll about the approach applied to top-down poses before execution.
    hand_rotation_sign : int
        Sign (+1 or -1) of that roll.
    reference_point : str
        ``"auto"`` follows the mode (lateral uses the centroid, top-down the median of
        surface samples); ``"centroid"`` or ``"median"`` force one.
    min_standoff, standoff_margin, width_clearance : float
        Palm standoff is ``max(min_standoff, depth / 2 + standoff_margin)``; a candidate
        is emitted only if ``width / 2 + fingertip_radius + width_clearance`` fits inside
        the open hand.
    """

    mode: str = "lateral"
    noise_std: float = 0.0
    pregrasp_distance: float = 0.05
    hand_rotation_deg: float = 45.0
    hand_rotation_sign: int = 1
    reference_point: str = "auto"
    min_standoff: float = 0.075
    standoff_margin: float = 0.015
    width_clearance: float = 0.01

    def __post_init__(self) -> None:
        if self.mode not in GRASP_MODES:
            raise ConfigError(f"planner.mode must be one of {GRASP_MODES}")
        if self.noise_std < 0:
            raise ConfigError("planner.noise_std must be non-negative")
        if self.hand_rotation_sign not in (-1, 1):
            raise ConfigError("planner.hand_rotation_sign must be +1 or -1")
        if self.reference_point not in REFERENCE_POINT_MODES:
            raise ConfigError(f"planner.reference_point must be one of {REFERENCE_POINT_MODES}")

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass
class DemoConfig:
    """Scripted demonstration collection.

    Attributes
    ----------
    quota_transitions : int
        Collection stops at the first episode boundary with at least this many stored.
    success_only : bool
        Keep only transitions of successful episodes.
    literal_schedule : bool
        Use ``(k - 500) / 500`` instead of ``(k - 100) / 500`` as closing progress.
    max_episodes : int
        Hard stop on attempted episodes.
    """

    quota_transitions: int = 20_000
    success_only: bool = False
    literal_schedule: bool = False
    max_episodes: int = 10_000

    def __post_init__(self) -> None:
        if self.quota_transitions < 0:
            raise ConfigError("demo.quota_transitions must be non-negative")
        if self.max_episodes <= 0:
            raise ConfigError("demo.max_episodes must be positive")

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass
class SacConfig:
    """Soft actor-critic hyperparameters (desk-scale defaults).

    Attributes
    ----------
    gamma, tau : float
        Discount and Polyak coefficient.
    batch_size : int
        Replay batch per gradient pass.
    entropy_target : float | None
        Target entropy; ``-action_dim`` when None.
    train_freq, gradient_steps, target_update_interval : int
        One round of ``gradient_steps`` passes every ``train_freq`` env steps; targets
        trail every ``target_update_interval`` passes.
    total_timesteps : int
        Environment steps per run, counted after the warm-up.
    learning_starts : int
        Warm-up size: before the clock starts the buffer is filled with policy rollouts to
        ``max(batch_size, learning_starts)`` transitions. Warm-up steps count neither toward
        ``total_timesteps`` nor the training cadence.
    learning_rate : float
        Adam step size for actor, critics and temperature.
    hidden_sizes : tuple[int, ...]
        Hidden widths shared by all networks.
    buffer_capacity, demo_retention : int
        Replay capacity and the number of leading demo slots never evicted.
    init_alpha, learn_alpha :
        Initial temperature and whether it is tuned.
    demo_batch_size, bc_weight, bc_decay_steps :
        Behavior-cloning settings; ``bc_decay_steps > 0`` decays the weight linearly
        to zero over that many env steps.
    eval_interval, eval_episodes, checkpoint_interval : int
        Evaluation and checkpoint cadence in env steps (0 disables).
    """

    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 256
    entropy_target: float | None = None
    train_freq: int = 10
    gradient_steps: int = 1
    target_update_interval: int = 1
    total_timesteps: int = 100_000
    learning_starts: int = 0
    learning_rate: float = 3e-4
    hidden_sizes: tuple[int, ...] = (128, 128)
    buffer_capacity: int = 1_000_000
    demo_retention: int = 0
    init_alpha: float = 1.0
    learn_alpha: bool = True
    demo_batch_size: int = 32
    bc_weight: float = 1.0
    bc_decay_steps: int = 0
    eval_interval: int = 2000
    eval_episodes: int = 20
    checkpoint_interval: int = 0

    def __post_init__(self) -> None:
        positive = {
            "batch_size": self.batch_size,
            "train_freq": self.train_freq,
            "gradient_steps": self.gradient_steps,
            "target_update_interval": self.target_update_interval,
            "buffer_capacity": self.buffer_capacity,
            "demo_batch_size": self.demo_batch_size,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ConfigError(f"sac.{name} must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("sac.gamma must lie in (0, 1]")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError("sac.tau must lie in (0, 1]")
        if self.learning_rate <= 0 or self.init_alpha <= 0:
            raise ConfigError("sac.learning_rate and sac.init_alpha must be positive")
        if self.total_timesteps < 0:
            raise ConfigError("sac.total_timesteps must be non-negative")
        if self.learning_starts < 0:
            raise ConfigError("sac.learning_starts must be non-negative")
        if self.warmup_size > self.buffer_capacity:
            raise ConfigError("sac.batch_size and sac.learning_starts must not exceed sac.buffer_capacity")
        if not self.hidden_sizes or any(h <= 0 for h in self.hidden_sizes):
            raise ConfigError("sac.hidden_sizes must be non-empty and positive")
        if not 0 <= self.demo_retention < self.buffer_capacity:
            raise ConfigError("sac.demo_retention must lie in [0, buffer_capacity)")

    @property
    def warmup_size(self) -> int:
        return max(self.batch_size, self.learning_starts)

    def resolved_entropy_target(self, action_dim: int) -> float:
        return float(-action_dim) if self.entropy_target is None else float(self.entropy_target)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass
class ExperimentConfig:
    """One experiment cell: object, grasp mode, algorithm and seeds.

    Attributes
    ----------
    algorithm : str
        ``gpayn``, ``sac`` or ``oerld``.
    seeds : tuple[int, ...]
        Independent training runs.
    out_dir : str
        Root directory for artifacts.
    demo_path : str | None
        Demonstration buffer for demo-based algorithms.
    eval_seed : int
        Seed of the fresh evaluation episodes used by ``eval``.
    """

    algorithm: str = "gpayn"
    seeds: tuple[int, ...] = (0, 1, 2)
    out_dir: str = "runs"
    demo_path: str | None = None
    eval_seed: int = 12345
    env: EnvConfig = field(default_factory=EnvConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    demo: DemoConfig = field(default_factory=DemoConfig)
    sac: SacConfig = field(default_factory=SacConfig)

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}")
        if not self.seeds:
            raise ConfigError("seeds must list at least one seed")

    @property
    def object_id(self) -> str:
        return self.env.object_id

    @property
    def grasp_mode(self) -> str:
        return self.planner.mode

    @property
    def noise_std(self) -> float:
        return self.planner.noise_std

    def env_hash(self) -> str:
        return environment_hash(self.env, self.reward, self.planner)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def config_hash(obj: Any) -> str:
    """SHA-256 hex digest of the canonical JSON of a config or mapping."""
    payload = obj.to_dict() if hasattr(obj, "to_dict") else obj
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=list)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def environment_hash(
    env: EnvConfig,
    reward: RewardConfig | None = None,
    planner: PlannerConfig | None = None,
) -> str:
    """Hash of everything that shapes stored transitions: env, reward and planner."""
    return config_hash(
        {
            "env": env.to_dict(),
            "reward": (reward or RewardConfig()).to_dict(),
            "planner": (planner or PlannerConfig()).to_dict(),
        }
    )


def _coerce(value: Any, hint: Any, where: str) -> Any:
    origin = typing.get_origin(hint)
    if origin in (typing.Union, types.UnionType):
        options = typing.get_args(hint)
        if value is None and type(None) in options:
            return None
        errors = []
        for option in options:
            if option is type(None):
                continue
            try:
                return _coerce(value, option, where)
            except ConfigError as exc:
                errors.append(str(exc))
        raise ConfigError("; ".join(errors) or f"{where}: invalid value {value!r}")
    if dataclasses.is_dataclass(hint):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a mapping, got {type(value).__name__}")
        return build_dataclass(hint, value, where)
    if origin is tuple:
        args = typing.get_args(hint)
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list, got {type(value).__name__}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(v, args[0], f"{where}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(f"{where}: expected {len(args)} values, got {len(value)}")
        return tuple(_coerce(v, a, f"{where}[{i}]") for i, (v, a) in enumerate(zip(value, args)))
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported field type {hint!r}")


def build_dataclass(cls: type, data: dict[str, Any], where: str = "") -> Any:
    """Build a (nested) config dataclass from a plain mapping, rejecting unknown keys."""
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        prefix = f"{where}." if where else ""
        raise ConfigError(f"Unknown config keys: {', '.join(prefix + k for k in unknown)}")
    kwargs = {key: _coerce(value, hints[key], f"{where}.{key}" if where else key) for key, value in data.items()}
    return cls(**kwargs)


def _read_yaml(path: Path) -> dict[str, Any]:
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"Config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"Config file is not valid YAML: {path}: {exc}") from exc
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"Config file {path} must contain a mapping")
    return raw


def load_env_config(path: str | Path | None = None) -> EnvConfig:
    """Load an ``EnvConfig`` from YAML (bundled default when ``path`` is None)."""
    resolved = Path(path) if path is not None else default_env_config_path()
    return build_dataclass(EnvConfig, _read_yaml(resolved))


def load_experiment_config(path: str | Path | None = None) -> ExperimentConfig:
    """Load an ``ExperimentConfig`` from YAML (bundled default when ``path`` is None).

    Raises
    ------
    ConfigError
        If the file is missing, not YAML, has unknown keys or ill-typed values.
    """
    resolved = Path(path) if path is not None else default_experiment_config_path()
    config = build_dataclass(ExperimentConfig, _read_yaml(resolved))
    logger.debug("Loaded experiment config %s (hash %s)", resolved, config_hash(config)[:12])
    return config


def dump_config(config: Any, path: str | Path) -> Path:
    """Write a config as YAML next to run artifacts."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(yaml.safe_dump(_plain(config.to_dict()), sort_keys=True), encoding="utf-8")
    return target


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value
