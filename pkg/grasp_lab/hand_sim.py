"""Quasi-static tabletop grasping simulator.

There are no dynamics. Each step moves the palm, resolves fingertip contacts with the
object by blocking closing fingers at the surface, and applies three object rules:

* push: a fingertip driven into a free object shifts it in the table plane;
* attach: two or more contacts with an opposing pair of normals lock the object to
  the palm, after which it follows the hand rigidly;
* slip: an attached object with fewer than two contacts drops back onto the table.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import gymnasium as gym
import numpy as np
from scipy.spatial.transform import Rotation

from . import reward as reward_mod
from .config import ActionLimits, EnvConfig, RewardConfig, WorkspaceConfig
from .episode import StepInfo, TerminationCause
from .errors import ConfigError, EpisodeFinished, PreGraspInfeasible
from .geometry import Pose, angle_between_vectors, yaw_of
from .hand_model import N_FINGERS, HandModel, fingertip_positions, load_hand_model
from .objects import ObjectModel, get_object_model
from .reward import RewardBreakdown, RewardHistory

if TYPE_CHECKING:
    from .core.protocols import VisualFeatureSource
    from .grasp_prior import GraspPlan

logger = logging.getLogger(__name__)

ACTION_DIM = 15
BASE_OBSERVATION_DIM = 23
_BISECTION_STEPS = 12
_MIN_FRACTION = 2.0**-12
_DEPTH_SLACK = 1e-12

__all__ = [
    "ACTION_DIM",
    "Action",
    "ContactState",
    "GraspEnv",
    "HandState",
    "NpyFeatureSource",
    "ObjectState",
    "Observation",
    "StepInfo",
    "StepResult",
    "TerminationCause",
    "WorkspaceChecker",
    "check_termination",
    "contact_state",
    "contacts_from_points",
    "observation_dim",
    "split_observation",
    "update_object",
]


@dataclass(frozen=True, eq=False)
class HandState:
    """Palm pose plus the nine actuated joint positions (rad)."""

    eef_pose: Pose
    qpos: np.ndarray

    def __post_init__(self) -> None:
        qpos = np.array(self.qpos, dtype=float).reshape(-1)
        qpos.setflags(write=False)
        object.__setattr__(self, "qpos", qpos)


@dataclass(frozen=True, eq=False)
class ObjectState:
    """Object pose and lift bookkeeping.

    Attributes
    ----------
    pose : Pose
        Centroid frame in world coordinates.
    height_above_table : float
        Lift of the centroid above its resting height, mm, never negative.
    attached : bool
        Object rigidly follows the palm.
    grip : Pose | None
        Object pose in the palm frame, set while attached.
    """

    pose: Pose
    height_above_table: float = 0.0
    attached: bool = False
    grip: Pose | None = None


@dataclass(frozen=True, eq=False)
class ContactState:
    """Per-fingertip contact flags with the geometry that produced them.

    Attributes
    ----------
    touching : tuple[bool, ...]
        One flag per fingertip, ordered thumb, index, middle, ring, little.
    distances : np.ndarray
        Sphere-to-surface distances (m), negative when penetrating.
    normals : np.ndarray
        ``(5, 3)`` outward surface normals at the closest points, world frame.
    """

    touching: tuple[bool, ...]
    distances: np.ndarray
    normals: np.ndarray

    @property
    def count(self) -> int:
        return int(sum(self.touching))

    @property
    def tactile(self) -> np.ndarray:
        return np.array(self.touching, dtype=float)

    def has_opposing_pair(self, max_dot: float = -0.5) -> bool:
        """True if two touching fingertips press on surfaces facing apart."""
        idx = [i for i, t in enumerate(self.touching) if t]
        for a in range(len(idx)):
            for b in range(a + 1, len(idx)):
                if float(np.dot(self.normals[idx[a]], self.normals[idx[b]])) <= max_dot:
                    return True
        return False

    @classmethod
    def empty(cls) -> ContactState:
        return cls((False,) * N_FINGERS, np.full(N_FINGERS, np.inf), np.zeros((N_FINGERS, 3)))


@dataclass(frozen=True, eq=False)
class Observation:
    """MDP state: palm pose, joints, tactile flags, frozen reference point, visual slot."""

    eef_pose: Pose
    qpos: np.ndarray
    tactile: np.ndarray
    object_ref_point: np.ndarray
    visual_features: np.ndarray

    def to_array(self, orientation_repr: str = "rpy") -> np.ndarray:
        """Flat vector: position, orientation (RPY or xyzw), qpos, tactile, ref point, visual."""
        if orientation_repr == "rpy":
            orientation = self.eef_pose.rpy
        elif orientation_repr == "quat":
            orientation = np.asarray(self.eef_pose.quat_xyzw)
        else:
            raise ValueError(f"Unknown orientation_repr {orientation_repr!r}")
        return np.concatenate(
            [
                self.eef_pose.position,
                orientation,
                self.qpos,
                self.tactile,
                self.object_ref_point,
                self.visual_features,
            ]
        ).astype(np.float64)


def observation_dim(orientation_repr: str = "rpy", visual_dim: int = 0) -> int:
    return BASE_OBSERVATION_DIM + (1 if orientation_repr == "quat" else 0) + visual_dim


def split_observation(vector, orientation_repr: str = "rpy") -> Observation:
    """Inverse of ``Observation.to_array``."""
    vec = np.asarray(vector, dtype=float)
    n_orient = 4 if orientation_repr == "quat" else 3
    cut = 3 + n_orient
    position = vec[:3]
    pose = Pose(position, vec[3:cut]) if n_orient == 4 else Pose.from_rpy(position, vec[3:cut])
    return Observation(
        eef_pose=pose,
        qpos=vec[cut : cut + 9].copy(),
        tactile=vec[cut + 9 : cut + 14].copy(),
        object_ref_point=vec[cut + 14 : cut + 17].copy(),
        visual_features=vec[cut + 17 :].copy(),
    )


@dataclass(frozen=True, eq=False)
class Action:
    """Per-step command in environment units (m, rad)."""

    eef_pos_offset: np.ndarray
    eef_rpy_offset: np.ndarray
    finger_offsets: np.ndarray

    @classmethod
    def zeros(cls) -> Action:
        return cls(np.zeros(3), np.zeros(3), np.zeros(9))

    @classmethod
    def from_array(cls, values) -> Action:
        arr = np.asarray(values, dtype=float).reshape(-1)
        if arr.shape != (ACTION_DIM,):
            raise ValueError(f"Action must have {ACTION_DIM} components, got {arr.shape}")
        return cls(arr[:3].copy(), arr[3:6].copy(), arr[6:].copy())

    @classmethod
    def from_normalized(cls, values, limits: ActionLimits) -> Action:
        """Scale a policy-space action in ``[-1, 1]`` to environment units."""
        return cls.from_array(np.asarray(values, dtype=float) * limit_vector(limits))

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.eef_pos_offset, self.eef_rpy_offset, self.finger_offsets])

    def normalized(self, limits: ActionLimits) -> np.ndarray:
        return self.to_array() / limit_vector(limits)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.to_array())))

    def clipped(self, limits: ActionLimits) -> Action:
        bound = limit_vector(limits)
        return Action.from_array(np.clip(self.to_array(), -bound, bound))


def limit_vector(limits: ActionLimits) -> np.ndarray:
    """Per-component bound of the 15-dim action."""
    return np.concatenate(
        [np.full(3, limits.eef_pos), np.full(3, limits.eef_rpy), np.full(9, limits.fingers)]
    )


@dataclass(frozen=True, eq=False)
class StepResult:
    observation: Observation
    reward_breakdown: RewardBreakdown
    termination: TerminationCause
    info: StepInfo

    @property
    def reward(self) -> float:
        return self.reward_breakdown.total

    @property
    def done(self) -> bool:
        return self.termination.is_terminal


class WorkspaceChecker:
    """Analytic reachability test: a position box plus an approach-direction cone.

    Parameters
    ----------
    config : WorkspaceConfig
        Box center, half extents and cone half-angle.
    """

    def __init__(self, config: WorkspaceConfig | None = None):
        self.config = config or WorkspaceConfig()
        self._center = np.asarray(self.config.center, dtype=float)
        self._half = np.asarray(self.config.half_extents, dtype=float)
        self._cone = np.deg2rad(self.config.cone_half_angle_deg)

    def position_ok(self, position) -> bool:
        return bool(np.all(np.abs(np.asarray(position, dtype=float) - self._center) <= self._half))

    def orientation_ok(self, pose: Pose, reference_approach=None) -> bool:
        if reference_approach is None:
            return True
        return angle_between_vectors(pose.approach_axis, reference_approach) <= self._cone + 1e-12

    def __call__(self, pose: Pose, reference_approach=None) -> bool:
        """True iff the pose is finite, inside the box and inside the cone.

        Without ``reference_approach`` the pose's own approach is the reference, so only
        the box is tested.
        """
        if not (np.all(np.isfinite(pose.position)) and np.all(np.isfinite(pose.quat_xyzw))):
            return False
        return self.position_ok(pose.position) and self.orientation_ok(pose, reference_approach)


class NpyFeatureSource:
    """Visual features read from a ``frames x V`` ``.npy`` array.

    Steps beyond the last frame repeat the last row.
    """

    def __init__(self, path: str | Path):
        array = np.load(Path(path), allow_pickle=False)
        if array.ndim != 2:
            raise ConfigError(f"Visual feature file {path} must be 2-D (frames x V), got {array.shape}")
        self._frames = np.asarray(array, dtype=np.float64)

    @property
    def dim(self) -> int:
        return int(self._frames.shape[1])

    def features(self, step_index: int) -> np.ndarray:
        row = min(max(step_index, 0), self._frames.shape[0] - 1)
        return self._frames[row].copy()


def contacts_from_points(
    tips_world: np.ndarray,
    radius: float,
    object_model: ObjectModel,
    object_pose: Pose,
    tolerance: float,
) -> ContactState:
    """Contact flags for fingertip spheres centered at ``tips_world``."""
    sdf, normals = object_model.world_distance_and_normal(object_pose, tips_world)
    distances = sdf - radius
    touching = tuple(bool(d <= tolerance) for d in distances)
    return ContactState(touching, distances, normals)


def contact_state(
    hand_model: HandModel,
    hand_state: HandState,
    object_model: ObjectModel,
    object_state: ObjectState,
    tolerance: float = 0.002,
) -> ContactState:
    """Touching flag per fingertip: sphere-to-surface distance at most ``tolerance``."""
    tips = fingertip_positions(hand_model, hand_state)
    return contacts_from_points(tips, hand_model.fingertip_radius, object_model, object_state.pose, tolerance)


def height_mm(object_model: ObjectModel, pose: Pose) -> float:
    return max(0.0, (float(pose.position[2]) - object_model.rest_height) * 1000.0)


def resting_state(object_model: ObjectModel, xy, yaw: float) -> ObjectState:
    """Object standing upright on the table."""
    position = np.array([float(xy[0]), float(xy[1]), object_model.rest_height])
    return ObjectState(Pose.from_rpy(position, [0.0, 0.0, yaw]), 0.0, False, None)


def carry_object(object_model: ObjectModel, object_state: ObjectState, hand_pose: Pose) -> ObjectState:
    """Move an attached object with the palm, keeping it above the table."""
    if not object_state.attached or object_state.grip is None:
        return object_state
    pose = hand_pose.compose(object_state.grip)
    grip = object_state.grip
    if pose.position[2] < object_model.rest_height:
        pose = Pose([pose.position[0], pose.position[1], object_model.rest_height], pose.quat_xyzw)
        grip = hand_pose.inverse().compose(pose)
    return ObjectState(pose, height_mm(object_model, pose), True, grip)


def push_object(object_model: ObjectModel, object_state: ObjectState, shift_xy) -> ObjectState:
    """Translate a free object in the table plane."""
    shift = np.array([float(shift_xy[0]), float(shift_xy[1]), 0.0])
    pose = object_state.pose.translated(shift)
    return ObjectState(pose, height_mm(object_model, pose), False, None)


def update_object(
    object_model: ObjectModel,
    object_state: ObjectState,
    contacts: ContactState,
    prev_contacts: ContactState,
    hand_pose: Pose,
    *,
    attach_normal_dot: float = -0.5,
) -> ObjectState:
    """Apply the attach and slip rules after contacts were recomputed.

    A free object attaches when at least two fingertips touch it and some pair of them
    presses on opposing surfaces. An attached object with fewer than two contacts falls
    back to the table, keeping its x/y position and heading.
    """
    if object_state.attached:
        if contacts.count >= 2:
            return object_state
        logger.debug("Object slipped: contacts %d -> %d", prev_contacts.count, contacts.count)
        pose = object_state.pose
        return resting_state(object_model, pose.position[:2], yaw_of(pose.rotation_matrix))
    if contacts.count >= 2 and contacts.has_opposing_pair(attach_normal_dot):
        grip = hand_pose.inverse().compose(object_state.pose)
        return ObjectState(object_state.pose, object_state.height_above_table, True, grip)
    return object_state


def check_termination(info: StepInfo, config: EnvConfig | None = None) -> TerminationCause:
    """Outcome of a step, checked in the order Success, ObjectDisplaced, IkInfeasible, Timeout."""
    cfg = config or EnvConfig()
    if info.attached and info.h_mm >= cfg.success_height_mm - 1e-6:
        return TerminationCause.SUCCESS
    if info.displacement_m > cfg.d_max:
        return TerminationCause.OBJECT_DISPLACED
    if info.ik_failed:
        return TerminationCause.IK_INFEASIBLE
    if info.step_index >= cfg.t_max:
        return TerminationCause.TIMEOUT
    return TerminationCause.RUNNING


class GraspEnv:
    """Single-object tabletop environment driven by 15-dim cartesian/joint offsets.

    Parameters
    ----------
    config : EnvConfig | None
        Environment settings; defaults when None.
    hand_model : HandModel | None
        Hand description; loaded from ``config.hand_path`` (or the bundled file) when None.
    object_model : ObjectModel | None
        Object to grasp; looked up by ``config.object_id`` when None.
    reward_config : RewardConfig | None
        Reward switches.
    visual_source : VisualFeatureSource | None
        Per-frame features; read from ``config.visual_features_path`` when None.

    Notes
    -----
    One instance is owned by one caller at a time. Nothing is shared between instances,
    so separate instances may run on separate threads or processes.
    """

    def __init__(
        self,
        config: EnvConfig | None = None,
        *,
        hand_model: HandModel | None = None,
        object_model: ObjectModel | None = None,
        reward_config: RewardConfig | None = None,
        visual_source: VisualFeatureSource | None = None,
    ):
        self.config = config or EnvConfig()
        self.hand_model = hand_model or load_hand_model(self.config.hand_path)
        self.object_model = object_model or get_object_model(self.config.object_id)
        self.reward_config = reward_config or RewardConfig()
        if visual_source is None and self.config.visual_features_path:
            visual_source = NpyFeatureSource(self.config.visual_features_path)
        self.visual_source = visual_source
        self.workspace = WorkspaceChecker(self.config.workspace)
        self._limits = limit_vector(self.config.action_limits)
        self._groups = self.hand_model.actuator_groups()

        obs_dim = self.observation_dim
        self.observation_space = gym.spaces.Box(-np.inf, np.inf, shape=(obs_dim,), dtype=np.float64)
        self.action_space = gym.spaces.Box(-self._limits, self._limits, dtype=np.float64)

        self.episode_id = -1
        self._plan: GraspPlan | None = None
        self._hand: HandState | None = None
        self._object: ObjectState | None = None
        self._contacts = ContactState.empty()
        self._info: StepInfo | None = None
        self._history = RewardHistory()
        self._termination = TerminationCause.RUNNING
        self._initial_xy = np.zeros(2)

    @property
    def visual_dim(self) -> int:
        return 0 if self.visual_source is None else int(self.visual_source.dim)

    @property
    def observation_dim(self) -> int:
        return observation_dim(self.config.orientation_repr, self.visual_dim)

    @property
    def action_dim(self) -> int:
        return ACTION_DIM

    @property
    def hand_state(self) -> HandState:
        self._require_episode()
        return self._hand  # type: ignore[return-value]

    @property
    def object_state(self) -> ObjectState:
        self._require_episode()
        return self._object  # type: ignore[return-value]

    @property
    def contacts(self) -> ContactState:
        return self._contacts

    @property
    def info(self) -> StepInfo:
        self._require_episode()
        return self._info  # type: ignore[return-value]

    @property
    def plan(self) -> GraspPlan:
        self._require_episode()
        return self._plan  # type: ignore[return-value]

    @property
    def termination(self) -> TerminationCause:
        return self._termination

    @property
    def reward_history(self) -> RewardHistory:
        return self._history

    def _require_episode(self) -> None:
        if self._plan is None:
            raise EpisodeFinished("No active episode; call reset() first")

    def sample_object_state(self, seed: int) -> ObjectState:
        """Deterministic object placement for a seed: uniform position and yaw."""
        rng = np.random.default_rng(np.random.SeedSequence(int(seed) % 2**64))
        placement = self.config.placement
        center = np.asarray(placement.center, dtype=float)
        half = np.asarray(placement.half_extents, dtype=float)
        xy = rng.uniform(center - half, center + half)
        yaw = rng.uniform(0.0, 2.0 * np.pi) if placement.randomize_yaw else 0.0
        return resting_state(self.object_model, xy, yaw)

    def workspace_check(self, pose: Pose) -> bool:
        """Workspace test against the active plan's approach direction."""
        reference = None if self._plan is None else self._plan.approach_dir
        return self.workspace(pose, reference)

    def reset(self, grasp_plan: GraspPlan, seed: int) -> Observation:
        """Place the object for ``seed`` and put the open hand at the plan's pre-grasp pose.

        Raises
        ------
        PreGraspInfeasible
            If the pre-grasp pose fails the workspace check.
        """
        if not self.workspace(grasp_plan.pre_grasp_pose, grasp_plan.approach_dir):
            raise PreGraspInfeasible(
                f"Pre-grasp position {np.round(grasp_plan.pre_grasp_pose.position, 4).tolist()} is unreachable"
            )
        self.episode_id += 1
        self._plan = grasp_plan
        self._object = self.sample_object_state(seed)
        self._initial_xy = np.array(self._object.pose.position[:2])
        self._hand = HandState(grasp_plan.pre_grasp_pose, self.hand_model.qpos_open)
        self._contacts = self._compute_contacts(self._hand, self._object)
        self._termination = TerminationCause.RUNNING
        self._info = self._make_info(0, ik_failed=False, ever=self._contacts.count >= 2)
        self._history = RewardHistory.from_info(self._info)
        logger.debug("Episode %d reset with seed %s", self.episode_id, seed)
        return self.observe()

    def observe(self) -> Observation:
        self._require_episode()
        step = 0 if self._info is None else self._info.step_index
        visual = np.zeros(0) if self.visual_source is None else self.visual_source.features(step)
        return Observation(
            eef_pose=self._hand.eef_pose,  # type: ignore[union-attr]
            qpos=np.array(self._hand.qpos),  # type: ignore[union-attr]
            tactile=self._contacts.tactile,
            object_ref_point=np.array(self._plan.object_ref_point, dtype=float),  # type: ignore[union-attr]
            visual_features=np.asarray(visual, dtype=float),
        )

    def step(self, action: Action | np.ndarray) -> StepResult:
        """Advance one quasi-static step.

        Raises
        ------
        EpisodeFinished
            If no episode is running.
        ValueError
            If the action is not finite.
        """
        self._require_episode()
        if self._termination.is_terminal:
            raise EpisodeFinished(f"Episode {self.episode_id} already ended with {self._termination.label}")
        act = action if isinstance(action, Action) else Action.from_array(action)
        if not act.is_finite():
            raise ValueError("Action contains non-finite values")
        act = act.clipped(self.config.action_limits)

        hand: HandState = self._hand  # type: ignore[assignment]
        obj: ObjectState = self._object  # type: ignore[assignment]
        prev_info: StepInfo = self._info  # type: ignore[assignment]
        prev_contacts = self._contacts

        if np.any(act.eef_rpy_offset):
            quat = (hand.eef_pose.rotation * Rotation.from_euler("xyz", act.eef_rpy_offset)).as_quat()
        else:
            quat = hand.eef_pose.quat_xyzw
        target = Pose(hand.eef_pose.position + act.eef_pos_offset, quat)
        ik_failed = not self.workspace_check(target)
        if not ik_failed:
            if obj.attached:
                obj = carry_object(self.object_model, obj, target)
            else:
                shift = self._push_shift(hand, target, obj)
                if shift is not None:
                    obj = push_object(self.object_model, obj, shift)
            qpos = self._move_fingers(target, hand.qpos, act.finger_offsets, obj)
            hand = HandState(target, qpos)
            contacts = self._compute_contacts(hand, obj)
            obj = update_object(
                self.object_model,
                obj,
                contacts,
                prev_contacts,
                target,
                attach_normal_dot=self.config.attach_normal_dot,
            )
            self._hand, self._object, self._contacts = hand, obj, contacts

        ever = self._history.ever_two_contacts or self._contacts.count >= 2
        info = self._make_info(prev_info.step_index + 1, ik_failed=ik_failed, ever=ever)
        termination = check_termination(info, self.config)
        breakdown, self._history = reward_mod.compute(
            prev_info, info, termination, self._history, self.reward_config
        )
        self._info = info
        self._termination = termination
        if termination.is_terminal:
            logger.debug(
                "Episode %d ended at step %d: %s", self.episode_id, info.step_index, termination.label
            )
        return StepResult(self.observe(), breakdown, termination, info)

    def _compute_contacts(self, hand: HandState, obj: ObjectState) -> ContactState:
        return contact_state(self.hand_model, hand, self.object_model, obj, self.config.contact_tolerance)

    def _make_info(self, step_index: int, *, ik_failed: bool, ever: bool) -> StepInfo:
        obj: ObjectState = self._object  # type: ignore[assignment]
        hand: HandState = self._hand  # type: ignore[assignment]
        plan: GraspPlan = self._plan  # type: ignore[assignment]
        return StepInfo(
            episode_id=self.episode_id,
            step_index=step_index,
            f_count=self._contacts.count,
            d_cm=reward_mod.planar_distance_cm(hand.eef_pose, plan.object_ref_point),
            h_mm=obj.height_above_table,
            ever_two_contacts=ever,
            attached=obj.attached,
            displacement_m=float(np.linalg.norm(obj.pose.position[:2] - self._initial_xy)),
            ik_failed=ik_failed,
        )

    def _penetration(self, tips_world: np.ndarray, obj: ObjectState) -> tuple[np.ndarray, np.ndarray]:
        sdf, normals = self.object_model.world_distance_and_normal(obj.pose, tips_world)
        return np.maximum(self.hand_model.fingertip_radius - sdf, 0.0), normals

    def _push_shift(self, hand: HandState, target: Pose, obj: ObjectState) -> np.ndarray | None:
        """Planar shift of a free object caused by moving the palm to ``target``.

        Only fingertips whose penetration grew push. When several penetrating contacts
        push at once, the object is pushed by the deepest penetration alone: against the
        outward surface normal at that fingertip, by its depth.
        """
        tips_local = self.hand_model.tips_local(hand.qpos)
        before, _ = self._penetration(hand.eef_pose.transform_point(tips_local), obj)
        after, normals = self._penetration(target.transform_point(tips_local), obj)
        pushing = np.flatnonzero(after > before + _DEPTH_SLACK)
        if pushing.size == 0:
            return None
        deepest = pushing[np.argmax(after[pushing])]
        return -normals[deepest, :2] * after[deepest]

    def _move_fingers(self, palm: Pose, qpos: np.ndarray, offsets: np.ndarray, obj: ObjectState) -> np.ndarray:
        """Apply joint offsets, stopping each actuator group at first contact.

        A group may move as long as none of its fingertips penetrates deeper than before
        the move; otherwise the largest admissible fraction is found by bisection.
        """
        start = np.asarray(qpos, dtype=float)
        target = self.hand_model.clamp(start + offsets)
        result = start.copy()
        radius = self.hand_model.fingertip_radius
        for actuators, fingers in self._groups:
            idx = list(actuators)
            delta = target[idx] - start[idx]
            if not np.any(delta):
                continue

            def depths(fraction: float, idx=idx, delta=delta, fingers=fingers) -> np.ndarray:
                q = start.copy()
                q[idx] = start[idx] + fraction * delta
                tips = np.stack([self.hand_model.fingers[f].tip_local(q) for f in fingers])
                sdf = self.object_model.signed_distance(obj.pose.inverse_transform_point(palm.transform_point(tips)))
                return np.maximum(radius - sdf, 0.0)

            base = depths(0.0) + _DEPTH_SLACK
            if np.all(depths(1.0) <= base):
                result[idx] = target[idx]
                continue
            # Already pressing on the surface: the usual case while gripping.
            if not np.all(depths(_MIN_FRACTION) <= base):
                continue
            lo, hi = _MIN_FRACTION, 1.0
            for _ in range(_BISECTION_STEPS):
                mid = 0.5 * (lo + hi)
                if np.all(depths(mid) <= base):
                    lo = mid
                else:
                    hi = mid
            result[idx] = start[idx] + lo * delta
        return self.hand_model.clamp(result)
