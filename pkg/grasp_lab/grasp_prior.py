"""Grasp poses that seed every episode.

A ground-truth oracle proposes candidates from the object pose: side approaches
(``lateral``) or approaches from above (``topdown``). Top-down candidates come in a
parallel-gripper convention rolled 45 degrees about the approach axis and are rotated
back into the hand convention before use. Candidates are then checked for reachability
in decreasing-confidence order, and the first reachable one becomes the episode plan
together with its pre-grasp pose and the frozen object reference point.
"""

from __future__ import annotations

import enum
import json
import logging
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .config import PlannerConfig
from .errors import NoReachableCandidate
from .geometry import Pose, frame_from_axes
from .hand_model import HandModel, load_hand_model
from .hand_sim import ObjectState, WorkspaceChecker
from .objects import ObjectModel

logger = logging.getLogger(__name__)

PREGRASP_DISTANCE = 0.05
_N_CYLINDER_SIDES = 8
_N_CYLINDER_TOP = 4


class GraspSource(str, enum.Enum):
    ORACLE_LATERAL = "lateral"
    ORACLE_TOP_DOWN = "topdown"


@dataclass(frozen=True, eq=False)
class GraspCandidate:
    pose: Pose
    confidence: float
    source: GraspSource

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")


@dataclass(frozen=True, eq=False)
class GraspPlan:
    """Grasp and pre-grasp poses plus the episode's frozen reference point.

    Attributes
    ----------
    grasp_pose : Pose
        Palm pose at which closing starts.
    pre_grasp_pose : Pose
        Grasp pose retreated along the approach axis; the episode start.
    object_ref_point : np.ndarray
        Object point (m, world) observed for the whole episode.
    approach_dir : np.ndarray
        Unit palm-to-object direction.
    source : GraspSource
        Generator of the underlying candidate.
    confidence : float
        Candidate confidence.
    """

    grasp_pose: Pose
    pre_grasp_pose: Pose
    object_ref_point: np.ndarray
    approach_dir: np.ndarray
    source: GraspSource = GraspSource.ORACLE_LATERAL
    confidence: float = 1.0

    def __post_init__(self) -> None:
        ref = np.array(self.object_ref_point, dtype=float).reshape(3)
        approach = np.array(self.approach_dir, dtype=float).reshape(3)
        ref.setflags(write=False)
        approach.setflags(write=False)
        object.__setattr__(self, "object_ref_point", ref)
        object.__setattr__(self, "approach_dir", approach)
        object.__setattr__(self, "source", GraspSource(self.source))

    def to_record(self) -> dict:
        """Plain mapping suitable for one JSON line."""
        return {
            "grasp_pose": self.grasp_pose.to_list(),
            "pre_grasp_pose": self.pre_grasp_pose.to_list(),
            "object_ref_point": self.object_ref_point.tolist(),
            "approach_dir": self.approach_dir.tolist(),
            "source": self.source.value,
            "confidence": float(self.confidence),
        }

    @classmethod
    def from_record(cls, record: dict) -> GraspPlan:
        return cls(
            grasp_pose=Pose.from_list(record["grasp_pose"]),
            pre_grasp_pose=Pose.from_list(record["pre_grasp_pose"]),
            object_ref_point=np.asarray(record["object_ref_point"], dtype=float),
            approach_dir=np.asarray(record["approach_dir"], dtype=float),
            source=GraspSource(record.get("source", GraspSource.ORACLE_LATERAL.value)),
            confidence=float(record.get("confidence", 1.0)),
        )


def save_plans_jsonl(plans: Iterable[GraspPlan], path: str | Path) -> Path:
    """Write plans one JSON record per line for exact episode replay."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(plan.to_record(), sort_keys=True) for plan in plans]
    target.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return target


def load_plans_jsonl(path: str | Path) -> list[GraspPlan]:
    text = Path(path).read_text(encoding="utf-8")
    return [GraspPlan.from_record(json.loads(line)) for line in text.splitlines() if line.strip()]


def _open_half_span(hand_model: HandModel) -> float:
    """Half distance between thumb and finger tips along the closing axis when open."""
    return float(np.min(np.abs(hand_model.tips_local(np.asarray(hand_model.qpos_open))[:, 0])))


def _approaches(
    object_model: ObjectModel, object_state: ObjectState, mode: GraspSource
) -> list[tuple[np.ndarray, np.ndarray, float, float]]:
    """Nominal ``(approach, closing axis, grasp half-width, depth along approach)`` tuples."""
    rot = object_state.pose.rotation_matrix
    half = object_model.half_extents
    out: list[tuple[np.ndarray, np.ndarray, float, float]] = []
    if mode is GraspSource.ORACLE_LATERAL:
        if object_model.shape == "box":
            for axis, other in ((0, 1), (1, 0)):
                for sign in (1.0, -1.0):
                    normal = sign * rot[:, axis]
                    out.append((-normal, rot[:, other], float(half[other]), float(object_model.extents[axis])))
        else:
            yaw0 = float(np.arctan2(rot[1, 0], rot[0, 0]))
            for k in range(_N_CYLINDER_SIDES):
                theta = yaw0 + k * 2.0 * np.pi / _N_CYLINDER_SIDES
                normal = np.array([np.cos(theta), np.sin(theta), 0.0])
                closing = np.array([-np.sin(theta), np.cos(theta), 0.0])
                out.append((-normal, closing, object_model.radius, 2.0 * object_model.radius))
        return out

    down = np.array([0.0, 0.0, -1.0])
    height = float(object_model.extents[2])
    if object_model.shape == "box":
        for axis in (0, 1):
            for sign in (1.0, -1.0):
                closing = sign * rot[:, axis]
                closing = closing - np.dot(closing, down) * down
                out.append((down, closing, float(half[axis]), height))
    else:
        yaw0 = float(np.arctan2(rot[1, 0], rot[0, 0]))
        for k in range(_N_CYLINDER_TOP):
            theta = yaw0 + k * np.pi / _N_CYLINDER_TOP
            out.append((down, np.array([np.cos(theta), np.sin(theta), 0.0]), object_model.radius, height))
    return out


def oracle_grasps(
    object_model: ObjectModel,
    object_state: ObjectState,
    mode: GraspSource | str,
    noise_std: float,
    rng: np.random.Generator,
    *,
    hand_model: HandModel | None = None,
    config: PlannerConfig | None = None,
) -> list[GraspCandidate]:
    """Ground-truth grasp candidates perturbed by Gaussian noise.

    Parameters
    ----------
    object_model, object_state :
        Object geometry and its current pose.
    mode : GraspSource | str
        ``lateral`` approaches the side faces horizontally; ``topdown`` approaches
        along -z and emits poses in the gripper convention (rolled by
        ``-hand_rotation_sign * hand_rotation_deg`` about the approach).
    noise_std : float
        Std of the position (m) and rotation-vector (rad) perturbations.
    rng : np.random.Generator
        Source of noise and confidences.

    Returns
    -------
    list[GraspCandidate]
        Sorted by confidence, highest first. Approaches whose grasp width does not fit
        inside the open hand are not proposed.
    """
    source = GraspSource(mode)
    cfg = config or PlannerConfig()
    hand = hand_model or load_hand_model()
    span = _open_half_span(hand)
    centroid = np.asarray(object_state.pose.position, dtype=float)
    gripper_roll = Rotation.from_rotvec(
        [0.0, 0.0, -cfg.hand_rotation_sign * np.deg2rad(cfg.hand_rotation_deg)]
    )

    poses: list[Pose] = []
    for approach, closing, half_width, depth in _approaches(object_model, object_state, source):
        if half_width + hand.fingertip_radius + cfg.width_clearance >= span:
            continue
        standoff = max(cfg.min_standoff, depth / 2.0 + cfg.standoff_margin)
        pose = Pose.from_matrix(centroid - standoff * approach, frame_from_axes(closing, approach))
        if source is GraspSource.ORACLE_TOP_DOWN:
            pose = pose.rotated_locally(gripper_roll)
        position_noise = rng.normal(0.0, noise_std, 3)
        rotation_noise = rng.normal(0.0, noise_std, 3)
        if noise_std > 0:
            pose = Pose(
                pose.position + position_noise,
                (Rotation.from_rotvec(rotation_noise) * pose.rotation).as_quat(),
            )
        poses.append(pose)

    confidences = rng.uniform(0.0, 1.0, len(poses))
    order = np.argsort(-confidences, kind="stable")
    return [GraspCandidate(poses[i], float(confidences[i]), source) for i in order]


def vgn_to_hand(gripper_pose: Pose, *, angle_deg: float = 45.0, sign: int = 1) -> Pose:
    """Roll a gripper-convention pose about its own approach axis into the hand convention."""
    return gripper_pose.rotated_locally(Rotation.from_rotvec([0.0, 0.0, sign * np.deg2rad(angle_deg)]))


def pre_grasp(grasp_pose: Pose, approach_dir, distance: float = PREGRASP_DISTANCE) -> Pose:
    """Grasp pose retreated by ``distance`` against the approach direction."""
    approach = np.asarray(approach_dir, dtype=float)
    approach = approach / np.linalg.norm(approach)
    return Pose(grasp_pose.position - distance * approach, grasp_pose.quat_xyzw)


def object_reference_point(
    object_model: ObjectModel, object_state: ObjectState, generator_mode: GraspSource | str
) -> np.ndarray:
    """Centroid for lateral grasps, per-axis median of surface samples for top-down ones.

    ``generator_mode`` also accepts ``"centroid"`` and ``"median"`` directly.
    """
    mode = generator_mode.value if isinstance(generator_mode, GraspSource) else str(generator_mode)
    if mode in (GraspSource.ORACLE_LATERAL.value, "centroid"):
        return np.array(object_state.pose.position, dtype=float)
    if mode in (GraspSource.ORACLE_TOP_DOWN.value, "median"):
        return np.median(object_model.world_surface_samples(object_state.pose), axis=0)
    raise ValueError(f"Unknown reference point mode {generator_mode!r}")


def select_reachable(
    candidates: Sequence[GraspCandidate],
    workspace_check: Callable[[Pose, np.ndarray], bool],
    *,
    object_ref_point,
    pregrasp_distance: float = PREGRASP_DISTANCE,
) -> GraspPlan:
    """First candidate, in the given order, whose grasp and pre-grasp poses are reachable.

    ``workspace_check(pose, approach)`` receives the candidate's approach axis as the
    orientation reference, the same one ``GraspEnv.reset`` checks the pre-grasp against.

    Raises
    ------
    NoReachableCandidate
        If every candidate fails.
    """
    for rank, candidate in enumerate(candidates):
        approach = candidate.pose.approach_axis
        pre = pre_grasp(candidate.pose, approach, pregrasp_distance)
        if workspace_check(candidate.pose, approach) and workspace_check(pre, approach):
            logger.debug("Selected grasp candidate %d (confidence %.3f)", rank, candidate.confidence)
            return GraspPlan(candidate.pose, pre, object_ref_point, approach, candidate.source, candidate.confidence)
    raise NoReachableCandidate(f"None of {len(candidates)} grasp candidates is reachable")


class GraspPlanner:
    """Oracle, hand-convention transform and reachability selection in one call.

    Parameters
    ----------
    config : PlannerConfig | None
        Mode, noise and geometry settings.
    hand_model : HandModel | None
        Hand whose open span limits candidate widths.
    workspace : WorkspaceChecker | None
        Reachability test; when None, ``plan_for`` uses the environment's.
    """

    def __init__(
        self,
        config: PlannerConfig | None = None,
        *,
        hand_model: HandModel | None = None,
        workspace: WorkspaceChecker | None = None,
    ):
        self.config = config or PlannerConfig()
        self.hand_model = hand_model or load_hand_model()
        self.workspace = workspace

    @property
    def source(self) -> GraspSource:
        return GraspSource(self.config.mode)

    def candidates(
        self, object_model: ObjectModel, object_state: ObjectState, rng: np.random.Generator
    ) -> list[GraspCandidate]:
        """Oracle candidates in the hand convention, highest confidence first."""
        raw = oracle_grasps(
            object_model,
            object_state,
            self.source,
            self.config.noise_std,
            rng,
            hand_model=self.hand_model,
            config=self.config,
        )
        if self.source is not GraspSource.ORACLE_TOP_DOWN:
            return raw
        return [
            GraspCandidate(
                vgn_to_hand(c.pose, angle_deg=self.config.hand_rotation_deg, sign=self.config.hand_rotation_sign),
                c.confidence,
                c.source,
            )
            for c in raw
        ]

    def reference_point(self, object_model: ObjectModel, object_state: ObjectState) -> np.ndarray:
        mode = self.config.reference_point
        return object_reference_point(object_model, object_state, self.source if mode == "auto" else mode)

    def plan(
        self,
        object_model: ObjectModel,
        object_state: ObjectState,
        rng: np.random.Generator,
        workspace: WorkspaceChecker | None = None,
    ) -> GraspPlan:
        """Plan for one object placement.

        Raises
        ------
        NoReachableCandidate
            If no candidate passes the workspace check.
        """
        checker = workspace or self.workspace or WorkspaceChecker()
        return select_reachable(
            self.candidates(object_model, object_state, rng),
            checker,
            object_ref_point=self.reference_point(object_model, object_state),
            pregrasp_distance=self.config.pregrasp_distance,
        )

    def plan_for(self, env, seed: int) -> GraspPlan:
        """Plan for the placement ``env.reset(plan, seed)`` will produce."""
        object_state = env.sample_object_state(seed)
        rng = np.random.default_rng(np.random.SeedSequence([int(seed) % 2**64, 1]))
        return self.plan(env.object_model, object_state, rng, self.workspace or env.workspace)
