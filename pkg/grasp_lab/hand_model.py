"""Five-fingered hand description and forward kinematics.

The hand is read from a versioned YAML description (see
``data/reference/hand/five_finger_hand_v1.yml``). Every finger is a serial chain
mounted on the palm; chain joints are driven by one of nine actuators, and the ring and
little fingers share the last two actuators.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from ._paths import default_hand_path
from .errors import ConfigError
from .geometry import Pose, axis_angle_matrix

logger = logging.getLogger(__name__)

HAND_SCHEMA_VERSION = 1
N_ACTUATORS = 9
N_FINGERS = 5
FINGER_NAMES = ("thumb", "index", "middle", "ring", "little")


@dataclass(frozen=True)
class JointSpec:
    """One revolute chain joint followed by a straight link.

    Attributes
    ----------
    axis : np.ndarray
        Unit rotation axis in the parent link frame.
    length : float
        Link length (m) along the rotated +z.
    actuator : int
        Index into the 9-vector of actuated joint positions.
    ratio : float
        Coupling ratio; chain angle = ratio * qpos[actuator].
    """

    axis: np.ndarray
    length: float
    actuator: int
    ratio: float = 1.0


@dataclass(frozen=True)
class FingerChain:
    name: str
    mount_position: np.ndarray
    mount_rotation: np.ndarray
    joints: tuple[JointSpec, ...]

    def tip_local(self, qpos: np.ndarray) -> np.ndarray:
        """Fingertip center in the palm frame."""
        rot = self.mount_rotation
        pos = self.mount_position
        for joint in self.joints:
            rot = rot @ axis_angle_matrix(joint.axis, joint.ratio * qpos[joint.actuator])
            pos = pos + rot[:, 2] * joint.length
        return pos

    @property
    def actuators(self) -> tuple[int, ...]:
        return tuple(sorted({joint.actuator for joint in self.joints}))


@dataclass(frozen=True)
class HandModel:
    """Validated hand description.

    Attributes
    ----------
    name : str
        Description identifier.
    schema_version : int
        Version of the description file layout.
    fingertip_radius : float
        Radius (m) of the fingertip contact spheres.
    fingers : tuple[FingerChain, ...]
        Chains ordered thumb, index, middle, ring, little.
    actuator_names : tuple[str, ...]
        Names of the nine actuated joints.
    qpos_open, qpos_close : np.ndarray
        Open and closed 9-vectors (rad).
    joint_limits : np.ndarray
        ``(9, 2)`` array of ``[lo, hi]`` per actuator (rad).
    """

    name: str
    schema_version: int
    fingertip_radius: float
    fingers: tuple[FingerChain, ...]
    actuator_names: tuple[str, ...]
    qpos_open: np.ndarray
    qpos_close: np.ndarray
    joint_limits: np.ndarray

    @property
    def n_actuators(self) -> int:
        return len(self.actuator_names)

    def clamp(self, qpos: np.ndarray) -> np.ndarray:
        return np.clip(qpos, self.joint_limits[:, 0], self.joint_limits[:, 1])

    def tips_local(self, qpos: np.ndarray) -> np.ndarray:
        """``(5, 3)`` fingertip centers in the palm frame."""
        return np.stack([finger.tip_local(qpos) for finger in self.fingers])

    def actuator_groups(self) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        """Partition actuators into groups that move fingers together.

        Returns
        -------
        list[tuple[tuple[int, ...], tuple[int, ...]]]
            ``(actuator indices, finger indices)`` pairs. Coupled fingers share a group.
        """
        groups: list[tuple[set[int], set[int]]] = []
        for finger_index, finger in enumerate(self.fingers):
            acts = set(finger.actuators)
            for group_acts, group_fingers in groups:
                if group_acts & acts:
                    group_acts |= acts
                    group_fingers.add(finger_index)
                    break
            else:
                groups.append((acts, {finger_index}))
        return [(tuple(sorted(a)), tuple(sorted(f))) for a, f in groups]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "schema_version": self.schema_version,
            "fingertip_radius": self.fingertip_radius,
            "actuators": list(self.actuator_names),
            "qpos_open": self.qpos_open.tolist(),
            "qpos_close": self.qpos_close.tolist(),
            "joint_limits": self.joint_limits.tolist(),
            "fingers": [
                {
                    "name": f.name,
                    "mount": f.mount_position.tolist(),
                    "joints": [
                        {"axis": j.axis.tolist(), "length": j.length, "actuator": j.actuator, "ratio": j.ratio}
                        for j in f.joints
                    ],
                }
                for f in self.fingers
            ],
        }


def _parse_finger(raw: dict, n_actuators: int) -> FingerChain:
    try:
        name = str(raw["name"])
        mount = np.asarray(raw["mount"], dtype=float)
        joints_raw = raw["joints"]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"Finger entry missing field: {exc}") from exc
    if mount.shape != (3,):
        raise ConfigError(f"Finger {name}: mount must be a 3-vector")
    mount_rpy = raw.get("mount_rpy", [0.0, 0.0, 0.0])
    joints = []
    for jr in joints_raw:
        try:
            axis = np.asarray(jr["axis"], dtype=float)
            actuator = int(jr["actuator"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"Finger {name}: joint entry needs axis and actuator ({exc})") from exc
        norm = float(np.linalg.norm(axis))
        if axis.shape != (3,) or norm == 0.0:
            raise ConfigError(f"Finger {name}: joint axis must be a non-zero 3-vector")
        if not 0 <= actuator < n_actuators:
            raise ConfigError(f"Finger {name}: actuator index {actuator} out of range")
        length = float(jr.get("length", 0.0))
        if length < 0:
            raise ConfigError(f"Finger {name}: negative link length")
        joints.append(JointSpec(axis / norm, length, actuator, float(jr.get("ratio", 1.0))))
    return FingerChain(name, mount, Pose.from_rpy(mount, mount_rpy).rotation_matrix, tuple(joints))


def parse_hand_model(raw: dict) -> HandModel:
    """Validate a hand-description mapping and build a ``HandModel``.

    Raises
    ------
    ConfigError
        On an unknown schema version, wrong actuator or finger count, limits violated by
        the open/closed postures, or an actuator whose open and closed values coincide.
    """
    if not isinstance(raw, dict):
        raise ConfigError("Hand description must be a mapping")
    version = raw.get("schema_version")
    if version != HAND_SCHEMA_VERSION:
        raise ConfigError(f"Unsupported hand schema_version {version!r} (expected {HAND_SCHEMA_VERSION})")

    actuators = raw.get("actuators") or []
    if len(actuators) != N_ACTUATORS:
        raise ConfigError(f"Hand must declare exactly {N_ACTUATORS} actuators, found {len(actuators)}")
    try:
        names = tuple(str(a["name"]) for a in actuators)
        qpos_open = np.array([float(a["open"]) for a in actuators])
        qpos_close = np.array([float(a["close"]) for a in actuators])
        limits = np.array([[float(a["limits"][0]), float(a["limits"][1])] for a in actuators])
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ConfigError(f"Actuator entries need name, open, close and limits ({exc})") from exc

    if np.any(limits[:, 0] > limits[:, 1]):
        raise ConfigError("Joint limits must satisfy lo <= hi")
    for label, vec in (("qpos_open", qpos_open), ("qpos_close", qpos_close)):
        if np.any(vec < limits[:, 0]) or np.any(vec > limits[:, 1]):
            raise ConfigError(f"{label} lies outside the joint limits")
    if np.any(qpos_open == qpos_close):
        raise ConfigError("qpos_close must differ from qpos_open for every actuator")

    fingers = tuple(_parse_finger(f, N_ACTUATORS) for f in raw.get("fingers") or [])
    if len(fingers) != N_FINGERS:
        raise ConfigError(f"Hand must declare {N_FINGERS} fingers, found {len(fingers)}")
    driven = {j.actuator for f in fingers for j in f.joints}
    if driven != set(range(N_ACTUATORS)):
        raise ConfigError("Every actuator must drive at least one chain joint")

    radius = float(raw.get("fingertip_radius", 0.0))
    if radius <= 0:
        raise ConfigError("fingertip_radius must be positive")

    qpos_open.setflags(write=False)
    qpos_close.setflags(write=False)
    limits.setflags(write=False)
    return HandModel(
        name=str(raw.get("name", "hand")),
        schema_version=int(version),
        fingertip_radius=radius,
        fingers=fingers,
        actuator_names=names,
        qpos_open=qpos_open,
        qpos_close=qpos_close,
        joint_limits=limits,
    )


def load_hand_model(path: str | Path | None = None) -> HandModel:
    """Load a hand description YAML (bundled default when ``path`` is None)."""
    resolved = Path(path) if path is not None else default_hand_path()
    try:
        raw = yaml.safe_load(resolved.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"Hand description not found: {resolved}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"Hand description is not valid YAML: {resolved}: {exc}") from exc
    model = parse_hand_model(raw)
    logger.debug("Loaded hand model %s from %s", model.name, resolved)
    return model


def fingertip_positions(hand_model: HandModel, hand_state) -> np.ndarray:
    """World-frame fingertip centers ``(5, 3)`` for a hand state.

    Parameters
    ----------
    hand_model : HandModel
        Kinematic description.
    hand_state : HandState
        Anything exposing ``eef_pose`` (palm frame) and ``qpos``.
    """
    return hand_state.eef_pose.transform_point(hand_model.tips_local(np.asarray(hand_state.qpos, dtype=float)))


def finger_tip(hand_model: HandModel, finger_index: int, palm: Pose, qpos: np.ndarray) -> np.ndarray:
    """World-frame center of a single fingertip."""
    return palm.transform_point(hand_model.fingers[finger_index].tip_local(qpos))
