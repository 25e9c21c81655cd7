"""Rigid-body pose helpers.

Quaternions are stored scalar-last (``x, y, z, w``) to match
``scipy.spatial.transform.Rotation``. Roll-pitch-yaw angles are extrinsic ``xyz``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial.transform import Rotation

_IDENTITY_QUAT = np.array([0.0, 0.0, 0.0, 1.0])


def _as_vector(values, size: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.shape != (size,):
        raise ValueError(f"{name} must have {size} components, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class Pose:
    """Position (m) plus unit-quaternion orientation of a frame.

    Attributes
    ----------
    position : np.ndarray
        3-vector in meters.
    quat_xyzw : np.ndarray
        Unit quaternion, scalar last. Normalized on construction.
    """

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quat_xyzw: np.ndarray = field(default_factory=lambda: _IDENTITY_QUAT.copy())

    def __post_init__(self) -> None:
        position = _as_vector(self.position, 3, "position")
        quat = _as_vector(self.quat_xyzw, 4, "quat_xyzw")
        norm = float(np.linalg.norm(quat))
        if not np.isfinite(norm) or norm == 0.0:
            raise ValueError("quaternion must be finite and non-zero")
        if abs(norm - 1.0) > 1e-15:
            quat = quat / norm
        position.setflags(write=False)
        quat.setflags(write=False)
        object.__setattr__(self, "position", position)
        object.__setattr__(self, "quat_xyzw", quat)

    @classmethod
    def identity(cls) -> Pose:
        return cls()

    @classmethod
    def from_rpy(cls, position, rpy) -> Pose:
        """Build a pose from a position and extrinsic roll-pitch-yaw angles (rad)."""
        return cls(position, Rotation.from_euler("xyz", _as_vector(rpy, 3, "rpy")).as_quat())

    @classmethod
    def from_rotation(cls, position, rotation: Rotation) -> Pose:
        return cls(position, rotation.as_quat())

    @classmethod
    def from_matrix(cls, position, matrix: np.ndarray) -> Pose:
        """Build a pose from a position and a 3x3 rotation matrix."""
        return cls(position, Rotation.from_matrix(np.asarray(matrix, dtype=float)).as_quat())

    @property
    def x(self) -> float:
        return float(self.quat_xyzw[0])

    @property
    def y(self) -> float:
        return float(self.quat_xyzw[1])

    @property
    def z(self) -> float:
        return float(self.quat_xyzw[2])

    @property
    def w(self) -> float:
        return float(self.quat_xyzw[3])

    @cached_property
    def rotation(self) -> Rotation:
        return Rotation.from_quat(self.quat_xyzw)

    @cached_property
    def rotation_matrix(self) -> np.ndarray:
        matrix = self.rotation.as_matrix()
        matrix.setflags(write=False)
        return matrix

    @property
    def rpy(self) -> np.ndarray:
        return self.rotation.as_euler("xyz")

    @property
    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 transform."""
        out = np.eye(4)
        out[:3, :3] = self.rotation_matrix
        out[:3, 3] = self.position
        return out

    @property
    def approach_axis(self) -> np.ndarray:
        """Frame +z in world coordinates (palm to object for hand poses)."""
        return self.rotation_matrix[:, 2]

    def compose(self, other: Pose) -> Pose:
        """Return ``self ∘ other`` (``other`` expressed in this frame)."""
        rotation = self.rotation
        return Pose(self.position + rotation.apply(other.position), (rotation * other.rotation).as_quat())

    def inverse(self) -> Pose:
        inv = self.rotation.inv()
        return Pose(-inv.apply(self.position), inv.as_quat())

    def transform_point(self, points) -> np.ndarray:
        """Map points from this frame into the parent frame. Accepts ``(3,)`` or ``(N, 3)``."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation_matrix.T + self.position

    def inverse_transform_point(self, points) -> np.ndarray:
        """Map points from the parent frame into this frame."""
        pts = np.asarray(points, dtype=float)
        return (pts - self.position) @ self.rotation_matrix

    def translated(self, offset) -> Pose:
        return Pose(self.position + _as_vector(offset, 3, "offset"), self.quat_xyzw)

    def rotated_locally(self, rotation: Rotation) -> Pose:
        """Apply ``rotation`` about this frame's own axes (right multiplication)."""
        return Pose(self.position, (self.rotation * rotation).as_quat())

    def allclose(self, other: Pose, atol: float = 1e-9) -> bool:
        """Compare poses, treating ``q`` and ``-q`` as the same orientation."""
        if not np.allclose(self.position, other.position, atol=atol, rtol=0.0):
            return False
        return abs(abs(float(np.dot(self.quat_xyzw, other.quat_xyzw))) - 1.0) <= atol

    def to_list(self) -> list[float]:
        return [*map(float, self.position), *map(float, self.quat_xyzw)]

    @classmethod
    def from_list(cls, values) -> Pose:
        arr = _as_vector(values, 7, "pose")
        return cls(arr[:3], arr[3:])


def axis_angle_quat(axis, angle: float) -> np.ndarray:
    """Quaternion (xyzw) for a rotation of ``angle`` rad about ``axis``."""
    unit = _as_vector(axis, 3, "axis")
    unit = unit / np.linalg.norm(unit)
    return Rotation.from_rotvec(unit * angle).as_quat()


def axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rotation matrix about a unit ``axis`` (Rodrigues). Hot path for finger kinematics."""
    x, y, z = axis
    c = np.cos(angle)
    s = np.sin(angle)
    t = 1.0 - c
    return np.array(
        [
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ]
    )


def angle_between(quat_a, quat_b) -> float:
    """Angle (rad) of the relative rotation between two orientations."""
    dot = abs(float(np.dot(_as_vector(quat_a, 4, "quat_a"), _as_vector(quat_b, 4, "quat_b"))))
    return 2.0 * float(np.arccos(min(1.0, dot)))


def angle_between_vectors(a, b) -> float:
    """Angle (rad) between two non-zero 3-vectors."""
    va = _as_vector(a, 3, "a")
    vb = _as_vector(b, 3, "b")
    cos = float(np.dot(va, vb) / (np.linalg.norm(va) * np.linalg.norm(vb)))
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def frame_from_axes(closing_axis, approach_axis) -> np.ndarray:
    """Rotation matrix whose +x is ``closing_axis`` and +z is ``approach_axis``.

    The two axes must be orthogonal; +y completes a right-handed frame.
    """
    z = _as_vector(approach_axis, 3, "approach_axis")
    z = z / np.linalg.norm(z)
    x = _as_vector(closing_axis, 3, "closing_axis")
    x = x - np.dot(x, z) * z
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


def yaw_of(rotation_matrix: np.ndarray) -> float:
    """Heading of a frame's +x axis projected on the table plane."""
    return float(np.arctan2(rotation_matrix[1, 0], rotation_matrix[0, 0]))
