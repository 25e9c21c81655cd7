"""Primitive object models (boxes and upright cylinders) with signed distances.

Object frames sit at the centroid; a resting object has its local +z aligned with the
world +z and its base on the table plane ``z = 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import yaml

from ._paths import default_objects_path
from .errors import ConfigError
from .geometry import Pose

logger = logging.getLogger(__name__)

MIN_SURFACE_SAMPLES = 64
SHAPES = ("box", "cylinder")


def _box_samples(half: np.ndarray, per_side: int = 4) -> np.ndarray:
    grid = (np.arange(per_side) + 0.5) / per_side * 2.0 - 1.0
    uu, vv = np.meshgrid(grid, grid, indexing="ij")
    uu = uu.ravel()
    vv = vv.ravel()
    faces = []
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        for sign in (-1.0, 1.0):
            pts = np.zeros((uu.size, 3))
            pts[:, axis] = sign * half[axis]
            pts[:, others[0]] = uu * half[others[0]]
            pts[:, others[1]] = vv * half[others[1]]
            faces.append(pts)
    return np.concatenate(faces)


def _cylinder_samples(radius: float, height: float, n_angles: int = 16) -> np.ndarray:
    angles = np.arange(n_angles) * (2.0 * np.pi / n_angles)
    ring = np.column_stack([np.cos(angles), np.sin(angles)])
    side = [np.column_stack([radius * ring, np.full(n_angles, z)]) for z in (-height / 3, 0.0, height / 3)]
    caps = [
        np.column_stack([frac * radius * ring, np.full(n_angles, sign * height / 2)])
        for sign in (-1.0, 1.0)
        for frac in (0.5, 1.0)
    ]
    return np.concatenate(side + caps)


@dataclass(frozen=True, eq=False)
class ObjectModel:
    """Box or upright cylinder.

    Attributes
    ----------
    object_id : str
        Catalogue key.
    shape : str
        ``"box"`` or ``"cylinder"``.
    extents : np.ndarray
        Full box extents (x, y, z) in meters; for cylinders ``(2r, 2r, h)``.
    radius : float
        Cylinder radius (0 for boxes).
    mass : float
        Unitless proxy, unused by the quasi-static rules.
    surface_samples : np.ndarray
        ``(N, 3)`` object-frame surface points, ``N >= 64``.
    """

    object_id: str
    shape: str
    extents: np.ndarray
    radius: float = 0.0
    mass: float = 1.0
    surface_samples: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.shape not in SHAPES:
            raise ConfigError(f"Unknown shape {self.shape!r}; expected one of {SHAPES}")
        extents = np.asarray(self.extents, dtype=float)
        if extents.shape != (3,) or np.any(extents <= 0):
            raise ConfigError(f"{self.object_id}: extents must be three positive values")
        if self.shape == "cylinder" and self.radius <= 0:
            raise ConfigError(f"{self.object_id}: cylinder radius must be positive")
        samples = self.surface_samples
        if samples is None:
            samples = (
                _box_samples(extents / 2.0)
                if self.shape == "box"
                else _cylinder_samples(self.radius, float(extents[2]))
            )
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != 2 or samples.shape[1] != 3 or samples.shape[0] < MIN_SURFACE_SAMPLES:
            raise ConfigError(f"{self.object_id}: need at least {MIN_SURFACE_SAMPLES} surface samples")
        extents.setflags(write=False)
        samples.setflags(write=False)
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "surface_samples", samples)

    @classmethod
    def box(cls, object_id: str, extents, mass: float = 1.0) -> ObjectModel:
        return cls(object_id, "box", np.asarray(extents, dtype=float), 0.0, mass)

    @classmethod
    def cylinder(cls, object_id: str, radius: float, height: float, mass: float = 1.0) -> ObjectModel:
        return cls(object_id, "cylinder", np.array([2 * radius, 2 * radius, height]), float(radius), mass)

    @property
    def half_extents(self) -> np.ndarray:
        return self.extents / 2.0

    @property
    def rest_height(self) -> float:
        """Centroid height (m) when standing on the table."""
        return float(self.extents[2] / 2.0)

    def distance_and_normal(self, points_local) -> tuple[np.ndarray, np.ndarray]:
        """Signed distance and outward normal at the closest surface point.

        Parameters
        ----------
        points_local : array-like
            ``(N, 3)`` or ``(3,)`` points in the object frame.

        Returns
        -------
        tuple[np.ndarray, np.ndarray]
            ``(N,)`` signed distances (negative inside) and ``(N, 3)`` unit normals.
        """
        p = np.atleast_2d(np.asarray(points_local, dtype=float))
        if self.shape == "box":
            return self._box_sdf(p)
        return self._cylinder_sdf(p)

    def _box_sdf(self, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        half = self.half_extents
        q = np.abs(p) - half
        outside = np.maximum(q, 0.0)
        out_norm = np.linalg.norm(outside, axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        sdf = out_norm + inside

        sign = np.where(p >= 0.0, 1.0, -1.0)
        normals = np.zeros_like(p)
        is_out = out_norm > 0.0
        normals[is_out] = outside[is_out] * sign[is_out] / out_norm[is_out, None]
        rows = np.flatnonzero(~is_out)
        axes = q[rows].argmax(axis=1)
        normals[rows, axes] = sign[rows, axes]
        return sdf, normals

    def _cylinder_sdf(self, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rho = np.hypot(p[:, 0], p[:, 1])
        d_r = rho - self.radius
        d_z = np.abs(p[:, 2]) - self.extents[2] / 2.0
        outside = np.column_stack([np.maximum(d_r, 0.0), np.maximum(d_z, 0.0)])
        out_norm = np.linalg.norm(outside, axis=1)
        sdf = out_norm + np.minimum(np.maximum(d_r, d_z), 0.0)

        radial = np.zeros_like(p)
        safe = rho > 0.0
        radial[safe, 0] = p[safe, 0] / rho[safe]
        radial[safe, 1] = p[safe, 1] / rho[safe]
        radial[~safe, 0] = 1.0
        axial = np.zeros_like(p)
        axial[:, 2] = np.where(p[:, 2] >= 0.0, 1.0, -1.0)

        is_out = out_norm > 0.0
        normals = np.where((d_r > d_z)[:, None], radial, axial)
        mixed = outside[:, 0:1] * radial + outside[:, 1:2] * axial
        normals[is_out] = mixed[is_out] / out_norm[is_out, None]
        return sdf, normals

    def signed_distance(self, points_local) -> np.ndarray:
        return self.distance_and_normal(points_local)[0]

    def world_distance_and_normal(self, pose: Pose, points_world) -> tuple[np.ndarray, np.ndarray]:
        """Signed distance and world-frame outward normal for world-frame points."""
        sdf, normals = self.distance_and_normal(pose.inverse_transform_point(np.atleast_2d(points_world)))
        return sdf, normals @ pose.rotation_matrix.T

    def world_surface_samples(self, pose: Pose) -> np.ndarray:
        return pose.transform_point(self.surface_samples)

    def to_dict(self) -> dict:
        return {
            "object_id": self.object_id,
            "shape": self.shape,
            "extents": self.extents.tolist(),
            "radius": self.radius,
            "mass": self.mass,
        }


def _parse_object(object_id: str, raw: dict) -> ObjectModel:
    shape = raw.get("shape")
    mass = float(raw.get("mass", 1.0))
    try:
        if shape == "box":
            return ObjectModel.box(object_id, raw["extents"], mass)
        if shape == "cylinder":
            return ObjectModel.cylinder(object_id, float(raw["radius"]), float(raw["height"]), mass)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"Object {object_id!r} is malformed: {exc}") from exc
    raise ConfigError(f"Object {object_id!r} has unknown shape {shape!r}")


def load_object_catalogue(path: str | Path | None = None) -> dict[str, ObjectModel]:
    """Load the object catalogue YAML (bundled default when ``path`` is None)."""
    resolved = Path(path) if path is not None else default_objects_path()
    if path is None:
        return dict(_bundled_catalogue())
    return _read_catalogue(resolved)


def _read_catalogue(path: Path) -> dict[str, ObjectModel]:
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"Object catalogue not found: {path}") from exc
    if not isinstance(raw, dict) or not isinstance(raw.get("objects"), dict):
        raise ConfigError(f"Object catalogue {path} must contain an 'objects' mapping")
    catalogue = {str(key): _parse_object(str(key), value or {}) for key, value in raw["objects"].items()}
    logger.debug("Loaded %d objects from %s", len(catalogue), path)
    return catalogue


@lru_cache(maxsize=1)
def _bundled_catalogue() -> tuple[tuple[str, ObjectModel], ...]:
    return tuple(_read_catalogue(default_objects_path()).items())


def get_object_model(object_id: str, path: str | Path | None = None) -> ObjectModel:
    """Look up one object by id.

    Raises
    ------
    ConfigError
        If the id is not in the catalogue.
    """
    catalogue = load_object_catalogue(path)
    if object_id not in catalogue:
        raise ConfigError(f"Unknown object id {object_id!r}; available: {sorted(catalogue)}")
    return catalogue[object_id]
