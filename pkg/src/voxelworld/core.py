"""Geometric and material types shared by every stage of the engine.

Vectors are plain ``numpy`` float64 arrays of shape ``(3,)``; grid coordinates
are ``(l, m, n)`` integer tuples.  Grids are stored as dense arrays indexed
``[l, m, n]``; flattening with ``order="F"`` gives the on-disk layout
``l + Nx * (m + Ny * n)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

Vec3 = np.ndarray
RGB = tuple  # (r, g, b), each in [0, 1]

NO_OBJECT = -1


def vec3(v: Sequence[float]) -> Vec3:
    a = np.asarray(v, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite vector component in {v!r}")
    return a


def _check_rgb(name: str, c: Sequence[float]) -> tuple:
    c = tuple(float(x) for x in c)
    if len(c) != 3 or not all(0.0 <= x <= 1.0 for x in c):
        raise ValueError(f"{name} must be an RGB triple in [0, 1], got {c!r}")
    return c


class GridCoord(NamedTuple):
    l: int
    m: int
    n: int


@dataclass(frozen=True)
class Characteristic:
    """Visual record of one object voxel."""

    color: RGB = (1.0, 1.0, 1.0)
    transparency: float = 0.0
    reflect_ratio: float = 0.0
    refract_ratio: float = 0.0
    refractive_index: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "color", _check_rgb("color", self.color))
        for name in ("transparency", "reflect_ratio", "refract_ratio"):
            v = float(getattr(self, name))
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
            object.__setattr__(self, name, v)
        if self.reflect_ratio + self.refract_ratio > 1.0:
            raise ValueError("reflect_ratio + refract_ratio must not exceed 1")
        n = float(self.refractive_index)
        if not (math.isfinite(n) and n >= 1.0):
            raise ValueError(f"refractive_index must be >= 1, got {n}")
        object.__setattr__(self, "refractive_index", n)

    def as_row(self) -> np.ndarray:
        return np.array([*self.color, self.transparency, self.reflect_ratio,
                         self.refract_ratio, self.refractive_index])


@dataclass(frozen=True)
class SceneVoxel:
    absorption: float = 0.0
    occupant: Optional[tuple[int, Characteristic]] = None


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = float(a)
    if not math.isfinite(a):
        raise ValueError("angles must be finite")
    w = math.pi - math.fmod(math.pi - a, 2.0 * math.pi)
    if w > math.pi:
        w -= 2.0 * math.pi
    elif w <= -math.pi:
        w += 2.0 * math.pi
    return w


def rotation_matrix(psi: float, theta: float, gamma: float) -> np.ndarray:
    """R = Rz(psi) @ Ry(theta) @ Rx(gamma)."""
    cz, sz = math.cos(psi), math.sin(psi)
    cy, sy = math.cos(theta), math.sin(theta)
    cx, sx = math.cos(gamma), math.sin(gamma)
    rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]])
    return rz @ ry @ rx


@dataclass(frozen=True)
class Pose:
    """Position plus (psi, theta, gamma) turn angles, radians."""

    position: Vec3 = field(default_factory=lambda: np.zeros(3))
    angles: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "position", vec3(self.position))
        if len(self.angles) != 3:
            raise ValueError("angles must be (psi, theta, gamma)")
        object.__setattr__(self, "angles", tuple(wrap_angle(a) for a in self.angles))

    @property
    def rotation(self) -> np.ndarray:
        return rotation_matrix(*self.angles)

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return self.angles == other.angles and np.array_equal(self.position, other.position)

    def __hash__(self):
        return hash((tuple(self.position), self.angles))


def pose_to_world(p: Pose, local) -> Vec3:
    return p.rotation @ vec3(local) + p.position


def world_to_pose(p: Pose, world) -> Vec3:
    return p.rotation.T @ (vec3(world) - p.position)


@dataclass(frozen=True)
class Light:
    position: Vec3
    color: RGB = (1.0, 1.0, 1.0)
    intensity: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "position", vec3(self.position))
        object.__setattr__(self, "color", _check_rgb("light color", self.color))
        i = float(self.intensity)
        if not (math.isfinite(i) and i >= 0.0):
            raise ValueError(f"light intensity must be finite and >= 0, got {i}")
        object.__setattr__(self, "intensity", i)

    def __eq__(self, other):
        if not isinstance(other, Light):
            return NotImplemented
        return (np.array_equal(self.position, other.position)
                and self.color == other.color and self.intensity == other.intensity)

    def __hash__(self):
        return hash((tuple(self.position), self.color, self.intensity))


def pack_lights(lights: Sequence[Light]) -> np.ndarray:
    """(J, 7) rows of x, y, z, r, g, b, intensity."""
    out = np.zeros((len(lights), 7))
    for j, lt in enumerate(lights):
        out[j, :3] = lt.position
        out[j, 3:6] = lt.color
        out[j, 6] = lt.intensity
    return out


class WorldGrid:
    """Scene space S: medium absorption plus placed object occupants.

    ``occupant`` holds the object id per cell (``NO_OBJECT`` when free) and
    ``material`` an index into ``materials``.
    """

    def __init__(self, dims, cell_size: float = 1.0, origin=(0.0, 0.0, 0.0),
                 absorption: float | np.ndarray = 0.0):
        dims = tuple(int(d) for d in dims)
        if len(dims) != 3 or min(dims) <= 0:
            raise ValueError(f"dims must be three positive integers, got {dims}")
        cell_size = float(cell_size)
        if not (math.isfinite(cell_size) and cell_size > 0.0):
            raise ValueError("cell_size must be > 0")
        self.dims = dims
        self.cell_size = cell_size
        self.origin = vec3(origin)
        if np.isscalar(absorption):
            self.absorption = np.full(dims, float(absorption))
        else:
            self.absorption = np.array(absorption, dtype=np.float64)
            if self.absorption.shape != dims:
                raise ValueError("absorption array shape must equal dims")
        if not np.all(np.isfinite(self.absorption)) or np.any(self.absorption < 0):
            raise ValueError("absorption must be finite and >= 0")
        self.occupant = np.full(dims, NO_OBJECT, dtype=np.int32)
        self.material = np.full(dims, -1, dtype=np.int32)
        self.materials: list[Characteristic] = []
        self._material_ids: dict[Characteristic, int] = {}

    @property
    def size(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def extent(self) -> Vec3:
        return self.origin + np.array(self.dims) * self.cell_size

    def material_index(self, ch: Characteristic) -> int:
        idx = self._material_ids.get(ch)
        if idx is None:
            idx = len(self.materials)
            self.materials.append(ch)
            self._material_ids[ch] = idx
        return idx

    def material_table(self) -> np.ndarray:
        if not self.materials:
            return np.zeros((0, 7))
        return np.stack([m.as_row() for m in self.materials])

    def in_bounds(self, c) -> bool:
        return all(0 <= int(c[i]) < self.dims[i] for i in range(3))

    def center_of(self, c) -> Vec3:
        return self.origin + (np.asarray(c, dtype=np.float64) + 0.5) * self.cell_size

    def voxel(self, c) -> SceneVoxel:
        c = tuple(int(x) for x in c)
        oid = int(self.occupant[c])
        occ = None
        if oid != NO_OBJECT:
            occ = (oid, self.materials[self.material[c]])
        return SceneVoxel(float(self.absorption[c]), occ)

    def occupied_cells(self, object_id: Optional[int] = None) -> set:
        mask = self.occupant != NO_OBJECT if object_id is None else self.occupant == object_id
        return {GridCoord(*map(int, c)) for c in np.argwhere(mask)}

    def copy(self) -> "WorldGrid":
        g = WorldGrid.__new__(WorldGrid)
        g.dims = self.dims
        g.cell_size = self.cell_size
        g.origin = self.origin.copy()
        g.absorption = self.absorption.copy()
        g.occupant = self.occupant.copy()
        g.material = self.material.copy()
        g.materials = list(self.materials)
        g._material_ids = dict(self._material_ids)
        return g

    def __eq__(self, other):
        if not isinstance(other, WorldGrid):
            return NotImplemented
        if (self.dims, self.cell_size) != (other.dims, other.cell_size):
            return False
        if not (np.array_equal(self.origin, other.origin)
                and np.array_equal(self.absorption, other.absorption)
                and np.array_equal(self.occupant, other.occupant)):
            return False
        # material indices may differ between grids built in different orders
        occ = self.occupant != NO_OBJECT
        mine = [self.materials[i] for i in self.material[occ]]
        theirs = [other.materials[i] for i in other.material[occ]]
        return mine == theirs

    def __repr__(self):
        return f"WorldGrid(dims={self.dims}, cell_size={self.cell_size}, origin={tuple(self.origin)})"


def world_to_grid(g: WorldGrid, p) -> Optional[GridCoord]:
    """Cell owning ``p`` under half-open cells, or None outside the grid."""
    q = np.floor((vec3(p) - g.origin) / g.cell_size)
    idx = tuple(int(v) for v in q)
    if all(0 <= idx[i] < g.dims[i] for i in range(3)):
        return GridCoord(*idx)
    return None


@dataclass
class ObjectModel:
    """Voxel model of one object in its own coordinate system.

    ``origin`` is the OCS position of the min corner of voxel (0, 0, 0).
    ``material`` is either one Characteristic or a list indexed by
    ``material_index``.
    """

    occupancy: np.ndarray
    cell_size: float
    material: Characteristic | list
    pose: Pose = field(default_factory=Pose)
    origin: Vec3 = field(default_factory=lambda: np.zeros(3))
    material_index: Optional[np.ndarray] = None

    def __post_init__(self):
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        if self.occupancy.ndim != 3 or min(self.occupancy.shape) <= 0:
            raise ValueError("occupancy must be a non-empty 3D array")
        self.cell_size = float(self.cell_size)
        if not (math.isfinite(self.cell_size) and self.cell_size > 0):
            raise ValueError("cell_size must be > 0")
        self.origin = vec3(self.origin)
        if isinstance(self.material, Characteristic):
            if self.material_index is not None:
                raise ValueError("material_index requires a material list")
        else:
            self.material = list(self.material)
            if self.material_index is None:
                raise ValueError("a material list needs material_index")
            self.material_index = np.asarray(self.material_index, dtype=np.int64)
            if self.material_index.shape != self.occupancy.shape:
                raise ValueError("material_index shape must equal occupancy shape")
            used = self.material_index[self.occupancy]
            if used.size and (used.min() < 0 or used.max() >= len(self.material)):
                raise ValueError("material_index out of range")

    @property
    def dims(self) -> tuple:
        return self.occupancy.shape

    @property
    def count(self) -> int:
        return int(self.occupancy.sum())

    def material_at(self, c) -> Characteristic:
        if isinstance(self.material, Characteristic):
            return self.material
        return self.material[int(self.material_index[tuple(c)])]

    def with_pose(self, pose: Pose) -> "ObjectModel":
        return ObjectModel(self.occupancy, self.cell_size, self.material, pose,
                           self.origin, self.material_index)
