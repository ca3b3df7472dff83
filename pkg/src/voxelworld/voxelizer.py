"""Analytic primitives to ObjectModels, and placement of models into a WorldGrid."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .core import Characteristic, ObjectModel, Pose, WorldGrid, vec3

DEFAULT_MAX_VOXELS = 1 << 26


class VoxelBudgetError(ValueError):
    """Raised when a primitive's bounding box needs too many voxels."""


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(vec3(self.center)))
        if not self.radius > 0:
            raise ValueError("sphere radius must be > 0")

    def bounds(self):
        c = np.array(self.center)
        return c - self.radius, c + self.radius

    def contains(self, pts: np.ndarray) -> np.ndarray:
        d = pts - np.array(self.center)
        return np.einsum("ij,ij->i", d, d) < self.radius * self.radius


@dataclass(frozen=True)
class Box:
    min: tuple
    max: tuple

    def __post_init__(self):
        lo, hi = vec3(self.min), vec3(self.max)
        if not np.all(lo < hi):
            raise ValueError("box min must be < max componentwise")
        object.__setattr__(self, "min", tuple(lo))
        object.__setattr__(self, "max", tuple(hi))

    def bounds(self):
        return np.array(self.min), np.array(self.max)

    def contains(self, pts):
        return np.all((pts >= np.array(self.min)) & (pts < np.array(self.max)), axis=1)


def _segment_distance(pts, a, b):
    ab = b - a
    t = np.clip(((pts - a) @ ab) / (ab @ ab), 0.0, 1.0)
    d = pts - (a + t[:, None] * ab)
    return np.sqrt(np.einsum("ij,ij->i", d, d))


@dataclass(frozen=True)
class PolylineTube:
    """Swept ball around a polyline; radius 0 gives a 6-connected voxel curve."""

    points: tuple
    radius: float = 0.0

    def __post_init__(self):
        pts = tuple(tuple(vec3(p)) for p in self.points)
        if len(pts) < 2:
            raise ValueError("polyline needs at least two points")
        if any(a == b for a, b in zip(pts, pts[1:])):
            raise ValueError("consecutive polyline points must be distinct")
        if not self.radius >= 0:
            raise ValueError("tube radius must be >= 0")
        object.__setattr__(self, "points", pts)

    def bounds(self):
        p = np.array(self.points)
        return p.min(axis=0) - self.radius, p.max(axis=0) + self.radius

    def contains(self, pts):
        p = np.array(self.points)
        best = np.full(len(pts), np.inf)
        for a, b in zip(p, p[1:]):
            best = np.minimum(best, _segment_distance(pts, a, b))
        return best <= self.radius


@dataclass(frozen=True)
class PlaneSlab:
    """Disk of radius ``extent`` and given thickness, centred on ``point``."""

    point: tuple
    normal: tuple
    thickness: float
    extent: float

    def __post_init__(self):
        n = vec3(self.normal)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("plane normal must be a unit vector")
        if not (self.thickness > 0 and self.extent > 0):
            raise ValueError("plane thickness and extent must be > 0")
        object.__setattr__(self, "point", tuple(vec3(self.point)))
        object.__setattr__(self, "normal", tuple(n))

    def bounds(self):
        n = np.abs(np.array(self.normal))
        half = self.extent * np.sqrt(np.clip(1.0 - n * n, 0.0, 1.0)) + 0.5 * self.thickness * n
        p = np.array(self.point)
        return p - half, p + half

    def contains(self, pts):
        n = np.array(self.normal)
        d = pts - np.array(self.point)
        h = d @ n
        radial = d - h[:, None] * n
        r2 = np.einsum("ij,ij->i", radial, radial)
        half = 0.5 * self.thickness
        return (h >= -half) & (h < half) & (r2 <= self.extent * self.extent)


Primitive = Union[Sphere, Box, PolylineTube, PlaneSlab]


def _lattice_centers(origin, dims, cell):
    idx = np.indices(dims).reshape(3, -1).T
    return origin + (idx + 0.5) * cell


def voxelize(prim: Primitive, cell_size: float, material: Characteristic | None = None,
             max_voxels: int = DEFAULT_MAX_VOXELS) -> ObjectModel:
    """Center-sample ``prim`` on a lattice anchored at the OCS origin.

    The model covers the primitive's bounding box plus one empty voxel of
    padding per side.
    """
    cell_size = float(cell_size)
    if not (math.isfinite(cell_size) and cell_size > 0):
        raise ValueError("cell_size must be > 0")
    material = material or Characteristic()
    lo, hi = prim.bounds()
    first = np.floor(lo / cell_size).astype(np.int64) - 1
    last = np.ceil(hi / cell_size).astype(np.int64) + 1
    dims = tuple(int(v) for v in last - first)
    total = dims[0] * dims[1] * dims[2]
    if total > max_voxels:
        raise VoxelBudgetError(f"primitive needs {total} voxels, cap is {max_voxels}")
    origin = first * cell_size
    if isinstance(prim, PolylineTube) and prim.radius == 0:
        occ = _curve_occupancy(prim, origin, dims, cell_size)
    else:
        occ = prim.contains(_lattice_centers(origin, dims, cell_size)).reshape(dims)
    return ObjectModel(occ, cell_size, material, Pose(), origin)


def _curve_occupancy(prim: PolylineTube, origin, dims, cell):
    from .traversal import march_cells

    occ = np.zeros(dims, dtype=bool)
    pts = np.array(prim.points)
    for a, b in zip(pts, pts[1:]):
        seg = b - a
        length = float(np.linalg.norm(seg))
        cells, _ = march_cells(a, seg / length, origin, cell, dims, 0.0, length)
        occ[cells[:, 0], cells[:, 1], cells[:, 2]] = True
        for p in (a, b):  # endpoints on a max face are not marched
            q = np.floor((p - origin) / cell).astype(np.int64)
            if np.all((q >= 0) & (q < dims)):
                occ[tuple(q)] = True
    return occ


def _object_world_bounds(obj: ObjectModel):
    ext = obj.origin + np.array(obj.dims) * obj.cell_size
    corners = np.array([[x, y, z] for x in (obj.origin[0], ext[0])
                        for y in (obj.origin[1], ext[1]) for z in (obj.origin[2], ext[2])])
    w = corners @ obj.pose.rotation.T + obj.pose.position
    return w.min(axis=0), w.max(axis=0)


def place_object(grid: WorldGrid, obj: ObjectModel, object_id: int) -> WorldGrid:
    """Write ``obj`` into ``grid`` in place by inverse-mapping scene voxel centers.

    Later placements overwrite earlier occupants; cells outside the grid are
    clipped.  Returns ``grid``.
    """
    if object_id < 0:
        raise ValueError("object ids must be >= 0")
    wlo, whi = _object_world_bounds(obj)
    d = grid.cell_size
    lo = np.maximum(np.floor((wlo - grid.origin) / d).astype(np.int64) - 1, 0)
    hi = np.minimum(np.ceil((whi - grid.origin) / d).astype(np.int64) + 1, grid.dims)
    if np.any(hi <= lo):
        return grid
    sub = tuple(int(v) for v in hi - lo)
    idx = np.indices(sub).reshape(3, -1).T + lo
    centers = grid.origin + (idx + 0.5) * d
    local = (centers - obj.pose.position) @ obj.pose.rotation
    q = np.floor((local - obj.origin) / obj.cell_size).astype(np.int64)
    inside = np.all((q >= 0) & (q < np.array(obj.dims)), axis=1)
    idx, q = idx[inside], q[inside]
    hit = obj.occupancy[q[:, 0], q[:, 1], q[:, 2]]
    idx, q = idx[hit], q[hit]
    if not len(idx):
        return grid
    if isinstance(obj.material, Characteristic):
        mats = np.full(len(idx), grid.material_index(obj.material), dtype=np.int32)
    else:
        table = np.array([grid.material_index(m) for m in obj.material], dtype=np.int32)
        mats = table[obj.material_index[q[:, 0], q[:, 1], q[:, 2]]]
    cells = (idx[:, 0], idx[:, 1], idx[:, 2])
    grid.occupant[cells] = object_id
    grid.material[cells] = mats
    return grid
