"""Discrete ray stepping through a WorldGrid and medium attenuation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .core import Characteristic, GridCoord, WorldGrid, vec3

_NO_SKIP = np.full(3, -1, dtype=np.int64)
_NO_MASK = np.ones((1, 1, 1), dtype=bool)
_ZERO = np.zeros(3, dtype=np.int64)


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o, d = vec3(self.origin), vec3(self.direction)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("ray direction must be a unit vector")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)

    @classmethod
    def towards(cls, origin, target) -> "Ray":
        o = vec3(origin)
        v = vec3(target) - o
        return cls(o, v / np.linalg.norm(v))

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass(frozen=True)
class Hit:
    coord: GridCoord
    object_id: int
    characteristic: Characteristic
    entry_t: float
    step_index: int


def march_cells(origin, direction, grid_origin, cell_size, dims, t0=0.0, t1=math.inf):
    """Raw march over a lattice box: ``(cells (n, 3), times (n, 2))`` arrays."""
    dims = np.asarray(dims, dtype=np.int64)
    cap = int(dims.sum()) + 3
    cells = np.empty((cap, 3), dtype=np.int64)
    times = np.empty((cap, 2))
    count = K.march(np.asarray(origin, dtype=np.float64), np.asarray(direction, dtype=np.float64),
                    np.asarray(grid_origin, dtype=np.float64), float(cell_size), dims,
                    float(t0), float(t1), cells, times)
    return cells[:count], times[:count]


def _march(ray: Ray, grid: WorldGrid, t0=0.0, t1=math.inf):
    return march_cells(ray.origin, ray.direction, grid.origin, grid.cell_size, grid.dims, t0, t1)


def grid_march(ray: Ray, grid: WorldGrid, t_max: float = math.inf):
    """Cells pierced by the ray in increasing t, as ``(coord, entry_t, exit_t)``."""
    cells, times = _march(ray, grid, 0.0, t_max)
    return [(GridCoord(*map(int, c)), float(a), float(b)) for c, (a, b) in zip(cells, times)]


def first_hit(ray: Ray, grid: WorldGrid, skip: Optional[GridCoord] = None,
              t_max: float = math.inf) -> Optional[Hit]:
    cells, times = _march(ray, grid, 0.0, t_max)
    skip_arr = _NO_SKIP if skip is None else np.asarray(skip, dtype=np.int64)
    k = K.first_occupied(cells, len(cells), grid.occupant, _ZERO, skip_arr, _NO_MASK, False)
    if k < 0:
        return None
    c = GridCoord(*map(int, cells[k]))
    return Hit(c, int(grid.occupant[c]), grid.materials[grid.material[c]],
               float(times[k, 0]), int(k))


def transmittance(ray: Ray, grid: WorldGrid, t0: float, t1: float) -> float:
    """Beer-Lambert transmittance over the ray interval [t0, t1]."""
    if t0 > t1:
        raise ValueError("t0 must not exceed t1")
    cells, times = _march(ray, grid, max(t0, 0.0), t1)
    return math.exp(-K.optical_depth(cells, times, len(cells), grid.absorption, t0, t1))
