"""Visible colour of a hit voxel: shadowed Lambert lighting plus one reflection
and one refraction bounce."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from .core import GridCoord, Light, WorldGrid, pack_lights, vec3
from .traversal import Hit, Ray


@dataclass(frozen=True)
class ShadeConfig:
    ambient: tuple = (0.1, 0.1, 0.1)
    light_transmittance_mode: bool = False
    max_secondary_depth: int = 1

    def __post_init__(self):
        amb = tuple(float(x) for x in self.ambient)
        if len(amb) != 3 or not all(0.0 <= x <= 1.0 for x in amb):
            raise ValueError("ambient must be an RGB triple in [0, 1]")
        object.__setattr__(self, "ambient", amb)
        if self.max_secondary_depth != 1:
            raise ValueError("only a single secondary bounce is supported")


def _cell(c) -> tuple:
    return int(c[0]), int(c[1]), int(c[2])


def estimate_normal(grid: WorldGrid, c: GridCoord, incoming=None) -> np.ndarray:
    """Unit normal from the occupancy gradient around ``c``.

    Falls back to ``-incoming`` when the neighbourhood is symmetric.
    """
    l, m, n = _cell(c)
    nx, ny, nz = K.normal_at(grid.occupant, l, m, n, np.nan, np.nan, np.nan)
    if np.isnan(nx):
        if incoming is None:
            raise ValueError(f"zero occupancy gradient at {tuple(c)}; pass the incoming direction")
        return -vec3(incoming)
    return np.array([nx, ny, nz])


def shadow_factor(grid: WorldGrid, from_: GridCoord, light: Light,
                  attenuated: bool = False) -> float:
    """0 if an occupant other than ``from_`` blocks the path to the light.

    Otherwise 1, or the medium transmittance when ``attenuated``.
    """
    if not grid.in_bounds(from_):
        raise ValueError(f"{tuple(from_)} is outside the grid")
    l, m, n = _cell(from_)
    cells, times = K._buffers(np.array(grid.dims, dtype=np.int64))
    row = pack_lights([light])[0]
    return float(K.shadow(grid.occupant, grid.absorption, grid.origin, grid.cell_size,
                          l, m, n, row, attenuated, cells, times))


def direct_light(hit: Hit, lights: Sequence[Light], grid: WorldGrid,
                 attenuated: bool = False, incoming=None,
                 normal=None) -> np.ndarray:
    """Sum of shadowed Lambert terms, before adding the ambient base or clamping."""
    l, m, n = _cell(hit.coord)
    if normal is None:
        normal = estimate_normal(grid, hit.coord, incoming)
    color = hit.characteristic.color
    cells, times = K._buffers(np.array(grid.dims, dtype=np.int64))
    r, g, b = K.direct(grid.occupant, grid.absorption, grid.origin, grid.cell_size, l, m, n,
                       float(normal[0]), float(normal[1]), float(normal[2]),
                       color[0], color[1], color[2], pack_lights(lights), attenuated,
                       cells, times)
    return np.array([r, g, b])


def combine(base, contribution, weight: float) -> np.ndarray:
    if not 0.0 <= weight <= 1.0:
        raise ValueError("weight must lie in [0, 1]")
    return np.clip(np.asarray(base, dtype=np.float64)
                   + weight * np.asarray(contribution, dtype=np.float64), 0.0, 1.0)


def reflect_direction(d, normal) -> np.ndarray:
    d, normal = vec3(d), vec3(normal)
    r = d - 2.0 * (d @ normal) * normal
    return r / np.linalg.norm(r)


def refract_direction(d, normal, refractive_index: float) -> Optional[np.ndarray]:
    """Snell refraction across an air/material boundary; None on total internal reflection.

    ``normal`` points out of the material; a ray with ``d . normal > 0`` is
    treated as leaving it.
    """
    ok, tx, ty, tz = K.refract(*map(float, d), *map(float, normal), float(refractive_index))
    return np.array([tx, ty, tz]) if ok else None


def shade(hit: Hit, incoming: Ray, grid: WorldGrid, lights: Sequence[Light],
          cfg: ShadeConfig, depth: int = 0) -> np.ndarray:
    """C_P of the hit voxel, clamped to [0, 1]^3."""
    if depth not in (0, 1):
        raise ValueError("depth must be 0 or 1")
    if grid.occupant[_cell(hit.coord)] < 0:
        raise ValueError(f"{tuple(hit.coord)} has no occupant")
    l, m, n = _cell(hit.coord)
    d = incoming.direction
    r, g, b = K.shade_cell(grid.occupant, grid.material, grid.material_table(), grid.absorption,
                           grid.origin, grid.cell_size, pack_lights(lights),
                           np.array(cfg.ambient), cfg.light_transmittance_mode,
                           l, m, n, d[0], d[1], d[2], depth)
    return np.array([r, g, b])
