"""Observer view spaces, sight rays, volumetric synthesis and dynamic scenarios."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels as K
from .core import (GridCoord, Light, ObjectModel, Pose, WorldGrid, pack_lights, vec3,
                   NO_OBJECT)
from .shading import ShadeConfig
from .traversal import Ray, march_cells
from .voxelizer import place_object

SOURCE_EMPTY, SOURCE_SCENE, SOURCE_OBJECT = 0, 1, 2


@dataclass(frozen=True)
class Observer:
    pose: Pose = field(default_factory=Pose)
    sector: tuple = (math.pi / 4, math.pi / 4)  # horizontal, vertical half-angles

    def __post_init__(self):
        h, v = (float(a) for a in self.sector)
        if not (0 < h < math.pi / 2 and 0 < v < math.pi / 2):
            raise ValueError("sector half-angles must lie in (0, pi/2)")
        object.__setattr__(self, "sector", (h, v))

    @property
    def position(self) -> np.ndarray:
        return self.pose.position

    @property
    def view_dir(self) -> np.ndarray:
        return self.pose.rotation[:, 2].copy()

    def to_local(self, pts: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(pts) - self.pose.position) @ self.pose.rotation


@dataclass(frozen=True)
class Frustum:
    near: float
    far: float

    def __post_init__(self):
        if not 0 <= self.near < self.far:
            raise ValueError("frustum needs 0 <= near < far")

    def local_bounds(self, obs: Observer):
        th, tv = (math.tan(a) for a in obs.sector)
        return (np.array([-self.far * th, -self.far * tv, self.near]),
                np.array([self.far * th, self.far * tv, self.far]))

    def contains(self, p: np.ndarray, obs: Observer) -> np.ndarray:
        th, tv = (math.tan(a) for a in obs.sector)
        x, y, z = p[:, 0], p[:, 1], p[:, 2]
        return ((z >= self.near) & (z <= self.far)
                & (np.abs(x) <= z * th) & (np.abs(y) <= z * tv))


@dataclass(frozen=True)
class Parallelepiped:
    """Box of ``dims`` (width, height, depth) in front of the observer."""

    dims: tuple

    def __post_init__(self):
        d = tuple(float(v) for v in self.dims)
        if len(d) != 3 or min(d) <= 0:
            raise ValueError("parallelepiped dims must be positive")
        object.__setattr__(self, "dims", d)

    def local_bounds(self, obs):
        w, h, d = self.dims
        return np.array([-w / 2, -h / 2, 0.0]), np.array([w / 2, h / 2, d])

    def contains(self, p, obs):
        w, h, d = self.dims
        return ((np.abs(p[:, 0]) <= w / 2) & (np.abs(p[:, 1]) <= h / 2)
                & (p[:, 2] >= 0) & (p[:, 2] <= d))


@dataclass(frozen=True)
class Ball:
    """Sphere centred ``center_distance`` ahead of the observer."""

    radius: float
    center_distance: float = 0.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be > 0")

    def local_bounds(self, obs):
        c = np.array([0.0, 0.0, self.center_distance])
        return c - self.radius, c + self.radius

    def contains(self, p, obs):
        q = p - np.array([0.0, 0.0, self.center_distance])
        return np.einsum("ij,ij->i", q, q) <= self.radius * self.radius


@dataclass(frozen=True)
class Cone:
    half_angle: float
    near: float
    far: float

    def __post_init__(self):
        if not 0 < self.half_angle < math.pi / 2:
            raise ValueError("cone half_angle must lie in (0, pi/2)")
        if not 0 <= self.near < self.far:
            raise ValueError("cone needs 0 <= near < far")

    def local_bounds(self, obs):
        r = self.far * math.tan(self.half_angle)
        return np.array([-r, -r, self.near]), np.array([r, r, self.far])

    def contains(self, p, obs):
        z = p[:, 2]
        rho = np.hypot(p[:, 0], p[:, 1])
        return (z >= self.near) & (z <= self.far) & (rho <= z * math.tan(self.half_angle))


DisplayShape = Union[Frustum, Parallelepiped, Ball, Cone]


@dataclass
class ViewSpace:
    """Display-shaped region of the world: index box, membership and scene snapshot."""

    observer: Observer
    shape: DisplayShape
    lo: np.ndarray          # box offset into the world grid
    dims: tuple
    cell_size: float
    origin: np.ndarray      # world position of the box's min corner
    membership: np.ndarray
    scene_color: np.ndarray  # gray level exp(-absorption * D_s)

    @property
    def member_count(self) -> int:
        return int(self.membership.sum())

    def centers(self) -> np.ndarray:
        idx = np.indices(self.dims).reshape(3, -1).T
        return self.origin + (idx + 0.5) * self.cell_size


@dataclass
class VolumetricRepresentation:
    dims: tuple
    cell_size: float
    origin: np.ndarray
    source: np.ndarray       # uint8: 0 empty, 1 scene, 2 object
    color: np.ndarray        # float32 (Nx, Ny, Nz, 3)
    transparency: np.ndarray  # float32
    object_id: np.ndarray    # int32, meaningful where source == 2
    offset: Optional[np.ndarray] = field(default=None, compare=False)

    @classmethod
    def empty(cls, dims, cell_size, origin, offset=None):
        dims = tuple(int(d) for d in dims)
        return cls(dims, float(cell_size), vec3(origin), np.zeros(dims, np.uint8),
                   np.zeros(dims + (3,), np.float32), np.zeros(dims, np.float32),
                   np.zeros(dims, np.int32), offset)

    def census(self) -> dict:
        return {"object_cells": int((self.source == SOURCE_OBJECT).sum()),
                "scene_cells": int((self.source == SOURCE_SCENE).sum())}

    def object_cells(self) -> set:
        return {GridCoord(*map(int, c)) for c in np.argwhere(self.source == SOURCE_OBJECT)}

    def __eq__(self, other):
        if not isinstance(other, VolumetricRepresentation):
            return NotImplemented
        return (self.dims == other.dims and self.cell_size == other.cell_size
                and np.array_equal(self.origin, other.origin)
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("source", "color", "transparency", "object_id")))


def build_view_space(obs: Observer, shape: DisplayShape, world: WorldGrid,
                     cell_size: Optional[float] = None) -> ViewSpace:
    if cell_size is not None and cell_size != world.cell_size:
        raise ValueError("view space cell size must equal the world cell size")
    d = world.cell_size
    llo, lhi = shape.local_bounds(obs)
    corners = np.array([[x, y, z] for x in (llo[0], lhi[0]) for y in (llo[1], lhi[1])
                        for z in (llo[2], lhi[2])])
    w = corners @ obs.pose.rotation.T + obs.pose.position
    lo = np.clip(np.floor((w.min(0) - world.origin) / d).astype(np.int64), 0, world.dims)
    hi = np.clip(np.ceil((w.max(0) - world.origin) / d).astype(np.int64), 0, world.dims)
    hi = np.maximum(hi, lo)
    dims = tuple(int(v) for v in hi - lo)
    origin = world.origin + lo * d
    vs = ViewSpace(obs, shape, lo, dims, d, origin, np.zeros(dims, bool),
                   np.zeros(dims + (3,)))
    if min(dims) == 0:
        return vs
    inside = shape.contains(obs.to_local(vs.centers()), obs)
    vs.membership = inside.reshape(dims)
    sub = world.absorption[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
    gray = np.exp(-sub * d)
    vs.scene_color = np.repeat(gray[..., None], 3, axis=-1)
    return vs


def _far_boundary(obs: Observer, vs: ViewSpace) -> np.ndarray:
    """Flat (l-fastest) indices of member cells on the far side of the shape.

    Parallelepiped: cells whose step along the view direction leaves the member
    set.  Ball: every member cell with a missing face neighbour.  Frustum and
    cone: member cells with a missing face neighbour on the side facing away
    from the observer, which covers the far cap, slanted sides and world clips.
    """
    mem = vs.membership
    if isinstance(vs.shape, Parallelepiped):
        q = np.floor((vs.centers() + vs.cell_size * obs.view_dir - vs.origin)
                     / vs.cell_size).astype(np.int64)
        inside = np.all((q >= 0) & (q < np.array(vs.dims)), axis=1)
        gone = ~inside
        qi = q[inside]
        gone[inside] = ~mem[qi[:, 0], qi[:, 1], qi[:, 2]]
        edge = mem & gone.reshape(vs.dims)
    else:
        padded = np.pad(mem, 1)
        v = (vs.centers() - obs.position).reshape(vs.dims + (3,))
        edge = np.zeros(vs.dims, bool)
        for a in range(3):
            for s in (1, -1):
                sl = [slice(1, -1)] * 3
                sl[a] = slice(1 + s, padded.shape[a] - 1 + s)
                missing = ~padded[tuple(sl)]
                if not isinstance(vs.shape, Ball):
                    missing &= s * v[..., a] > 0
                edge |= missing
        edge &= mem
    return np.sort(np.ravel_multi_index(np.nonzero(edge), vs.dims, order="F"))


def _sight_dirs(obs: Observer, vs: ViewSpace) -> np.ndarray:
    if vs.member_count == 0:
        return np.zeros((0, 3))
    f = _far_boundary(obs, vs)
    nx, ny, _ = vs.dims
    n, rem = np.divmod(f, nx * ny)
    m, l = np.divmod(rem, nx)
    centers = vs.origin + (np.stack([l, m, n], 1) + 0.5) * vs.cell_size
    v = centers - obs.position
    dirs = v / np.linalg.norm(v, axis=1)[:, None]
    _, first = np.unique(dirs, axis=0, return_index=True)
    return dirs[np.sort(first)]


def sight_rays(obs: Observer, vs: ViewSpace) -> list[Ray]:
    """One ray from the observer through each far-boundary member cell."""
    if vs.member_count == 0:
        raise ValueError("view space has no member cells")
    return [Ray(obs.position, d) for d in _sight_dirs(obs, vs)]


def ray_coverage(obs: Observer, vs: ViewSpace) -> tuple[float, np.ndarray]:
    """Fraction of member cells crossed by some sight ray, and the missed cells."""
    seen = np.zeros(vs.dims, bool)
    for d in _sight_dirs(obs, vs):
        cells, _ = march_cells(obs.position, d, vs.origin, vs.cell_size, vs.dims)
        seen[cells[:, 0], cells[:, 1], cells[:, 2]] = True
    missed = vs.membership & ~seen
    total = vs.member_count
    return (1.0 - missed.sum() / total if total else 1.0), np.argwhere(missed)


def _chunks(n: int, threads: int):
    parts = max(1, min(n, threads * 4))
    bounds = np.linspace(0, n, parts + 1).astype(int)
    return [(a, b) for a, b in zip(bounds, bounds[1:]) if b > a]


def _run(fn, n: int, threads: int):
    spans = _chunks(n, threads)
    if threads <= 1 or len(spans) <= 1:
        for a, b in spans:
            fn(a, b)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for f in [pool.submit(fn, a, b) for a, b in spans]:
            f.result()


def synthesize(world: WorldGrid, obs: Observer, shape: DisplayShape,
               lights: Sequence[Light], cfg: ShadeConfig, threads: int = 1,
               view_space: Optional[ViewSpace] = None) -> VolumetricRepresentation:
    """Volumetric representation P of the world seen by ``obs`` through ``shape``.

    Member cells start as scene cells; the first member occupant along each
    sight ray becomes an object cell shaded from the lowest-index ray that hit it.
    """
    vs = view_space or build_view_space(obs, shape, world)
    P = VolumetricRepresentation.empty(vs.dims, vs.cell_size, vs.origin, vs.lo.copy())
    if vs.member_count == 0:
        return P
    mem = vs.membership
    P.source[mem] = SOURCE_SCENE
    P.color[mem] = vs.scene_color[mem]
    P.transparency[mem] = vs.scene_color[mem][:, 0]

    dirs = np.ascontiguousarray(_sight_dirs(obs, vs))
    origins = np.ascontiguousarray(np.broadcast_to(obs.position, dirs.shape))
    hits = np.empty((len(dirs), 3), np.int64)
    box_dims = np.array(vs.dims, np.int64)
    occ = world.occupant

    def trace(a, b):
        K.trace_primary(origins[a:b], dirs[a:b], vs.origin, vs.cell_size, box_dims, occ,
                        vs.lo, mem, hits[a:b])

    _run(trace, len(dirs), threads)
    ok = np.nonzero(hits[:, 0] >= 0)[0]
    if not len(ok):
        return P
    h = hits[ok]
    flat = h[:, 0] + vs.dims[0] * (h[:, 1] + vs.dims[1] * h[:, 2])
    _, first = np.unique(flat, return_index=True)
    rays = ok[first]  # smallest ray index per hit cell
    cells = np.ascontiguousarray(hits[rays] + vs.lo)
    rdirs = np.ascontiguousarray(dirs[rays])
    out = np.empty((len(cells), 3))
    mtab = world.material_table()
    lt = pack_lights(lights)
    amb = np.array(cfg.ambient)

    def shade(a, b):
        K.shade_batch(cells[a:b], rdirs[a:b], occ, world.material, mtab, world.absorption,
                      world.origin, world.cell_size, lt, amb, cfg.light_transmittance_mode,
                      0, out[a:b])

    _run(shade, len(cells), threads)
    local = tuple((cells - vs.lo).T)
    world_idx = tuple(cells.T)
    P.source[local] = SOURCE_OBJECT
    P.color[local] = out
    P.transparency[local] = mtab[world.material[world_idx], 3]
    P.object_id[local] = occ[world_idx]
    return P


def set_identity_violations(P: VolumetricRepresentation, vs: ViewSpace,
                            world: WorldGrid) -> int:
    """Object cells of P that are not member cells of V holding that occupant of S."""
    obj = P.source == SOURCE_OBJECT
    lo, d = vs.lo, vs.dims
    occ = world.occupant[lo[0]:lo[0] + d[0], lo[1]:lo[1] + d[1], lo[2]:lo[2] + d[2]]
    ok = vs.membership & (occ != NO_OBJECT) & (occ == P.object_id)
    return int((obj & ~ok).sum()) + int(((P.source != SOURCE_EMPTY) & ~vs.membership).sum())


@dataclass(frozen=True)
class LightUpdate:
    position: Optional[tuple] = None
    color: Optional[tuple] = None
    intensity: Optional[float] = None


@dataclass(frozen=True)
class FrameUpdate:
    object_poses: dict = field(default_factory=dict)   # object id -> Pose
    lights: dict = field(default_factory=dict)         # light index -> LightUpdate
    observer: Optional[Observer] = None
    medium: tuple = ()                                  # ((l, m, n), absorption) pairs


@dataclass
class SceneState:
    world: WorldGrid
    objects: dict = field(default_factory=dict)  # id -> ObjectModel, in placement order
    lights: list = field(default_factory=list)
    observer: Observer = field(default_factory=Observer)
    display: DisplayShape = field(default_factory=lambda: Frustum(0.0, 10.0))
    shade: ShadeConfig = field(default_factory=ShadeConfig)
    descriptions: dict = field(default_factory=dict)  # id -> scene-file object entry, for saving

    def add_object(self, object_id: int, obj: ObjectModel, description=None):
        if object_id in self.objects:
            raise ValueError(f"duplicate object id {object_id}")
        self.objects[object_id] = obj
        if description is not None:
            self.descriptions[object_id] = description
        place_object(self.world, obj, object_id)

    def render(self, threads: int = 1) -> VolumetricRepresentation:
        return synthesize(self.world, self.observer, self.display, self.lights, self.shade,
                          threads)


class FrameError(ValueError):
    def __init__(self, index: int, reason: Exception):
        super().__init__(f"frame {index}: {reason}")
        self.index = index


def apply_frame(state: SceneState, upd: FrameUpdate) -> SceneState:
    """Return the state after ``upd``; the input state is left untouched.

    Any unknown id rejects the whole update.  Moving objects re-places every
    object in its original order so overlaps keep last-writer-wins semantics.
    """
    for oid in upd.object_poses:
        if oid not in state.objects:
            raise KeyError(f"unknown object id {oid}")
    for j in upd.lights:
        if not 0 <= j < len(state.lights):
            raise KeyError(f"unknown light index {j}")
    for c, a in upd.medium:
        if not state.world.in_bounds(c):
            raise KeyError(f"medium edit outside the world at {tuple(c)}")
        if not (math.isfinite(a) and a >= 0):
            raise ValueError(f"absorption must be finite and >= 0 at {tuple(c)}")
    lights = list(state.lights)
    for j, lu in upd.lights.items():
        old = lights[j]
        lights[j] = Light(old.position if lu.position is None else lu.position,
                          old.color if lu.color is None else lu.color,
                          old.intensity if lu.intensity is None else lu.intensity)

    world = state.world.copy()
    objects = dict(state.objects)
    if upd.object_poses:
        for oid, pose in upd.object_poses.items():
            objects[oid] = objects[oid].with_pose(pose)
        world.occupant.fill(NO_OBJECT)
        world.material.fill(-1)
        for oid, obj in objects.items():
            place_object(world, obj, oid)
    for c, a in upd.medium:
        world.absorption[tuple(int(v) for v in c)] = float(a)
    return replace(state, world=world, objects=objects, lights=lights,
                   observer=upd.observer or state.observer,
                   descriptions=dict(state.descriptions))


def run_scenario(state: SceneState, frames: Sequence[FrameUpdate],
                 threads: int = 1) -> list[VolumetricRepresentation]:
    out = []
    for k, upd in enumerate(frames):
        try:
            state = apply_frame(state, upd)
        except (KeyError, ValueError) as e:
            raise FrameError(k, e) from e
        out.append(state.render(threads))
    return out
