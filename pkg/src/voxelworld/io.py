"""Scene files (JSON), volume files (VVOL) and PPM projections.

Scene angles are written in degrees and converted to radians on load.
"""
from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from pathlib import Path

import jsonschema
import numpy as np

from .core import Characteristic, Light, ObjectModel, Pose, WorldGrid
from .synthesis import (SOURCE_EMPTY, SOURCE_OBJECT, Ball, Cone, FrameUpdate, Frustum,
                        LightUpdate, Observer, Parallelepiped, SceneState,
                        VolumetricRepresentation)
from .shading import ShadeConfig
from .voxelizer import Box, PlaneSlab, PolylineTube, Sphere, voxelize

MAGIC = b"VVOL1\n"
RECORD = struct.Struct("<6f")


class SceneError(ValueError):
    """Invalid scene or frames file; the message names the offending field."""


class VolumeFormatError(ValueError):
    pass


_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}
_unit = {"type": "number", "minimum": 0, "maximum": 1}
_rgb = {"type": "array", "items": _unit, "minItems": 3, "maxItems": 3}
_ivec = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 3, "maxItems": 3}


def _obj(props, required=(), **kw):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False, **kw}


_pose = _obj({"position": _vec, "angles": _vec})
_material = _obj({"color": _rgb, "transparency": _unit, "R": _unit, "F": _unit,
                  "refractive_index": {"type": "number", "minimum": 1}})
_positive = {"type": "number", "exclusiveMinimum": 0}

_primitive = {"oneOf": [
    _obj({"type": {"const": "sphere"}, "center": _vec, "radius": _positive},
         ["type", "center", "radius"]),
    _obj({"type": {"const": "box"}, "min": _vec, "max": _vec}, ["type", "min", "max"]),
    _obj({"type": {"const": "polyline_tube"},
          "points": {"type": "array", "items": _vec, "minItems": 2},
          "radius": {"type": "number", "minimum": 0}}, ["type", "points"]),
    _obj({"type": {"const": "plane_slab"}, "point": _vec, "normal": _vec,
          "thickness": _positive, "extent": _positive},
         ["type", "point", "normal", "thickness", "extent"]),
]}

_voxels = _obj({
    "dims": _ivec, "origin": _vec,
    "occupancy": {"type": "array", "items": {"enum": [0, 1]}},
    "materials": {"type": "array", "items": _material, "minItems": 1},
    "material_index": {"type": "array", "items": {"type": "integer", "minimum": 0}},
}, ["dims", "occupancy"])

_display = {"oneOf": [
    _obj({"shape": {"const": "frustum"}, "near": {"type": "number", "minimum": 0},
          "far": _positive}, ["shape", "far"]),
    _obj({"shape": {"const": "parallelepiped"},
          "dims": {"type": "array", "items": _positive, "minItems": 3, "maxItems": 3}},
         ["shape", "dims"]),
    _obj({"shape": {"const": "ball"}, "radius": _positive, "center_distance": _num},
         ["shape", "radius"]),
    _obj({"shape": {"const": "cone"}, "half_angle": _positive,
          "near": {"type": "number", "minimum": 0}, "far": _positive},
         ["shape", "half_angle", "far"]),
]}

_medium_edit = {"type": "array", "minItems": 4, "maxItems": 4,
                "prefixItems": [{"type": "integer", "minimum": 0}] * 3
                + [{"type": "number", "minimum": 0}]}

SCENE_SCHEMA = _obj({
    "world": _obj({"dims": _ivec, "cell_size": _positive, "origin": _vec,
                   "medium_absorption": {"type": "number", "minimum": 0},
                   "medium_edits": {"type": "array", "items": _medium_edit}},
                  ["dims", "cell_size"]),
    "objects": {"type": "array", "items": _obj(
        {"id": {"type": "integer", "minimum": 0}, "primitive": _primitive, "voxels": _voxels,
         "D_o": _positive, "material": _material, "pose": _pose},
        ["id"], oneOf=[{"required": ["primitive", "D_o"]}, {"required": ["voxels", "D_o"]}])},
    "lights": {"type": "array", "items": _obj(
        {"position": _vec, "color": _rgb, "intensity": {"type": "number", "minimum": 0}},
        ["position"])},
    "observer": _obj({"pose": _pose, "sector": {"type": "array", "items": _positive,
                                                "minItems": 2, "maxItems": 2}}),
    "display": _display,
    "shade": _obj({"ambient": _rgb, "light_transmittance_mode": {"type": "boolean"}}),
}, ["world"])

FRAMES_SCHEMA = {"type": "array", "items": _obj({
    "objects": {"type": "object", "patternProperties": {"^[0-9]+$": _pose},
                "additionalProperties": False},
    "lights": {"type": "object", "additionalProperties": False, "patternProperties": {
        "^[0-9]+$": _obj({"position": _vec, "color": _rgb,
                          "intensity": {"type": "number", "minimum": 0}})}},
    "observer": _obj({"pose": _pose, "sector": {"type": "array", "items": _positive,
                                                "minItems": 2, "maxItems": 2}}),
    "medium": {"type": "array", "items": _medium_edit},
})}


def _field_path(err: jsonschema.ValidationError) -> str:
    out = ""
    for p in err.absolute_path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def _validate(doc, schema, what):
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        best = jsonschema.exceptions.best_match(errors)
        raise SceneError(f"{what}: invalid field {_field_path(best)}: {best.message}")


def _parse_json(path, what):
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise SceneError(f"{what}: parse error at line {e.lineno} column {e.colno}: {e.msg}") from e


def _pose_from(d) -> Pose:
    d = d or {}
    return Pose(d.get("position", (0, 0, 0)),
                tuple(math.radians(a) for a in d.get("angles", (0, 0, 0))))


def _pose_to(p: Pose) -> dict:
    return {"position": [float(v) for v in p.position],
            "angles": [math.degrees(a) for a in p.angles]}


def _material_from(d) -> Characteristic:
    d = d or {}
    return Characteristic(tuple(d.get("color", (1, 1, 1))), d.get("transparency", 0.0),
                          d.get("R", 0.0), d.get("F", 0.0), d.get("refractive_index", 1.0))


def primitive_from(d):
    kind = d["type"]
    if kind == "sphere":
        return Sphere(tuple(d["center"]), float(d["radius"]))
    if kind == "box":
        return Box(tuple(d["min"]), tuple(d["max"]))
    if kind == "polyline_tube":
        return PolylineTube(tuple(tuple(p) for p in d["points"]), float(d.get("radius", 0.0)))
    if kind == "plane_slab":
        return PlaneSlab(tuple(d["point"]), tuple(d["normal"]), float(d["thickness"]),
                         float(d["extent"]))
    raise SceneError(f"unknown primitive type {kind!r}")


def _voxels_from(d, cell_size, material) -> ObjectModel:
    dims = tuple(d["dims"])
    size = dims[0] * dims[1] * dims[2]
    if len(d["occupancy"]) != size:
        raise ValueError(f"occupancy has {len(d['occupancy'])} entries, expected {size}")
    occ = np.array(d["occupancy"], dtype=bool).reshape(dims, order="F")
    origin = d.get("origin", (0, 0, 0))
    if "materials" in d:
        idx = np.array(d.get("material_index", [0] * size), dtype=np.int64)
        if idx.size != size:
            raise ValueError(f"material_index has {idx.size} entries, expected {size}")
        mats = [_material_from(m) for m in d["materials"]]
        return ObjectModel(occ, cell_size, mats, Pose(), origin, idx.reshape(dims, order="F"))
    return ObjectModel(occ, cell_size, material, Pose(), origin)


def _display_from(d):
    if d is None:
        return Frustum(0.0, 10.0)
    kind = d["shape"]
    if kind == "frustum":
        return Frustum(float(d.get("near", 0.0)), float(d["far"]))
    if kind == "parallelepiped":
        return Parallelepiped(tuple(d["dims"]))
    if kind == "ball":
        return Ball(float(d["radius"]), float(d.get("center_distance", 0.0)))
    return Cone(math.radians(d["half_angle"]), float(d.get("near", 0.0)), float(d["far"]))


def _display_to(s) -> dict:
    if isinstance(s, Frustum):
        return {"shape": "frustum", "near": s.near, "far": s.far}
    if isinstance(s, Parallelepiped):
        return {"shape": "parallelepiped", "dims": list(s.dims)}
    if isinstance(s, Ball):
        return {"shape": "ball", "radius": s.radius, "center_distance": s.center_distance}
    return {"shape": "cone", "half_angle": math.degrees(s.half_angle), "near": s.near,
            "far": s.far}


def _observer_from(d) -> Observer:
    d = d or {}
    sector = tuple(math.radians(a) for a in d.get("sector", (45.0, 45.0)))
    return Observer(_pose_from(d.get("pose")), sector)


def _observer_to(o: Observer) -> dict:
    return {"pose": _pose_to(o.pose), "sector": [math.degrees(a) for a in o.sector]}


def scene_from_dict(doc: dict, what: str = "scene") -> SceneState:
    _validate(doc, SCENE_SCHEMA, what)
    w = doc["world"]
    key = "world"
    try:
        world = WorldGrid(w["dims"], w["cell_size"], w.get("origin", (0, 0, 0)),
                          w.get("medium_absorption", 0.0))
        for i, (l, m, n, a) in enumerate(w.get("medium_edits", [])):
            key = f"world.medium_edits[{i}]"
            if not world.in_bounds((l, m, n)):
                raise ValueError(f"cell {(l, m, n)} is outside the world")
            world.absorption[l, m, n] = a
        key = "shade"
        sh = doc.get("shade", {})
        shade = ShadeConfig(tuple(sh.get("ambient", (0.1, 0.1, 0.1))),
                            bool(sh.get("light_transmittance_mode", False)))
        key = "observer"
        observer = _observer_from(doc.get("observer"))
        key = "display"
        display = _display_from(doc.get("display"))
        lights = []
        for i, ld in enumerate(doc.get("lights", [])):
            key = f"lights[{i}]"
            lights.append(Light(ld["position"], tuple(ld.get("color", (1, 1, 1))),
                                ld.get("intensity", 1.0)))
        state = SceneState(world, {}, lights, observer, display, shade)
        for i, od in enumerate(doc.get("objects", [])):
            key = f"objects[{i}]"
            oid = od["id"]
            if oid in state.objects:
                raise ValueError(f"duplicate object id {oid}")
            material = _material_from(od.get("material"))
            if "primitive" in od:
                model = voxelize(primitive_from(od["primitive"]), od["D_o"], material)
            else:
                model = _voxels_from(od["voxels"], od["D_o"], material)
            model = model.with_pose(_pose_from(od.get("pose")))
            state.add_object(oid, model, od)
    except SceneError:
        raise
    except (ValueError, TypeError) as e:
        raise SceneError(f"{what}: invalid field {key}: {e}") from e
    return state


def load_scene(path) -> SceneState:
    return scene_from_dict(_parse_json(path, str(path)), str(path))


def scene_to_dict(state: SceneState) -> dict:
    w = state.world
    default = float(np.median(w.absorption))
    edits = [[int(l), int(m), int(n), float(w.absorption[l, m, n])]
             for n, m, l in sorted((n, m, l) for l, m, n in np.argwhere(w.absorption != default))]
    objects = []
    for oid, obj in state.objects.items():
        desc = dict(state.descriptions.get(oid, {}))
        if not desc:
            raise ValueError(f"object {oid} has no serializable description")
        desc["id"] = oid
        desc["pose"] = _pose_to(obj.pose)
        objects.append(desc)
    return {
        "world": {"dims": list(w.dims), "cell_size": w.cell_size,
                  "origin": [float(v) for v in w.origin], "medium_absorption": default,
                  "medium_edits": edits},
        "objects": objects,
        "lights": [{"position": [float(v) for v in lt.position], "color": list(lt.color),
                    "intensity": lt.intensity} for lt in state.lights],
        "observer": _observer_to(state.observer),
        "display": _display_to(state.display),
        "shade": {"ambient": list(state.shade.ambient),
                  "light_transmittance_mode": state.shade.light_transmittance_mode},
    }


def save_scene(state: SceneState, path) -> None:
    text = json.dumps(scene_to_dict(state), indent=2)
    atomic_write(path, text.encode())


def frames_from_list(doc, what="frames") -> list[FrameUpdate]:
    _validate(doc, FRAMES_SCHEMA, what)
    frames = []
    for fd in doc:
        poses = {int(k): _pose_from(v) for k, v in fd.get("objects", {}).items()}
        lights = {int(k): LightUpdate(v.get("position"),
                                      tuple(v["color"]) if "color" in v else None,
                                      v.get("intensity"))
                  for k, v in fd.get("lights", {}).items()}
        obs = _observer_from(fd["observer"]) if "observer" in fd else None
        medium = tuple(((l, m, n), a) for l, m, n, a in fd.get("medium", []))
        frames.append(FrameUpdate(poses, lights, obs, medium))
    return frames


def load_frames(path) -> list[FrameUpdate]:
    return frames_from_list(_parse_json(path, str(path)), str(path))


def atomic_write(path, data: bytes) -> None:
    """Write via a temp file in the target directory and rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def volume_bytes(P: VolumetricRepresentation) -> bytes:
    nx, ny, nz = P.dims
    header = " ".join([str(nx), str(ny), str(nz), repr(float(P.cell_size)),
                       *(repr(float(v)) for v in P.origin)]) + "\n"
    rec = np.zeros((nx, ny, nz, 6), dtype="<f4")
    rec[..., :3] = P.color
    rec[..., 3] = P.transparency
    rec[..., 4] = P.source
    rec[..., 5] = np.where(P.source == SOURCE_OBJECT, P.object_id, 0)
    body = rec.transpose(2, 1, 0, 3).tobytes()  # l fastest
    return MAGIC + header.encode("ascii") + body


def write_volume(P: VolumetricRepresentation, path) -> None:
    atomic_write(path, volume_bytes(P))


def parse_volume(data: bytes) -> VolumetricRepresentation:
    if not data.startswith(MAGIC):
        raise VolumeFormatError("bad magic; not a VVOL1 file")
    end = data.find(b"\n", len(MAGIC))
    if end < 0:
        raise VolumeFormatError("truncated header")
    try:
        parts = data[len(MAGIC):end].decode("ascii").split()
        nx, ny, nz = (int(v) for v in parts[:3])
        cell, ox, oy, oz = (float(v) for v in parts[3:])
    except (ValueError, UnicodeDecodeError) as e:
        raise VolumeFormatError(f"malformed header: {e}") from e
    if min(nx, ny, nz) < 0:
        raise VolumeFormatError("negative dimensions")
    body = data[end + 1:]
    want = nx * ny * nz * RECORD.size
    if len(body) != want:
        kind = "truncated" if len(body) < want else "oversized"
        raise VolumeFormatError(f"{kind} body: {len(body)} bytes, expected {want}")
    rec = np.frombuffer(body, dtype="<f4").reshape(nz, ny, nx, 6).transpose(2, 1, 0, 3)
    P = VolumetricRepresentation.empty((nx, ny, nz), cell, (ox, oy, oz))
    P.color[...] = rec[..., :3]
    P.transparency[...] = rec[..., 3]
    P.source[...] = rec[..., 4].astype(np.uint8)
    P.object_id[...] = rec[..., 5].astype(np.int32)
    return P


def read_volume(path) -> VolumetricRepresentation:
    return parse_volume(Path(path).read_bytes())


def project(P: VolumetricRepresentation, axis: str = "z", mode: str = "first-populated",
            objects_only: bool = False) -> np.ndarray:
    """Orthographic projection along ``axis`` as an (rows, cols, 3) uint8 image.

    Pixel (row, col) holds the two remaining axes in order, e.g. for axis x
    the pixel at row n, column m.  ``first-populated`` takes the populated cell
    with the lowest index along the axis; ``max-channel`` takes the per-channel
    maximum over populated cells.
    """
    a = "xyz".index(axis)
    if mode not in ("first-populated", "max-channel"):
        raise ValueError(f"unknown projection mode {mode!r}")
    pop = P.source == SOURCE_OBJECT if objects_only else P.source != SOURCE_EMPTY
    color = np.where(pop[..., None], P.color, 0.0)
    color = np.moveaxis(color, a, 0)
    pop = np.moveaxis(pop, a, 0)
    if pop.shape[0] == 0:
        img = np.zeros(pop.shape[1:] + (3,))
    elif mode == "max-channel":
        img = color.max(axis=0)
    else:
        first = pop.argmax(axis=0)
        img = np.take_along_axis(color, first[None, ..., None], axis=0)[0]
        img = np.where(pop.any(axis=0)[..., None], img, 0.0)
    img8 = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    return img8.transpose(1, 0, 2)  # rows follow the second remaining axis


def ppm_bytes(img: np.ndarray) -> bytes:
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img).tobytes()


def write_ppm(img: np.ndarray, path) -> None:
    atomic_write(path, ppm_bytes(img))


def read_ppm(path) -> np.ndarray:
    magic, size, depth, pixels = Path(path).read_bytes().split(b"\n", 3)
    if magic != b"P6" or depth != b"255":
        raise ValueError("only 8-bit P6 images written by ppm_bytes are supported")
    w, h = (int(v) for v in size.split())
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w, 3)
