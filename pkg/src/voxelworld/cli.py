"""Command-line driver: render, animate, voxelize, info."""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .core import Characteristic
from .synthesis import SOURCE_OBJECT, VolumetricRepresentation, run_scenario
from .voxelizer import voxelize


def _default_threads() -> int:
    env = os.environ.get("VOXELWORLD_THREADS")
    if env:
        return int(env)
    return os.cpu_count() or 1


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def cmd_render(args):
    state = io.load_scene(args.scene)
    P = state.render(args.threads)
    io.write_volume(P, args.out)
    if args.project:
        if not args.ppm:
            raise ValueError("--project needs --ppm")
        img = io.project(P, args.project, args.mode, args.objects_only)
        io.write_ppm(img, args.ppm)
    census = P.census()
    print(f"wrote {args.out}: object_cells={census['object_cells']} "
          f"scene_cells={census['scene_cells']}")


def cmd_animate(args):
    state = io.load_scene(args.scene)
    frames = io.load_frames(args.frames)
    out_dir = Path(args.out_dir)
    volumes = run_scenario(state, frames, args.threads)
    out_dir.mkdir(parents=True, exist_ok=True)
    for k, P in enumerate(volumes):
        io.write_volume(P, out_dir / f"frame_{k:04d}.vvol")
    print(f"wrote {len(volumes)} frames to {out_dir}")


def cmd_voxelize(args):
    try:
        doc = json.loads(args.primitive)
    except json.JSONDecodeError as e:
        raise io.SceneError(f"--primitive: parse error at column {e.colno}: {e.msg}") from e
    io._validate(doc, io._primitive, "--primitive")
    material = Characteristic()
    if args.material:
        mdoc = json.loads(args.material)
        io._validate(mdoc, io._material, "--material")
        material = io._material_from(mdoc)
    obj = voxelize(io.primitive_from(doc), args.cell_size, material)
    P = VolumetricRepresentation.empty(obj.dims, obj.cell_size, obj.origin)
    P.source[obj.occupancy] = SOURCE_OBJECT
    P.color[obj.occupancy] = np.array(material.color, dtype=np.float32)
    P.transparency[obj.occupancy] = material.transparency
    io.write_volume(P, args.out)
    print(f"wrote {args.out}: object_cells={obj.count}")


def cmd_info(args):
    P = io.read_volume(args.volume)
    nx, ny, nz = P.dims
    print(f"dims={nx} {ny} {nz} cell_size={P.cell_size!r} "
          f"origin={' '.join(repr(float(v)) for v in P.origin)}")
    c = P.census()
    print(f"object_cells={c['object_cells']} scene_cells={c['scene_cells']}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="voxelworld", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("render", help="synthesize the volumetric representation of a scene")
    r.add_argument("--scene", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--threads", type=_positive_int, default=None)
    r.add_argument("--project", choices=["x", "y", "z"])
    r.add_argument("--ppm")
    r.add_argument("--mode", choices=["first-populated", "max-channel"],
                   default="first-populated")
    r.add_argument("--objects-only", action="store_true",
                   help="project object cells only, ignoring scene-medium cells")
    r.set_defaults(func=cmd_render)

    a = sub.add_parser("animate", help="render one volume per frame update")
    a.add_argument("--scene", required=True)
    a.add_argument("--frames", required=True)
    a.add_argument("--out-dir", required=True)
    a.add_argument("--threads", type=_positive_int, default=None)
    a.set_defaults(func=cmd_animate)

    v = sub.add_parser("voxelize", help="voxelize one primitive into a volume file")
    v.add_argument("--primitive", required=True, help="inline JSON primitive")
    v.add_argument("--cell-size", type=float, required=True)
    v.add_argument("--material", help="inline JSON material")
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_voxelize)

    i = sub.add_parser("info", help="print a volume header and cell census")
    i.add_argument("--volume", required=True)
    i.set_defaults(func=cmd_info)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) is None:
        args.threads = _default_threads()
    try:
        args.func(args)
    except (OSError, ValueError, KeyError) as e:
        print(f"voxelworld {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
