"""Voxel-world volumetric image synthesis.

Objects are voxelized and placed into a discrete world grid; an observer's
display-shaped view space is then filled by discrete ray tracing with
shadows and one reflection/refraction bounce.
"""
from .core import (Characteristic, GridCoord, Light, ObjectModel, Pose, SceneVoxel,
                   WorldGrid, pose_to_world, world_to_grid)
from .shading import (ShadeConfig, combine, direct_light, estimate_normal, shade,
                      shadow_factor)
from .synthesis import (Ball, Cone, FrameUpdate, Frustum, LightUpdate, Observer,
                        Parallelepiped, SceneState, ViewSpace, VolumetricRepresentation,
                        apply_frame, build_view_space, run_scenario, sight_rays, synthesize)
from .traversal import Hit, Ray, first_hit, grid_march, transmittance
from .voxelizer import Box, PlaneSlab, PolylineTube, Sphere, place_object, voxelize

__version__ = "0.1.0"

__all__ = [
    "Characteristic", "GridCoord", "Light", "ObjectModel", "Pose", "SceneVoxel", "WorldGrid",
    "pose_to_world", "world_to_grid", "ShadeConfig", "combine", "direct_light",
    "estimate_normal", "shade", "shadow_factor", "Ball", "Cone", "FrameUpdate", "Frustum",
    "LightUpdate", "Observer", "Parallelepiped", "SceneState", "ViewSpace",
    "VolumetricRepresentation", "apply_frame", "build_view_space", "run_scenario", "sight_rays",
    "synthesize", "Hit", "Ray", "first_hit", "grid_march", "transmittance", "Box", "PlaneSlab",
    "PolylineTube", "Sphere", "place_object", "voxelize"
]
