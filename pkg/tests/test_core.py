import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from voxelworld.core import (Characteristic, GridCoord, Light, ObjectModel, Pose, WorldGrid,
                             pose_to_world, world_to_grid, wrap_angle)

finite = st.floats(-1e3, 1e3, allow_nan=False)
angle = st.floats(-20.0, 20.0, allow_nan=False)


def test_identity_pose():
    assert np.array_equal(pose_to_world(Pose(), (1, 2, 3)), [1, 2, 3])


def test_pure_translation():
    assert np.array_equal(pose_to_world(Pose((10, 0, 0)), (1, 0, 0)), [11, 0, 0])


def test_quarter_turn_about_z():
    out = pose_to_world(Pose(angles=(math.pi / 2, 0, 0)), (1, 0, 0))
    assert np.allclose(out, [0, 1, 0], atol=1e-9)


def test_rotation_order_is_z_y_x():
    # gamma about x first, then theta about y: x-axis -> (0, 0, -1) via Ry(pi/2)
    out = pose_to_world(Pose(angles=(0, math.pi / 2, 0)), (1, 0, 0))
    assert np.allclose(out, [0, 0, -1], atol=1e-12)
    out = pose_to_world(Pose(angles=(math.pi / 2, 0, math.pi / 2)), (0, 1, 0))
    # Rx turns y to z, Rz leaves z alone
    assert np.allclose(out, [0, 0, 1], atol=1e-12)


@pytest.mark.parametrize("a, expected", [
    (math.pi, math.pi), (-math.pi, math.pi), (0.0, 0.0), (3 * math.pi / 2, -math.pi / 2),
    (-3 * math.pi / 2, math.pi / 2), (5 * math.pi, math.pi),
])
def test_wrap_angle(a, expected):
    assert wrap_angle(a) == pytest.approx(expected, abs=1e-12)


@given(angle)
def test_wrapped_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


@settings(max_examples=200)
@given(st.tuples(finite, finite, finite), st.tuples(angle, angle, angle),
       st.lists(st.tuples(finite, finite, finite), min_size=2, max_size=2))
def test_pose_is_rigid(position, angles, pts):
    p = Pose(position, angles)
    a, b = (np.array(v) for v in pts)
    before = np.linalg.norm(a - b)
    after = np.linalg.norm(pose_to_world(p, a) - pose_to_world(p, b))
    assert abs(before - after) <= 1e-9 * max(1.0, before)


def test_world_to_grid_examples():
    g = WorldGrid((4, 4, 4))
    assert world_to_grid(g, (0.5, 0.5, 0.5)) == (0, 0, 0)
    assert world_to_grid(g, (4.0, 0, 0)) is None
    assert world_to_grid(g, (3.999, 0, 0)) == (3, 0, 0)
    g2 = WorldGrid((8, 8, 8), 0.5, (-2, -2, -2))
    assert world_to_grid(g2, (-1.75, -2.0, -1.25)) == (0, 0, 1)
    assert world_to_grid(g2, (-2.0001, 0, 0)) is None


def test_world_to_grid_round_trip_exhaustive():
    g = WorldGrid((5, 6, 7), 0.37, (-1.1, 2.3, 0.05))
    for c in np.ndindex(*g.dims):
        assert world_to_grid(g, g.center_of(c)) == GridCoord(*c)


@pytest.mark.parametrize("kwargs", [
    dict(color=(1.2, 0, 0)), dict(transparency=-0.1), dict(reflect_ratio=0.6, refract_ratio=0.5),
    dict(refractive_index=0.9), dict(color=(0, 0)),
])
def test_characteristic_rejects_out_of_range(kwargs):
    with pytest.raises(ValueError):
        Characteristic(**kwargs)


def test_light_validation():
    with pytest.raises(ValueError):
        Light((0, 0, 0), intensity=-1)
    with pytest.raises(ValueError):
        Light((0, 0, math.inf))


def test_world_grid_validation():
    with pytest.raises(ValueError):
        WorldGrid((4, 0, 4))
    with pytest.raises(ValueError):
        WorldGrid((4, 4, 4), cell_size=0)
    with pytest.raises(ValueError):
        WorldGrid((2, 2, 2), absorption=-1.0)


def test_scene_voxel_view():
    g = WorldGrid((2, 2, 2), absorption=0.25)
    ch = Characteristic(color=(0.5, 0.5, 0.5))
    g.occupant[1, 0, 0] = 7
    g.material[1, 0, 0] = g.material_index(ch)
    assert g.voxel((0, 0, 0)).occupant is None
    v = g.voxel((1, 0, 0))
    assert v.absorption == 0.25 and v.occupant == (7, ch)


def test_material_registry_dedupes():
    g = WorldGrid((1, 1, 1))
    assert g.material_index(Characteristic()) == g.material_index(Characteristic())
    assert g.material_index(Characteristic(color=(0, 0, 0))) == 1


def test_object_model_shapes():
    with pytest.raises(ValueError):
        ObjectModel(np.ones((2, 2, 2)), 1.0, [Characteristic()], material_index=np.zeros((2, 2)))
    with pytest.raises(ValueError):
        ObjectModel(np.ones((2, 2, 2)), 1.0, [Characteristic()],
                    material_index=np.full((2, 2, 2), 3))
    m = ObjectModel(np.ones((1, 2, 3)), 0.5, Characteristic())
    assert m.dims == (1, 2, 3) and m.count == 6
