import math

import numpy as np
import pytest

from conftest import SCENES, put
from oracles import fine_cells
from voxelworld import synthesis
from voxelworld.core import Characteristic, Light, Pose, WorldGrid
from voxelworld.io import load_scene
from voxelworld.shading import ShadeConfig
from voxelworld.synthesis import (SOURCE_OBJECT, SOURCE_SCENE, Ball, Cone, FrameError,
                                  FrameUpdate, Frustum, LightUpdate, Observer, Parallelepiped,
                                  SceneState, apply_frame, build_view_space, ray_coverage,
                                  run_scenario, sight_rays)
from voxelworld.traversal import march_cells
from voxelworld.voxelizer import Box, Sphere, place_object, voxelize


def observer_basis(angles):
    """Columns are the observer's x, y, z axes in world coordinates."""
    psi, theta, gamma = angles
    c, s = math.cos, math.sin
    rz = np.array([[c(psi), -s(psi), 0], [s(psi), c(psi), 0], [0, 0, 1]])
    ry = np.array([[c(theta), 0, s(theta)], [0, 1, 0], [-s(theta), 0, c(theta)]])
    rx = np.array([[1, 0, 0], [0, c(gamma), -s(gamma)], [0, s(gamma), c(gamma)]])
    return rz @ ry @ rx


def test_parallelepiped_members_and_rays():
    world = WorldGrid((10, 10, 10))
    obs = Observer(Pose((2, 1.5, 0)))
    vs = build_view_space(obs, Parallelepiped((4, 3, 2)), world)
    assert vs.member_count == 24
    rays = sight_rays(obs, vs)
    assert len(rays) == 12
    assert all(r.direction[2] > 0 for r in rays)


def test_ball_member_count():
    world = WorldGrid((32, 32, 32))
    obs = Observer(Pose((16.3, 15.8, 16.1)))
    vs = build_view_space(obs, Ball(8.0), world)
    volume = 4 / 3 * math.pi * 8 ** 3
    assert abs(vs.member_count - volume) <= 0.05 * volume


def test_frustum_members_match_brute_force():
    world = WorldGrid((40, 40, 40))
    angles = (0.3, -1.2, 0.4)
    obs = Observer(Pose((20.2, 19.7, 21.1), angles), (math.pi / 6, math.pi / 6))
    vs = build_view_space(obs, Frustum(0.0, 10.0), world)
    basis = observer_basis(angles)
    t = math.tan(math.pi / 6)
    count = 0
    for c in np.ndindex(world.dims):
        x, y, z = basis.T @ (np.array(c) + 0.5 - obs.position)
        count += 0 <= z <= 10 and abs(x) <= z * t and abs(y) <= z * t
    assert count > 300
    assert vs.member_count == count


def test_shape_outside_world_is_empty():
    world = WorldGrid((8, 8, 8))
    obs = Observer(Pose((50, 50, 50)))
    vs = build_view_space(obs, Cone(0.3, 0, 5), world)
    assert vs.member_count == 0
    with pytest.raises(ValueError):
        sight_rays(obs, vs)
    P = synthesis.synthesize(world, obs, Cone(0.3, 0, 5), [], ShadeConfig())
    assert P.census() == {"object_cells": 0, "scene_cells": 0}


def test_single_cell_far_cap_gives_one_axis_ray():
    world = WorldGrid((1, 1, 10))
    obs = Observer(Pose((0.5, 0.5, 12.0), (0, math.pi, 0)), (0.01, 0.01))
    assert np.allclose(obs.view_dir, [0, 0, -1])
    vs = build_view_space(obs, Frustum(0.0, 11.9), world)
    assert vs.member_count == 10
    rays = sight_rays(obs, vs)
    assert len(rays) == 1
    assert np.array_equal(rays[0].direction, [0, 0, -1])


@pytest.mark.parametrize("seed", range(5))
def test_random_frustum_coverage(seed):
    rng = np.random.default_rng(seed)
    world = WorldGrid((48, 48, 48))
    sector = tuple(rng.uniform(0.2, 0.9, 2))
    obs = Observer(Pose(rng.uniform(10, 38, 3), rng.uniform(-math.pi, math.pi, 3)), sector)
    vs = build_view_space(obs, Frustum(rng.uniform(0, 3), rng.uniform(15, 40)), world)
    fraction, missed = ray_coverage(obs, vs)
    assert fraction >= 0.99, missed[:20]


def test_empty_world_has_only_scene_cells():
    world = WorldGrid((16, 16, 16), absorption=0.2)
    obs = Observer(Pose((8, 8, 0.5)), (0.5, 0.5))
    shape = Frustum(0, 14)
    P = synthesis.synthesize(world, obs, shape, [Light((8, 8, 20))], ShadeConfig())
    vs = build_view_space(obs, shape, world)
    assert P.census() == {"object_cells": 0, "scene_cells": vs.member_count}
    assert np.allclose(P.color[P.source == SOURCE_SCENE], math.exp(-0.2))


def test_single_cell_hand_computed():
    world = WorldGrid((3, 3, 12))
    put(world, [(1, 1, 3)], 5, Characteristic((1.0, 0.5, 0.25), transparency=0.3))
    obs = Observer(Pose((1.5, 1.5, 11.5), (0, math.pi, 0)), (0.05, 0.05))
    # isolated voxel: normal is -incoming = +z, light straight above so the cosine is 1
    P = synthesis.synthesize(world, obs, Frustum(0, 11), [Light((1.5, 1.5, 20.0))],
                             ShadeConfig((0.1, 0.1, 0.1)))
    assert P.object_cells() == {(1, 1, 3)}
    i = (1, 1, 3) - P.offset
    assert np.allclose(P.color[tuple(i)], [1.0, 0.55, 0.275], atol=1e-6)
    assert P.object_id[tuple(i)] == 5
    assert P.transparency[tuple(i)] == np.float32(0.3)


def first_member_occupant(cells, vs, world):
    for c in cells:
        w = tuple(c + vs.lo)
        if vs.membership[tuple(c)] and world.occupant[w] >= 0:
            return w
    return None


def test_sphere_plane_object_cells_match_fine_sampling():
    state = load_scene(SCENES[[p.name for p in SCENES].index("sphere_plane.json")])
    world, obs = state.world, state.observer
    vs = build_view_space(obs, state.display, world)
    P = state.render()
    expected, grazed = set(), set()
    spacing = world.cell_size / 100
    for d in synthesis._sight_dirs(obs, vs):
        cells, times = march_cells(obs.position, d, vs.origin, vs.cell_size, vs.dims)
        hit = first_member_occupant(cells, vs, world)
        fine, _ = fine_cells(obs.position, d, vs.origin, vs.cell_size, vs.dims, spacing)
        ref = first_member_occupant(fine, vs, world)
        if hit != ref:
            # sampling can only miss a cell the ray clips by less than its spacing
            k = [tuple(c + vs.lo) for c in cells].index(hit)
            assert times[k, 1] - times[k, 0] < spacing
            grazed.add(hit)
        elif ref is not None:
            expected.add(ref)
    got = {tuple(c + P.offset) for c in P.object_cells()}
    assert expected <= got and got - expected <= grazed
    assert len(grazed) < 0.01 * len(got)
    assert len(got) > 500
    assert {int(v) for v in P.object_id[P.source == SOURCE_OBJECT]} == {1, 2}


def random_world(rng, n=24):
    world = WorldGrid((n, n, n), absorption=0.02)
    for k in range(6):
        r = rng.uniform(1.5, 4)
        mat = Characteristic(tuple(rng.random(3)), rng.random(), 0.3 * (k % 2), 0.2 * (k % 3 == 0),
                             1.4)
        obj = voxelize(Sphere((0, 0, 0), r), 1.0, mat).with_pose(Pose(rng.uniform(4, n - 4, 3)))
        place_object(world, obj, k)
    return world


def test_visibility_against_full_march(rng):
    world = random_world(rng)
    obs = Observer(Pose((12.3, 11.9, -2.0)), (0.6, 0.6))
    shape = Frustum(0.0, 30.0)
    vs = build_view_space(obs, shape, world)
    P = synthesis.synthesize(world, obs, shape, [Light((3.3, 4.1, -6.2))], ShadeConfig())
    firsts = set()
    for d in synthesis._sight_dirs(obs, vs):
        cells, _ = march_cells(obs.position, d, vs.origin, vs.cell_size, vs.dims)
        hit = first_member_occupant(cells, vs, world)
        if hit is not None:
            firsts.add(hit)
    assert {tuple(c + P.offset) for c in P.object_cells()} == firsts


def test_parallel_matches_serial(rng):
    world = random_world(rng, 32)
    obs = Observer(Pose((16.1, 15.9, 0.2)), (0.7, 0.7))
    shape = Frustum(0.5, 40)
    lights = [Light((3, 30, 2)), Light((29.5, 2.25, 5), (0.5, 0.5, 1), 0.8)]
    cfg = ShadeConfig(light_transmittance_mode=True)
    serial = synthesis.synthesize(world, obs, shape, lights, cfg, threads=1)
    for threads in (2, 4, 8):
        assert synthesis.synthesize(world, obs, shape, lights, cfg, threads=threads) == serial


def test_translating_everything_translates_p():
    def build(shift):
        world = WorldGrid((48, 48, 48))
        s = np.array(shift, float) + 8
        obj = voxelize(Sphere((0, 0, 0), 4.0), 1.0, Characteristic((0.9, 0.6, 0.3)))
        place_object(world, obj.with_pose(Pose(s + (12.25, 11.75, 14.5))), 0)
        place_object(world, voxelize(Box((0, 0, 0), (20, 20, 2)), 1.0)
                     .with_pose(Pose(s + (2, 2, 6))), 1)
        obs = Observer(Pose(s + (12.25, 12.5, 28.0), (0, math.pi, 0)), (0.5, 0.5))
        lights = [Light(s + (20.5, 4.25, 30.0))]
        return synthesis.synthesize(world, obs, Frustum(0, 25), lights, ShadeConfig())

    a, b = build((0, 0, 0)), build((3, 2, 1))
    assert a.census()["object_cells"] > 50
    assert a.dims == b.dims
    assert np.array_equal(b.origin - a.origin, [3, 2, 1])
    for f in ("source", "color", "transparency", "object_id"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def small_state():
    world = WorldGrid((16, 8, 8))
    st = SceneState(world, lights=[Light((8, 4, 20))],
                    observer=Observer(Pose((8, 4, 0.25)), (0.6, 0.6)), display=Frustum(0, 12))
    st.add_object(1, voxelize(Box((0, 0, 0), (2, 2, 2)), 1.0).with_pose(Pose((3, 3, 3))))
    st.add_object(2, voxelize(Sphere((0, 0, 0), 1.5), 1.0).with_pose(Pose((11.5, 4.5, 4.5))))
    return st


def test_empty_update_is_identity():
    st = small_state()
    new = apply_frame(st, FrameUpdate())
    assert new.world == st.world
    assert new.lights == st.lights and new.observer == st.observer
    assert new.world is not st.world


def test_move_by_one_cell():
    st = small_state()
    new = apply_frame(st, FrameUpdate({1: Pose((4, 3, 3))}))
    before = st.world.occupied_cells(1)
    assert new.world.occupied_cells(1) == {(l + 1, m, n) for l, m, n in before}
    assert new.world.occupied_cells(2) == st.world.occupied_cells(2)
    assert st.world.occupied_cells(1) == before  # input untouched


def test_move_and_back(rng):
    st = small_state()
    home = st.objects[1].pose
    for i in range(20):
        if i % 2:
            pose = Pose(rng.uniform(0, 12, 3), rng.uniform(-3, 3, 3))
        else:
            pose = Pose(rng.integers(0, 12, 3).astype(float))
        away = apply_frame(st, FrameUpdate({1: pose}))
        back = apply_frame(away, FrameUpdate({1: home}))
        assert back.world == st.world


def test_bad_update_rejects_whole_frame():
    st = small_state()
    snapshot = st.world.copy()
    with pytest.raises(KeyError):
        apply_frame(st, FrameUpdate({1: Pose((5, 3, 3)), 99: Pose()}))
    with pytest.raises(KeyError):
        apply_frame(st, FrameUpdate(lights={3: LightUpdate(intensity=0.5)}))
    with pytest.raises(KeyError):
        apply_frame(st, FrameUpdate(medium=(((16, 0, 0), 0.1),)))
    assert st.world == snapshot


def test_light_and_medium_updates():
    st = small_state()
    new = apply_frame(st, FrameUpdate(lights={0: LightUpdate(color=(1, 0, 0))},
                                      medium=(((1, 2, 3), 0.7),)))
    assert new.lights[0].color == (1, 0, 0) and np.array_equal(new.lights[0].position, [8, 4, 20])
    assert new.world.absorption[1, 2, 3] == 0.7 and st.world.absorption[1, 2, 3] == 0


def test_scenarios():
    st = small_state()
    assert run_scenario(st, []) == []
    a, b = run_scenario(st, [FrameUpdate(), FrameUpdate()])
    assert a == b and a == st.render()
    with pytest.raises(FrameError) as e:
        run_scenario(st, [FrameUpdate(), FrameUpdate({7: Pose()})])
    assert e.value.index == 1
