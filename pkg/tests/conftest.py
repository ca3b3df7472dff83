import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from voxelworld import synthesis
from voxelworld.core import Characteristic, WorldGrid
from voxelworld.synthesis import set_identity_violations

ROOT = Path(__file__).resolve().parent.parent
SCENES = sorted((ROOT / "scenes").glob("*.json"))
SCENE_FILES = [p for p in SCENES if not p.name.endswith("_frames.json")]

ACCEPTANCE = []  # (criterion, passed, detail)
SYNTHESIZED = {"volumes": 0, "violations": 0}


@pytest.fixture(autouse=True)
def _check_every_volume(monkeypatch):
    """Every synthesized object cell must be a view-space member holding that object."""
    original = synthesis.synthesize

    def checked(world, obs, shape, lights, cfg, threads=1, view_space=None):
        vs = view_space or synthesis.build_view_space(obs, shape, world)
        P = original(world, obs, shape, lights, cfg, threads, vs)
        bad = set_identity_violations(P, vs, world)
        SYNTHESIZED["volumes"] += 1
        SYNTHESIZED["violations"] += bad
        assert bad == 0, f"{bad} object cells outside member occupant cells"
        return P

    monkeypatch.setattr(synthesis, "synthesize", checked)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def put(grid: WorldGrid, cells, object_id=0, material=None):
    """Mark cells occupied directly, bypassing the voxelizer."""
    idx = grid.material_index(material or Characteristic())
    for c in cells:
        grid.occupant[tuple(c)] = object_id
        grid.material[tuple(c)] = idx
    return grid


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    terminalreporter.write_line(
        f"volumes checked for set identity: {SYNTHESIZED['volumes']}, "
        f"violations: {SYNTHESIZED['violations']}")


def pytest_collection_modifyitems(items):
    # acceptance runs last so the set-identity count covers the whole session
    items.sort(key=lambda it: it.path.name == "test_acceptance.py")
