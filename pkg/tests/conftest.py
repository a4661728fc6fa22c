import json
import pathlib

import pytest

from lgplan.geometry import Footprint, Pose, Workspace
from lgplan.scene import Scene, SceneObject

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def load_fixture(name):
    with open(FIXTURES / name, encoding="utf-8") as fh:
        return json.load(fh)


def make_scene(entries, size=1.0, seed=0):
    """Build a scene from (id, name, footprint, pose) rows."""
    ws = Workspace(0.0, size, 0.0, size)
    objects = tuple(SceneObject(oid, name, "gray", fp)
                    for oid, name, fp, _ in entries)
    poses = {oid: pose for oid, _, _, pose in entries}
    return Scene(ws, objects, poses, seed=seed)


@pytest.fixture
def lone_box_scene():
    return make_scene([(1, "box", Footprint.box(0.1, 0.1), Pose(0.5, 0.5))])


@pytest.fixture
def two_tower_scene():
    # hexagon sitting on a flat box, plus one free disk off to the side
    return make_scene([
        (1, "base", Footprint.box(0.2, 0.2), Pose(0.3, 0.3)),
        (2, "hat", Footprint.regular(6, 0.05), Pose(0.3, 0.3, 0.0, 1)),
        (3, "free", Footprint.regular(8, 0.04), Pose(0.8, 0.8)),
    ])
