"""Geometry layer: poses, footprints, overlap tests, workspace checks.

The overlap verdicts are cross-checked against two independent oracles, a
polygon clipping area and Monte Carlo point membership, so the separating
axis implementation never certifies itself.
"""

import math

import numpy as np
import pytest

from lgplan.geometry import (
    COLLISION_EPS,
    Footprint,
    GeometryError,
    Pose,
    Workspace,
    footprints_overlap,
    in_workspace,
    intersection_area,
    normalize_angle,
    poses_close,
    transform_footprint,
)


def random_placed(rng, center_span=1.0):
    n = int(rng.integers(3, 8))
    radius = float(rng.uniform(0.05, 0.25))
    fp = Footprint.regular(n, radius)
    pose = Pose(rng.uniform(0, center_span), rng.uniform(0, center_span),
                rng.uniform(-math.pi, math.pi))
    return transform_footprint(fp, pose)


def test_normalize_angle_maps_into_half_open_interval():
    assert normalize_angle(0.0) == 0.0
    assert normalize_angle(math.pi) == pytest.approx(math.pi)
    assert normalize_angle(-math.pi) == pytest.approx(math.pi)
    assert normalize_angle(3 * math.pi) == pytest.approx(math.pi)
    assert normalize_angle(2 * math.pi) == pytest.approx(0.0, abs=1e-12)
    rng = np.random.default_rng(3)
    for _ in range(200):
        t = float(rng.uniform(-50, 50))
        n = normalize_angle(t)
        assert -math.pi < n <= math.pi
        # same point on the circle
        assert abs(math.sin(n) - math.sin(t)) < 1e-9
        assert abs(math.cos(n) - math.cos(t)) < 1e-9


def test_pose_normalizes_theta_and_rejects_negative_level():
    assert Pose(0, 0, 3 * math.pi).theta == pytest.approx(math.pi)
    with pytest.raises(GeometryError):
        Pose(0, 0, 0, -1)


def test_poses_close_wraps_angle():
    assert poses_close(Pose(1, 2, math.pi), Pose(1, 2, -math.pi))
    assert not poses_close(Pose(1, 2, 0, 0), Pose(1, 2, 0, 1))


def test_transform_identity_and_translation():
    fp = Footprint.box(1.0, 1.0)
    verts = transform_footprint(fp, Pose(0, 0, 0))
    assert np.allclose(sorted(map(tuple, verts)),
                       [(-0.5, -0.5), (-0.5, 0.5), (0.5, -0.5), (0.5, 0.5)])
    shifted = transform_footprint(fp, Pose(2.0, -1.0, 0))
    assert np.allclose(shifted, verts + np.array([2.0, -1.0]))


def test_transform_quarter_turn():
    fp = Footprint.box(1.0, 1.0)
    turned = transform_footprint(fp, Pose(0, 0, math.pi / 2))
    # (0.5, 0.5) -> (-0.5, 0.5)
    assert any(np.allclose(v, (-0.5, 0.5)) for v in turned)
    assert any(np.allclose(v, (-0.5, -0.5)) for v in turned)


def test_transform_is_rigid():
    rng = np.random.default_rng(11)
    fp = Footprint.regular(7, 0.3)
    base = transform_footprint(fp, Pose(0, 0, 0))
    d0 = np.linalg.norm(base[:, None, :] - base[None, :, :], axis=-1)
    for _ in range(50):
        pose = Pose(rng.uniform(-5, 5), rng.uniform(-5, 5),
                    rng.uniform(-10, 10))
        moved = transform_footprint(fp, pose)
        d1 = np.linalg.norm(moved[:, None, :] - moved[None, :, :], axis=-1)
        assert np.allclose(d0, d1, atol=1e-9)


def test_overlap_basic_cases():
    fp = Footprint.box(1.0, 1.0)
    a = transform_footprint(fp, Pose(0, 0))
    assert not footprints_overlap(a, transform_footprint(fp, Pose(2.0, 0)))
    assert footprints_overlap(a, transform_footprint(fp, Pose(0.5, 0)))
    # exact edge contact is not a collision
    assert not footprints_overlap(a, transform_footprint(fp, Pose(1.0, 0)))
    assert footprints_overlap(a, a)


def test_overlap_is_symmetric():
    rng = np.random.default_rng(7)
    for _ in range(300):
        a = random_placed(rng)
        b = random_placed(rng)
        assert footprints_overlap(a, b) == footprints_overlap(b, a)


def test_overlap_agrees_with_clip_area_oracle():
    """SAT verdict vs clipped intersection area on random convex pairs.

    Pairs whose intersection area sits inside the penetration tolerance
    band are skipped; there the verdict is legitimately either way.
    """
    rng = np.random.default_rng(19)
    checked = 0
    for _ in range(1000):
        a = random_placed(rng)
        b = random_placed(rng)
        area = intersection_area(a, b)
        if 0.0 < area < 1e-5:
            continue
        checked += 1
        assert footprints_overlap(a, b) == (area > 0.0), (a, b, area)
    assert checked > 900


def test_clip_area_matches_point_membership():
    # Monte Carlo membership estimate keeps the clipping oracle honest
    rng = np.random.default_rng(23)
    for _ in range(20):
        a = random_placed(rng)
        b = random_placed(rng)
        area = intersection_area(a, b)
        lo = np.minimum(a.min(axis=0), b.min(axis=0))
        hi = np.maximum(a.max(axis=0), b.max(axis=0))
        pts = rng.uniform(lo, hi, size=(4000, 2))

        def inside(poly, p):
            nxt = np.roll(poly, -1, axis=0)
            cross = ((nxt[:, 0] - poly[:, 0]) * (p[:, None, 1] - poly[:, 1])
                     - (nxt[:, 1] - poly[:, 1]) * (p[:, None, 0] - poly[:, 0]))
            return (cross >= -1e-12).all(axis=1)

        frac = float((inside(a, pts) & inside(b, pts)).mean())
        box_area = float(np.prod(hi - lo))
        est = frac * box_area
        se = box_area * math.sqrt(max(frac * (1 - frac), 1e-6) / 4000)
        assert abs(est - area) < max(4 * se, 1e-4)


def test_in_workspace_boundary_is_inclusive():
    ws = Workspace(0, 1, 0, 1)
    fp = Footprint.box(0.2, 0.2)
    assert in_workspace(transform_footprint(fp, Pose(0.5, 0.5)), ws)
    assert in_workspace(transform_footprint(fp, Pose(0.1, 0.1)), ws)
    assert not in_workspace(transform_footprint(fp, Pose(0.09, 0.5)), ws)
    assert not in_workspace(transform_footprint(fp, Pose(0.5, 0.95)), ws)


def test_footprint_constructors_and_properties():
    box = Footprint.box(0.4, 0.2)
    assert box.area == pytest.approx(0.08)
    assert box.centroid == pytest.approx((0.0, 0.0))
    assert box.circumradius == pytest.approx(math.hypot(0.2, 0.1))
    hexagon = Footprint.regular(6, 0.1)
    assert len(hexagon) == 6
    assert hexagon.area == pytest.approx(6 * 0.5 * 0.1 * 0.1 * math.sin(math.pi / 3))
    off = Footprint.centered([(10, 10), (11, 10), (11, 11), (10, 11)])
    assert off.centroid == pytest.approx((0.0, 0.0))


def test_footprint_rejects_bad_polygons():
    with pytest.raises(GeometryError):
        Footprint([(0, 0), (1, 0)])
    with pytest.raises(GeometryError):
        Footprint([(0, 0), (1, 0), (2, 0)])  # zero area
    with pytest.raises(GeometryError):
        Footprint([(0, 0), (0, 1), (1, 0)])  # clockwise
    with pytest.raises(GeometryError):
        # concave arrowhead
        Footprint([(0, 0), (2, 0), (1, 0.2), (1, 1)])
    with pytest.raises(GeometryError):
        Footprint.regular(2, 0.1)
    with pytest.raises(GeometryError):
        Footprint.box(0.1, 0.0)


def test_workspace_validation_and_json():
    with pytest.raises(GeometryError):
        Workspace(1, 1, 0, 2)
    ws = Workspace(0, 2, -1, 1)
    assert ws.width == 2 and ws.height == 2
    assert ws.diagonal == pytest.approx(math.hypot(2, 2))
    assert Workspace.from_json(ws.to_json()) == ws


def test_pose_json_round_trip():
    p = Pose(0.25, -0.5, 1.25, 2)
    assert Pose.from_json(p.to_json()) == p


def test_backends_agree():
    """Compiled and pure Python kernels must be interchangeable."""
    from lgplan import _kernels_py

    compiled = pytest.importorskip("lgplan._kernels")
    assert _kernels_py.BACKEND == "python"
    assert compiled.BACKEND == "compiled"

    rng = np.random.default_rng(31)
    polys = [random_placed(rng) for _ in range(40)]
    flat = np.concatenate(polys)
    offsets = np.zeros(len(polys) + 1, dtype=np.intp)
    for i, p in enumerate(polys):
        offsets[i + 1] = offsets[i] + p.shape[0]
    aabbs = np.array([[p[:, 0].min(), p[:, 0].max(),
                       p[:, 1].min(), p[:, 1].max()] for p in polys])

    fp = Footprint.regular(5, 0.2)
    for _ in range(200):
        x, y, t = rng.uniform(-1, 2), rng.uniform(-1, 2), rng.uniform(-4, 4)
        va = compiled.transform_polygon(fp.verts, x, y, math.cos(t), math.sin(t))
        vb = _kernels_py.transform_polygon(fp.verts, x, y, math.cos(t), math.sin(t))
        assert np.allclose(va, vb, atol=1e-12)

    for i in range(len(polys)):
        for j in range(len(polys)):
            assert (compiled.polys_overlap(polys[i], polys[j], COLLISION_EPS)
                    == _kernels_py.polys_overlap(polys[i], polys[j], COLLISION_EPS))
        assert (compiled.poly_in_bounds(polys[i], 0.0, 1.0, 0.0, 1.0)
                == _kernels_py.poly_in_bounds(polys[i], 0.0, 1.0, 0.0, 1.0))
        hits_a = np.asarray(compiled.collide_indices(
            polys[i], flat, offsets, aabbs, COLLISION_EPS))
        hits_b = np.asarray(_kernels_py.collide_indices(
            polys[i], flat, offsets, aabbs, COLLISION_EPS))
        assert np.array_equal(hits_a, hits_b)
