import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize, minimize_scalar

from hemiscan.collision import (
    Box,
    Capsule,
    Sphere,
    box_box_distance,
    clearance,
    collides,
    default_scene,
    link_segments,
    min_clearance,
    pair_distance,
    point_box_sdf,
    probe_point_from_offset,
    segment_box_sdf,
    segment_segment_distance,
)
from hemiscan.kinematics import PANDA_DH, PANDA_HOME
from hemiscan.se3 import DomainError, EulerZYX, pose_from_euler

coords = st.floats(-1.0, 1.0, allow_nan=False)
points = st.tuples(coords, coords, coords).map(np.array)


def seg_seg_oracle(p1, q1, p2, q2):
    f = lambda x: np.linalg.norm(p1 + x[0] * (q1 - p1) - p2 - x[1] * (q2 - p2))
    g = np.linspace(0, 1, 41)
    s0, t0 = min(((s, t) for s in g for t in g), key=lambda x: f(x))
    res = minimize(f, [s0, t0], bounds=[(0, 1), (0, 1)], method="L-BFGS-B", options={"ftol": 1e-15, "gtol": 1e-12})
    return min(res.fun, f((s0, t0)))


def box_sdf_oracle(x, lo, hi):
    outside = np.maximum(np.maximum(lo - x, x - hi), 0.0)
    if np.any(outside > 0):
        return float(np.linalg.norm(outside))
    return -float(np.min(np.minimum(x - lo, hi - x)))


def test_parallel_and_crossing_segments():
    assert segment_segment_distance([0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]) == pytest.approx(1.0)
    assert segment_segment_distance([0, 0, 0], [1, 0, 0], [0.5, -1, 1], [0.5, 1, 1]) == pytest.approx(1.0)
    assert segment_segment_distance([0, 0, 0], [0, 0, 0], [3, 4, 0], [3, 4, 0]) == pytest.approx(5.0)


@settings(max_examples=60, deadline=None)
@given(points, points, points, points)
def test_segment_distance_matches_optimizer(p1, q1, p2, q2):
    d = float(segment_segment_distance(p1, q1, p2, q2))
    assert d == pytest.approx(seg_seg_oracle(p1, q1, p2, q2), abs=1e-6)


@given(points, points)
def test_segment_distance_symmetry(a, b):
    c, d = np.array([0.1, 0.2, 0.3]), np.array([-0.4, 0.5, 0.0])
    assert segment_segment_distance(a, b, c, d) == pytest.approx(float(segment_segment_distance(c, d, b, a)), abs=1e-12)


def test_point_box_sdf_values():
    lo, hi = np.zeros(3), np.ones(3)
    assert point_box_sdf([0.5, 0.5, 0.5], lo, hi) == pytest.approx(-0.5)
    assert point_box_sdf([2.0, 0.5, 0.5], lo, hi) == pytest.approx(1.0)
    assert point_box_sdf([2.0, 2.0, 0.5], lo, hi) == pytest.approx(np.sqrt(2))


@given(points)
def test_point_box_sdf_oracle(x):
    lo, hi = np.array([-0.2, -0.3, 0.0]), np.array([0.4, 0.1, 0.25])
    assert point_box_sdf(x, lo, hi) == pytest.approx(box_sdf_oracle(x, lo, hi), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(points, points)
def test_segment_box_sdf_matches_scalar_search(p, q):
    lo, hi = np.array([-0.2, -0.3, 0.0]), np.array([0.4, 0.1, 0.25])
    f = lambda t: box_sdf_oracle(p + t * (q - p), lo, hi)
    ts = np.linspace(0, 1, 2001)
    k = int(np.argmin([f(t) for t in ts]))
    a, b = ts[max(k - 1, 0)], ts[min(k + 1, len(ts) - 1)]
    res = minimize_scalar(f, bounds=(a, b), method="bounded", options={"xatol": 1e-12})
    expect = min(res.fun, f(ts[k]), f(0.0), f(1.0))
    assert float(segment_box_sdf(p, q, lo, hi)) == pytest.approx(expect, abs=1e-7)


def test_segment_box_broadcast():
    lo = np.array([[0, 0, 0], [2, 2, 2]], dtype=float)
    hi = lo + 1
    d = segment_box_sdf([-1, 0.5, 0.5], [-0.5, 0.5, 0.5], lo, hi)
    assert d.shape == (2,)
    assert d[0] == pytest.approx(0.5)


def test_pair_distance_shapes():
    s = Sphere([0, 0, 0], 0.1)
    c = Capsule([1, -1, 0], [1, 1, 0], 0.2)
    b = Box([2, -1, -1], [3, 1, 1])
    assert pair_distance(s, c) == pytest.approx(0.7)
    assert pair_distance(c, b) == pytest.approx(0.8)
    assert pair_distance(b, s) == pytest.approx(1.9)
    assert box_box_distance(b, Box([2.5, 0, 0], [4, 2, 2])) == pytest.approx(-0.5)


def test_shape_validation():
    with pytest.raises(ValueError):
        Sphere([0, 0, 0], 0.0)
    with pytest.raises(ValueError):
        Box([0, 0, 0], [1, 0, 1])


def test_default_scene_layout():
    sc = default_scene(riser_height=0.1)
    names = [getattr(o, "name", "") for o in sc.obstacles]
    assert names == ["table", "fixture", "riser"]
    assert sc.dut_origin == pytest.approx([0.5, 0.0, 0.155])
    assert default_scene().dut_origin[2] == pytest.approx(0.055)
    assert len(default_scene().obstacles) == 2


def test_self_pairs_skip_neighbours():
    sc = default_scene()
    assert all(j - i >= 3 for i, j in sc.self_pairs)
    assert (0, 3) in sc.self_pairs and (0, 2) not in sc.self_pairs


def test_home_is_collision_free():
    sc = default_scene(riser_height=0.1)
    assert not collides(PANDA_DH, PANDA_HOME, sc)
    assert min_clearance(PANDA_DH, PANDA_HOME, sc) > 0.01


def test_arm_into_table_collides():
    q = PANDA_HOME.copy()
    q[1] = 1.7  # shoulder pitched far forward drives the hand into the table
    sc = default_scene()
    assert collides(PANDA_DH, q, sc)
    with pytest.raises(DomainError):
        min_clearance(PANDA_DH, q, sc)
    assert not collides(PANDA_DH, q, sc.without_obstacles())


def test_extra_obstacle_changes_verdict():
    sc = default_scene()
    ee = link_segments(PANDA_DH, PANDA_HOME, sc)[-1, 1]
    blocked = sc.with_obstacles([Sphere(ee, 0.02)])
    assert collides(PANDA_DH, PANDA_HOME, blocked)


def test_batched_clearance_matches_single(rng):
    sc = default_scene(riser_height=0.1)
    qs = PANDA_HOME + rng.normal(scale=0.3, size=(6, 7))
    batch = clearance(PANDA_DH, qs, sc)
    assert np.allclose(batch, [clearance(PANDA_DH, q, sc) for q in qs], atol=1e-15)


def test_probe_point_from_offset():
    off = pose_from_euler(EulerZYX(0.0), [0.0, 0.0, 0.05])
    assert probe_point_from_offset(off) == pytest.approx([0.0, 0.0, -0.05])
    # the probe point maps onto the probe frame origin
    rotated = pose_from_euler(EulerZYX.from_degrees(-100.0), [0.02, 0.03, 0.05])
    pp = probe_point_from_offset(rotated)
    assert rotated.transform_point(pp) == pytest.approx([0, 0, 0], abs=1e-15)
