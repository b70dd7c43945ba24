import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hemiscan.kinematics import (
    PANDA_DH,
    PANDA_HOME,
    PANDA_LIMITS,
    DHTable,
    IKParams,
    JointLimits,
    default_seeds,
    fk_matrix,
    forward_kinematics,
    ik_solve,
    jacobian,
    joint_frames,
    sigma_min,
)
from hemiscan.se3 import rot_x, rotation_distance


def oracle_fk(q):
    """Straight product of modified-DH link transforms, written out by hand."""
    m = np.eye(4)
    for a, d, alpha, th in zip(PANDA_DH.a, PANDA_DH.d, PANDA_DH.alpha, q):
        ca, sa, ct, s_t = math.cos(alpha), math.sin(alpha), math.cos(th), math.sin(th)
        link = np.array(
            [
                [ct, -s_t, 0.0, a],
                [s_t * ca, ct * ca, -sa, -d * sa],
                [s_t * sa, ct * sa, ca, d * ca],
                [0.0, 0.0, 0.0, 1.0],
            ]
        )
        m = m @ link
    flange = np.eye(4)
    flange[:3, :3] = rot_x(math.pi)
    flange[2, 3] = 0.107
    return m @ flange


joint_vectors = st.lists(st.floats(-1.0, 1.0), min_size=7, max_size=7).map(
    lambda u: PANDA_LIMITS.lower + (np.array(u) + 1.0) / 2.0 * (PANDA_LIMITS.upper - PANDA_LIMITS.lower)
)


def test_fk_zero_configuration():
    p = forward_kinematics(PANDA_DH, np.zeros(7))
    assert np.allclose(p.translation, [0.088, 0.0, 0.926], atol=1e-12)


def test_fk_home():
    p = forward_kinematics(PANDA_DH, PANDA_HOME)
    assert np.allclose(p.translation, [0.463, 0.0, 0.506], atol=2e-3)
    # hand points down, so the tool frame z axis points up
    assert p.rotation[2, 2] == pytest.approx(1.0, abs=1e-3)


@given(joint_vectors)
def test_fk_matches_oracle(q):
    assert np.max(np.abs(fk_matrix(PANDA_DH, q) - oracle_fk(q))) <= 1e-12


def test_fk_batch_equals_single(rng):
    qs = rng.uniform(PANDA_LIMITS.lower, PANDA_LIMITS.upper, size=(5, 7))
    batch = joint_frames(PANDA_DH, qs)
    for k in range(5):
        assert np.allclose(batch[k], joint_frames(PANDA_DH, qs[k]), atol=1e-15)


def test_dh_validation():
    with pytest.raises(ValueError):
        DHTable(a=(0.0,) * 6, d=(0.0,) * 7, alpha=(0.0,) * 7)
    with pytest.raises(ValueError):
        JointLimits(np.zeros(7), np.zeros(7))


def test_limits_contains_and_clamp():
    assert PANDA_LIMITS.contains(PANDA_HOME)
    q = PANDA_HOME.copy()
    q[3] = 0.5
    assert not PANDA_LIMITS.contains(q)
    assert PANDA_LIMITS.contains(PANDA_LIMITS.clamp(q))


def test_jacobian_central_differences(rng):
    h = 1e-6
    for q in rng.uniform(PANDA_LIMITS.lower, PANDA_LIMITS.upper, size=(20, 7)):
        j = jacobian(PANDA_DH, q)
        num = np.zeros((6, 7))
        for i in range(7):
            dq = np.zeros(7)
            dq[i] = h
            mp, mm = fk_matrix(PANDA_DH, q + dq), fk_matrix(PANDA_DH, q - dq)
            num[:3, i] = (mp[:3, 3] - mm[:3, 3]) / (2 * h)
            dr = (mp[:3, :3] - mm[:3, :3]) / (2 * h) @ fk_matrix(PANDA_DH, q)[:3, :3].T
            num[3:, i] = [dr[2, 1], dr[0, 2], dr[1, 0]]
        assert np.linalg.norm(j - num) / np.linalg.norm(num) <= 1e-5


def test_sigma_min_detects_singularity():
    q = np.zeros(7)
    q[3] = -0.0698  # elbow nearly straight: upper limit of joint 4
    stretched = sigma_min(jacobian(PANDA_DH, q))
    assert stretched < sigma_min(jacobian(PANDA_DH, PANDA_HOME))
    assert sigma_min(jacobian(PANDA_DH, PANDA_HOME)) > 1e-2


def test_default_seeds_shape():
    s = default_seeds(PANDA_HOME, PANDA_LIMITS, extra=[PANDA_HOME + 0.1])
    assert s.shape == (16, 7)
    assert np.allclose(s[0], PANDA_HOME + 0.1)
    assert np.all(PANDA_LIMITS.contains(s))


def test_ik_recovers_home_pose():
    target = forward_kinematics(PANDA_DH, PANDA_HOME)
    sols = ik_solve(PANDA_DH, target, default_seeds(PANDA_HOME, PANDA_LIMITS), PANDA_LIMITS)
    assert sols
    for q in sols:
        p = forward_kinematics(PANDA_DH, q)
        assert np.linalg.norm(p.translation - target.translation) <= 1e-4
        assert rotation_distance(p.rotation, target.rotation) <= 1e-3
        assert PANDA_LIMITS.contains(q)


def test_ik_unreachable_returns_empty():
    target = forward_kinematics(PANDA_DH, PANDA_HOME)
    far = type(target)(target.rotation, [3.0, 0.0, 0.5])
    assert ik_solve(PANDA_DH, far, default_seeds(PANDA_HOME, PANDA_LIMITS), PANDA_LIMITS, IKParams(restarts=4)) == []


def test_ik_rejects_empty_seed_set():
    with pytest.raises(ValueError):
        ik_solve(PANDA_DH, forward_kinematics(PANDA_DH, PANDA_HOME), np.zeros((0, 7)), PANDA_LIMITS)


def test_ik_is_deterministic():
    q = PANDA_HOME + 0.4
    target = forward_kinematics(PANDA_DH, q)
    seeds = default_seeds(PANDA_HOME, PANDA_LIMITS)
    a = ik_solve(PANDA_DH, target, seeds, PANDA_LIMITS)
    b = ik_solve(PANDA_DH, target, seeds, PANDA_LIMITS)
    assert len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-0.5, 0.5), min_size=7, max_size=7))
def test_ik_solutions_are_within_tolerance(delta):
    q = PANDA_LIMITS.clamp(PANDA_HOME + np.array(delta))
    target = forward_kinematics(PANDA_DH, q)
    sols = ik_solve(PANDA_DH, target, default_seeds(PANDA_HOME, PANDA_LIMITS), PANDA_LIMITS)
    assert sols
    for s in sols:
        p = forward_kinematics(PANDA_DH, s)
        assert np.linalg.norm(p.translation - target.translation) <= 1e-4
        assert rotation_distance(p.rotation, target.rotation) <= 1e-3
