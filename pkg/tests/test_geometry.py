import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize
from scipy.spatial.transform import Rotation as R_

from robust_handeye.geometry import (Pose, RigidTransform, Rotation, SimilarityTransform,
                                     average_rotations, compose, conjugate_pose, inverse,
                                     rotation_angle_between, so3_exp)

finite = st.floats(-10, 10, allow_nan=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)
quat = st.tuples(*[st.floats(-1, 1, allow_nan=False)] * 4).filter(
    lambda q: np.linalg.norm(q) > 0.1).map(lambda q: Rotation(np.array(q)))
scale = st.floats(0.05, 20.0)
sim = st.builds(SimilarityTransform, quat, vec3, scale)
rigid = st.builds(RigidTransform, quat, vec3)


def yaw(deg):
    return Rotation.from_euler(0.0, 0.0, deg)


# -- Rotation ---------------------------------------------------------------

def test_matrix_matches_scipy():
    rng = np.random.default_rng(0)
    for q in rng.normal(size=(20, 4)):
        r = Rotation(q)
        ref = R_.from_quat(q, scalar_first=True).as_matrix()
        assert np.allclose(r.as_matrix(), ref, atol=1e-14)


def test_euler_convention():
    # Intrinsic ZYX: Rz(yaw) Ry(pitch) Rx(roll), built independently.
    r, p, y = np.radians([30.0, -20.0, 45.0])
    Rx = np.array([[1, 0, 0], [0, np.cos(r), -np.sin(r)], [0, np.sin(r), np.cos(r)]])
    Ry = np.array([[np.cos(p), 0, np.sin(p)], [0, 1, 0], [-np.sin(p), 0, np.cos(p)]])
    Rz = np.array([[np.cos(y), -np.sin(y), 0], [np.sin(y), np.cos(y), 0], [0, 0, 1]])
    got = Rotation.from_euler(30.0, -20.0, 45.0).as_matrix()
    assert np.allclose(got, Rz @ Ry @ Rx, atol=1e-14)
    assert np.allclose(Rotation.from_euler(30.0, -20.0, 45.0).as_euler(), [30, -20, 45])


def test_so3_exp_matches_scipy():
    for v in (np.zeros(3), np.array([1e-10, 0, 0]), np.array([0.3, -1.2, 2.0])):
        assert np.allclose(so3_exp(v), R_.from_rotvec(v).as_matrix(), atol=1e-14)


@given(quat)
def test_unit_norm_after_construction(r):
    assert abs(np.linalg.norm(r.quat) - 1.0) < 1e-12


@given(quat, quat)
def test_unit_norm_after_product(a, b):
    assert abs(np.linalg.norm((a * b).quat) - 1.0) < 1e-12


@given(quat)
def test_double_cover_equality(r):
    assert r == Rotation(-r.quat)
    assert rotation_angle_between(r, Rotation(-r.quat)) < 1e-6


def test_rotation_angle_examples():
    q = Rotation.from_euler(10, 20, 30)
    assert rotation_angle_between(q, q) < 1e-12
    assert rotation_angle_between(Rotation.identity(), yaw(90)) == pytest.approx(90.0, abs=1e-12)


@given(quat, quat)
def test_rotation_angle_range(a, b):
    assert 0.0 <= rotation_angle_between(a, b) <= 180.0 + 1e-9


def test_zero_quaternion_rejected():
    with pytest.raises(ValueError):
        Rotation(np.zeros(4))


# -- transforms -------------------------------------------------------------

def test_similarity_matrix_form():
    x = SimilarityTransform(yaw(90), [1.0, 2.0, 3.0], 2.0)
    M = x.as_matrix()
    assert np.allclose(M[:3, :3], 2.0 * yaw(90).as_matrix())
    assert np.allclose(M[:3, 3], [1, 2, 3])
    assert np.allclose(M[3], [0, 0, 0, 1])


@pytest.mark.parametrize("s", [0.0, -1.0, np.inf, np.nan])
def test_scale_must_be_positive(s):
    with pytest.raises(ValueError):
        SimilarityTransform(Rotation.identity(), np.zeros(3), s)


@given(sim)
def test_matrix_round_trip(x):
    y = SimilarityTransform.from_matrix(x.as_matrix())
    assert rotation_angle_between(x.rotation, y.rotation) < 1e-6
    assert np.allclose(x.translation, y.translation, atol=1e-10)
    assert abs(x.scale - y.scale) < 1e-10 * x.scale


def test_compose_identity_and_inverse():
    T = RigidTransform(Rotation.from_euler(5, 6, 7), [1.0, -2.0, 0.5])
    assert np.allclose(compose(RigidTransform.identity(), T).as_matrix(), T.as_matrix())
    assert np.allclose(compose(T, inverse(T)).as_matrix(), np.eye(4), atol=1e-12)


def test_compose_scales_multiply():
    a = SimilarityTransform(Rotation.identity(), np.zeros(3), 2.0)
    b = SimilarityTransform(Rotation.identity(), np.zeros(3), 3.0)
    c = compose(a, b)
    assert isinstance(c, SimilarityTransform)
    assert c.scale == pytest.approx(6.0, rel=1e-14)
    assert np.allclose(c.as_matrix(), a.as_matrix() @ b.as_matrix())


@given(rigid)
def test_rigid_inverse(T):
    assert np.abs((T @ T.inverse()).as_matrix() - np.eye(4)).max() < 1e-10


@given(sim)
def test_similarity_inverse_matches_matrix(x):
    assert np.allclose(x.inverse().as_matrix(), np.linalg.inv(x.as_matrix()), atol=1e-8)


@settings(max_examples=50)
@given(sim, sim, sim)
def test_compose_associative(a, b, c):
    lhs = compose(compose(a, b), c).as_matrix()
    rhs = compose(a, compose(b, c)).as_matrix()
    assert np.abs(lhs - rhs).max() < 1e-9 * max(1.0, np.abs(lhs).max())


def test_pose_timestamp_validation():
    Pose(0.0, RigidTransform.identity())
    for t in (-1.0, np.nan, np.inf):
        with pytest.raises(ValueError):
            Pose(t, RigidTransform.identity())


# -- conjugation ------------------------------------------------------------

def test_conjugate_identity_cases():
    a = RigidTransform(Rotation.from_euler(10, 20, 30), [1, 2, 3])
    x = SimilarityTransform(Rotation.from_euler(1, 2, 3), [0.1, 0.2, 0.3], 1.7)
    b = conjugate_pose(SimilarityTransform.identity(), a)
    assert np.allclose(b.as_matrix(), a.as_matrix())
    e = conjugate_pose(x, RigidTransform.identity())
    assert np.allclose(e.as_matrix(), np.eye(4), atol=1e-14)


def test_conjugate_worked_example():
    x = SimilarityTransform(yaw(90), [1.0, 0.0, 0.0], 2.0)
    a = RigidTransform(Rotation.identity(), [1.0, 0.0, 0.0])
    b = conjugate_pose(x, a)
    assert b.rotation.angle() < 1e-12
    assert np.allclose(b.translation, [0.0, -0.5, 0.0], atol=1e-15)


@given(sim, rigid)
def test_conjugate_matches_matrix_oracle(x, a):
    X = x.as_matrix()
    M = np.linalg.inv(X) @ a.as_matrix() @ X
    b = conjugate_pose(x, a)
    assert np.allclose(b.as_matrix(), M, atol=1e-8 * max(1.0, np.abs(M).max()))
    # The rotation magnitude is preserved.
    assert abs(b.rotation.angle() - a.rotation.angle()) < 1e-6


def test_conjugate_preserves_angle_tightly():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a = RigidTransform(Rotation.from_rotvec(rng.normal(size=3)), rng.normal(size=3))
        x = SimilarityTransform(Rotation(rng.normal(size=4)), rng.normal(size=3),
                                float(np.exp(rng.normal())))
        assert abs(conjugate_pose(x, a).rotation.angle() - a.rotation.angle()) < 1e-9


# -- rotation averaging -----------------------------------------------------

def test_average_examples():
    q = Rotation.from_euler(10, 20, 30)
    assert average_rotations([q]) == q
    assert average_rotations([q, Rotation(-q.quat)]) == q
    with pytest.raises(ValueError, match="no rotations"):
        average_rotations([])


def test_average_symmetric_yaws_against_brute_force():
    rs = [yaw(10), yaw(-10)]
    got = average_rotations(rs)
    assert got.angle() < 1e-9

    mats = [r.as_matrix() for r in rs]
    obj = lambda v: sum(np.sum((R_.from_rotvec(v).as_matrix() - M) ** 2) for M in mats)
    best = minimize(obj, np.array([0.1, -0.1, 0.2]), method="Nelder-Mead",
                    options=dict(xatol=1e-10, fatol=1e-14, maxiter=5000)).x
    assert rotation_angle_between(got, Rotation.from_rotvec(best)) < 1e-3


@settings(max_examples=50)
@given(st.lists(quat, min_size=1, max_size=6), st.lists(st.booleans(), min_size=6, max_size=6))
def test_average_sign_invariance(rs, flips):
    # Keep the inputs clustered so the mean is well defined.
    base = rs[0]
    rs = [base * Rotation.from_rotvec(0.3 * r.as_rotvec() / np.pi) for r in rs]
    flipped = [Rotation(-r.quat) if f else r for r, f in zip(rs, flips)]
    assert rotation_angle_between(average_rotations(rs), average_rotations(flipped)) < 1e-6
