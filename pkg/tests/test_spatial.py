import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.transform import Rotation

from zerog.errors import NonPositiveMass, NonSPDInertia
from zerog.spatial import (block_inertia, check_inertia_tensor, cross3, is_rotation,
                           orthonormalize, quat_derivative, quat_mul, quat_normalize,
                           quat_to_rot, rk4_step, rot_to_quat, rot_x, rot_y, rot_z,
                           sensor_transform, sensor_transform_inv, skew)

vec3 = arrays(np.float64, 3, elements=st.floats(-10, 10))


@given(vec3, vec3)
def test_skew_matches_cross(a, b):
    assert np.allclose(skew(a) @ b, np.cross(a, b), atol=1e-12)
    assert np.allclose(cross3(a, b), np.cross(a, b), atol=1e-12)
    assert np.allclose(skew(a), -skew(a).T)


def test_sensor_transform_moves_moment_to_cm():
    # a pure force along x applied at the sensor, CM 0.2 m above it along z
    F = sensor_transform([0.0, 0.0, 0.2]) @ np.array([10.0, 0, 0, 0, 0, 0])
    assert np.allclose(F, [10.0, 0, 0, 0, -2.0, 0], atol=1e-15)


@given(vec3)
def test_sensor_transform_inverse(c):
    assert np.allclose(sensor_transform(c) @ sensor_transform_inv(c), np.eye(6), atol=1e-12)


def test_sensor_transform_zero_offset_is_identity():
    assert np.array_equal(sensor_transform(np.zeros(3)), np.eye(6))


def test_block_inertia_layout():
    M = block_inertia(3.0, np.diag([1.0, 2.0, 2.5])).matrix
    assert np.array_equal(np.diag(M), [3, 3, 3, 1, 2, 2.5])
    assert np.count_nonzero(M - np.diag(np.diag(M))) == 0


@pytest.mark.parametrize("m", [0.0, -1.0, np.nan])
def test_block_inertia_rejects_bad_mass(m):
    with pytest.raises(NonPositiveMass):
        block_inertia(m, np.eye(3))


@pytest.mark.parametrize("I", [
    np.diag([1.0, -1.0, 1.0]),
    np.array([[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
    np.diag([1.0, 1.0, 3.0]),  # violates the triangle inequality
])
def test_inertia_tensor_rejected(I):
    with pytest.raises(NonSPDInertia):
        check_inertia_tensor(I)


unit_quat = arrays(np.float64, 4, elements=st.floats(-1, 1)).filter(
    lambda q: np.linalg.norm(q) > 1e-3).map(quat_normalize)


@given(unit_quat)
def test_quaternion_matches_scipy(q):
    # scipy uses scalar-last quaternions
    R_ref = Rotation.from_quat([q[1], q[2], q[3], q[0]]).as_matrix()
    assert np.allclose(quat_to_rot(q), R_ref, atol=1e-12)
    assert is_rotation(quat_to_rot(q))


@given(unit_quat)
def test_rot_to_quat_roundtrip(q):
    p = rot_to_quat(quat_to_rot(q))
    assert p[0] >= 0
    assert min(np.abs(p - q).max(), np.abs(p + q).max()) < 1e-10


@given(unit_quat, unit_quat)
def test_quat_mul_composes_rotations(p, q):
    assert np.allclose(quat_to_rot(quat_mul(p, q)), quat_to_rot(p) @ quat_to_rot(q), atol=1e-12)


def test_quat_derivative_about_body_axis():
    # spinning about body z at 2 rad/s from identity for 0.3 s
    q = np.array([1.0, 0, 0, 0])
    f = lambda t, y: quat_derivative(y, np.array([0, 0, 2.0]))
    for _ in range(300):
        q = rk4_step(f, 0, q, 1e-3)
    assert np.allclose(quat_to_rot(q), rot_z(0.6), atol=1e-10)


def test_elementary_rotations():
    assert np.allclose(rot_x(np.pi / 2) @ [0, 1, 0], [0, 0, 1])
    assert np.allclose(rot_y(np.pi / 2) @ [0, 0, 1], [1, 0, 0])
    assert np.allclose(rot_z(np.pi / 2) @ [1, 0, 0], [0, 1, 0])


def test_orthonormalize_projects_to_so3(rng):
    R = rot_z(0.3) @ rot_x(-1.1) + 1e-4 * rng.standard_normal((3, 3))
    assert is_rotation(orthonormalize(R))


def test_rk4_fourth_order():
    errs = []
    for dt in (0.1, 0.05):
        y = np.array([1.0])
        for k in range(int(round(1 / dt))):
            y = rk4_step(lambda t, y: y, k * dt, y, dt)
        errs.append(abs(y[0] - np.e))
    assert 14 < errs[0] / errs[1] < 18
