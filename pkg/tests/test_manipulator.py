import numpy as np
import pytest

from conftest import C_TEST, Q_TEST, random_q
from zerog.errors import NearSingularJacobian
from zerog.manipulator import (CartesianStage, cartesian_inertia,
                               cartesian_inertia_explicit, combined_dynamics, default_arm)
from zerog.spatial import block_inertia

ARM = default_arm()


def _fd_body_twist(model, q, qd, c, h=1e-6):
    # body-frame twist of the CM point from finite differences of the pose
    R0, x0 = model.forward_kinematics(q - h * qd, c)
    R1, x1 = model.forward_kinematics(q + h * qd, c)
    R, _ = model.forward_kinematics(q, c)
    v = R.T @ (x1 - x0) / (2 * h)
    W = R.T @ (R1 - R0) / (2 * h)
    return np.concatenate([v, [W[2, 1], W[0, 2], W[1, 0]]])


@pytest.mark.parametrize("model", [ARM, CartesianStage(block_inertia(40.0, np.diag([4.0, 4, 4])))],
                         ids=["serial", "cartesian"])
def test_jacobian_matches_finite_differences(model, rng):
    for _ in range(5):
        q = random_q(model, rng)
        qd = rng.standard_normal(model.n_joints)
        J = model.jacobian(q, C_TEST)
        assert np.allclose(J @ qd, _fd_body_twist(model, q, qd, C_TEST), atol=1e-7)


@pytest.mark.parametrize("model", [ARM, CartesianStage(block_inertia(40.0, np.diag([4.0, 4, 4])))],
                         ids=["serial", "cartesian"])
def test_jacobian_dot_matches_finite_differences(model, rng):
    h = 1e-6
    for _ in range(5):
        q = random_q(model, rng)
        qd = rng.standard_normal(model.n_joints)
        fd = (model.jacobian(q + h * qd, C_TEST) - model.jacobian(q - h * qd, C_TEST)) / (2 * h)
        assert np.allclose(model.jacobian_dot(q, qd, C_TEST), fd, atol=1e-7)


def test_compiled_state_matches_numpy_reference(rng):
    for _ in range(10):
        q = random_q(ARM, rng)
        qd = rng.standard_normal(6)
        a = ARM.state(q, qd, C_TEST)
        b = ARM._state_numpy(q, qd, C_TEST)
        for name in ("R", "c_pos", "J", "J_dot", "M_r", "h_r"):
            assert np.allclose(getattr(a, name), getattr(b, name), atol=1e-12), name


def test_mass_matrix_symmetric_positive(rng):
    for _ in range(10):
        M, _ = ARM.dynamics(random_q(ARM, rng), np.zeros(6))
        assert np.allclose(M, M.T)
        assert np.linalg.eigvalsh(M)[0] > 0


def test_coriolis_term_is_quadratic_and_passive(rng):
    # h(q, qd) - g(q) is quadratic in qd, and qd^T (Mdot/2 qd - C qd) = 0
    q = random_q(ARM, rng)
    qd = rng.standard_normal(6)
    g = ARM.gravity_torque(q)
    _, h1 = ARM.dynamics(q, qd)
    _, h2 = ARM.dynamics(q, 2 * qd)
    assert np.allclose(h2 - g, 4 * (h1 - g), atol=1e-10)
    eps = 1e-6
    Mdot = (ARM.dynamics(q + eps * qd, np.zeros(6))[0] - ARM.dynamics(q - eps * qd, np.zeros(6))[0]) / (2 * eps)
    assert abs(qd @ (0.5 * Mdot @ qd - (h1 - g))) < 1e-6


def test_gravity_torque_is_potential_gradient(rng):
    # g(q) = dV/dq with V = sum m_i g0 z_i, checked through virtual work of a single link mass
    q = random_q(ARM, rng)
    payload = (3.0, C_TEST, np.diag([0.1, 0.1, 0.1]))
    g_with = ARM.gravity_torque(q, [payload])
    g_without = ARM.gravity_torque(q)
    R, x = ARM.forward_kinematics(q, C_TEST)
    Jv_world = R @ ARM.jacobian(q, C_TEST)[:3]
    assert np.allclose(g_with - g_without, 3.0 * 9.81 * Jv_world.T @ np.array([0, 0, 1.0]), atol=1e-10)


def test_combined_dynamics_equals_rigidly_attached_body(attachment, rng):
    for _ in range(5):
        q = random_q(ARM, rng)
        qd = rng.standard_normal(6)
        st_ = ARM.state(q, qd, attachment.c)
        M_t, h_t = combined_dynamics(ARM, attachment, st_)
        body = (attachment.mass, attachment.c, attachment.payload.inertia.inertia)
        M_ref, h_ref = ARM.dynamics(q, qd, extra_bodies=[body])
        assert np.allclose(M_t, M_ref, atol=1e-10)
        assert np.allclose(h_t, h_ref, atol=1e-10)


def test_cartesian_inertia_forms_agree(rng):
    for _ in range(5):
        st_ = ARM.state(random_q(ARM, rng), np.zeros(6), C_TEST)
        assert np.allclose(cartesian_inertia(ARM, st_), cartesian_inertia_explicit(st_), rtol=1e-8, atol=1e-8)


def test_cartesian_stage_inertia_is_carriage(rng):
    carriage = block_inertia(40.0, np.diag([4.0, 3.5, 3.0]))
    stage = CartesianStage(carriage)
    for _ in range(5):
        st_ = stage.state(random_q(stage, rng), rng.standard_normal(6), C_TEST)
        assert np.allclose(cartesian_inertia_explicit(st_), carriage.matrix, atol=1e-10)
        assert np.array_equal(cartesian_inertia(stage, st_), carriage.matrix)


def test_near_singular_jacobian_raises():
    # wrist singularity: joint 5 at zero aligns joints 4 and 6
    q = Q_TEST.copy()
    q[4] = 0.0
    st_ = ARM.state(q, np.zeros(6))
    with pytest.raises(NearSingularJacobian) as err:
        cartesian_inertia(ARM, st_)
    assert err.value.exit_status == 2


def test_default_arm_configuration_well_conditioned():
    assert ARM.state(Q_TEST, np.zeros(6), C_TEST).condition() < 1e3
