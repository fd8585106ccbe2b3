import numpy as np
import pytest

from zerog.errors import NonSPDInertia
from zerog.spacecraft import (FlexibleSpacecraft, FlexState, RigidBodyState, RigidSpacecraft,
                              flexible_forward_dynamics, flexible_nonlinear_terms, gyric_term,
                              integrate_pose, linear_momentum_world, mechanical_energy,
                              rigid_forward_dynamics, simulate_free_flyer)
from zerog.spatial import block_inertia, quat_to_rot, rot_to_quat, rot_x


def _flex(coupling=1.0, damping=0.0):
    hub = block_inertia(50.0, np.diag([10.0, 8.0, 6.0]))
    M_sf = coupling * np.array([[0.8, 0.1], [0.0, 0.6], [0.3, 0.0],
                                [0.0, 0.5], [0.7, 0.0], [0.2, 0.4]])
    return FlexibleSpacecraft(hub, np.diag([1.0, 1.5]), M_sf, np.diag([40.0, 150.0]),
                              damping * np.eye(2))


def test_rigid_forward_dynamics_inverts_equation(flight, rng):
    nu, F = rng.standard_normal(6), rng.standard_normal(6)
    nd = rigid_forward_dynamics(flight, nu, F)
    assert np.allclose(flight.M @ nd + gyric_term(flight.inertia, nu), F, atol=1e-12)


def test_torque_free_motion_conserves_energy_and_momentum(flight):
    R0 = rot_x(0.4)
    s0 = RigidBodyState(np.zeros(3), rot_to_quat(R0), np.array([0.1, -0.2, 0.05, 0.3, -0.1, 0.2]))
    tr = simulate_free_flyer(flight, s0, lambda t: np.zeros(6), 1e-3, 3000)
    E = [mechanical_energy(flight, nu) for nu in tr.nu]
    H = [quat_to_rot(q) @ (flight.inertia.inertia @ nu[3:]) for q, nu in zip(tr.quat, tr.nu)]
    P = [linear_momentum_world(flight, quat_to_rot(q), nu) for q, nu in zip(tr.quat, tr.nu)]
    assert np.ptp(E) < 1e-12
    assert np.abs(np.array(H) - H[0]).max() < 1e-10
    assert np.abs(np.array(P) - P[0]).max() < 1e-10


def test_constant_force_gives_linear_velocity_growth(flight):
    tr = simulate_free_flyer(flight, RigidBodyState(), lambda t: np.array([4.0, 0, 0, 0, 0, 0]),
                             1e-2, 100)
    assert tr.nu.shape == (101, 6)
    assert np.isclose(tr.nu[-1, 0], 4.0 / 200.0 * 1.0, rtol=1e-12)
    assert np.isclose(tr.position[-1, 0], 0.5 * 4.0 / 200.0, rtol=1e-12)


def test_integrate_pose_constant_and_callable_agree():
    s = RigidBodyState(nu=np.array([0.1, 0, 0, 0, 0, 0.2]))
    acc = np.array([0.0, 0.1, 0, 0.01, 0, 0])
    a = integrate_pose(s, acc, 0.01)
    b = integrate_pose(s, lambda t, st: acc, 0.01)
    assert np.allclose(a.as_vector(), b.as_vector(), atol=1e-15)
    assert np.isclose(np.linalg.norm(a.quat), 1.0, atol=1e-15)


def test_flexible_validation_rejects_non_spd():
    hub = block_inertia(5.0, np.eye(3))
    with pytest.raises(NonSPDInertia):
        FlexibleSpacecraft(hub, np.array([[-1.0]]), np.zeros((6, 1)), np.array([[1.0]]))
    with pytest.raises(NonSPDInertia):
        # cross inertia so large the partitioned mass matrix is indefinite
        FlexibleSpacecraft(hub, np.array([[1.0]]), np.full((6, 1), 10.0), np.array([[1.0]]))


def test_flexible_forward_dynamics_solves_partitioned_system(rng):
    sc = _flex()
    nu, F = rng.standard_normal(6), rng.standard_normal(6)
    fl = FlexState(rng.standard_normal(2), rng.standard_normal(2))
    nd, xdd = flexible_forward_dynamics(sc, nu, fl, F)
    h_sr, h_sf = flexible_nonlinear_terms(sc, nu, fl.xi, fl.xi_dot)
    assert np.allclose(sc.M_s @ nd + sc.M_sf @ xdd + h_sr, F, atol=1e-12)
    assert np.allclose(sc.M_sf.T @ nd + sc.M_f @ xdd + h_sf, 0, atol=1e-12)


def test_flexible_terms_reduce_to_rigid(rng):
    sc = _flex()
    nu = rng.standard_normal(6)
    h_sr, _ = flexible_nonlinear_terms(sc, nu, rng.standard_normal(2), np.zeros(2))
    assert np.allclose(h_sr, gyric_term(sc.rigid, nu), atol=1e-13)


def test_flexible_free_motion_conserves_momentum_and_energy():
    sc = _flex()
    s0 = RigidBodyState(np.zeros(3), rot_to_quat(rot_x(0.2)), np.array([0.05, 0, 0.02, 0.1, -0.2, 0.15]))
    tr = simulate_free_flyer(sc, s0, lambda t: np.zeros(6), 1e-3, 4000,
                             FlexState(np.array([0.02, -0.01]), np.array([0.0, 0.05])))
    P = np.array([linear_momentum_world(sc, quat_to_rot(q), nu, xd)
                  for q, nu, xd in zip(tr.quat, tr.nu, tr.xi_dot)])
    E = np.array([mechanical_energy(sc, nu, x, xd) for nu, x, xd in zip(tr.nu, tr.xi, tr.xi_dot)])
    assert np.abs(P - P[0]).max() < 1e-9
    assert np.ptp(E) / E[0] < 1e-8


def test_modal_frequencies():
    sc = _flex()
    assert np.allclose(sc.modal_frequencies(), np.sqrt([40.0, 100.0]))


def test_rigid_spacecraft_mass_matrix(flight):
    assert flight.mass == 200.0
    assert np.array_equal(np.diag(flight.M), [200, 200, 200, 120, 100, 80])
    assert isinstance(flight, RigidSpacecraft)
