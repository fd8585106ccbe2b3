"""Zero-g emulation control law.

Subtracting the test-payload dynamics from the flight dynamics gives an
acceleration estimate that uses only the compensated sensor wrench::

    M_delta nu_dot* + h_delta(nu) = F_sg
    qdd* = J^-1 (nu_dot* - J_dot qd)

The joint torque is an inverse-dynamics law on the manipulator-plus-payload
model that cancels an estimate of the external wrench and tracks the
integrated reference ``(q_ref, qd_ref)`` with PD gains scaled by ``M_t``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SingularDeltaInertia, ValidationError
from .manipulator import COND_LIMIT, cartesian_inertia, combined_dynamics
from .spacecraft import gyric_term
from .spatial import GRAVITY, as_inertia6, cross3, skew

SINGULAR_TOL = 1e-9


@dataclass(frozen=True)
class EmulationGains:
    k_p: float
    k_d: float

    def __post_init__(self):
        if not (self.k_p > 0 and self.k_d > 0):
            raise ValidationError(f"gains must be positive, got k_p={self.k_p}, k_d={self.k_d}")


@dataclass(frozen=True, eq=False)
class DeltaInertia:
    """``M_delta = diag((m_s - m_m) I, I_s - I_m)`` and its inverse."""

    dm: float
    dI: np.ndarray
    dI_inv: np.ndarray

    @property
    def matrix(self):
        M = np.zeros((6, 6))
        M[:3, :3] = self.dm * np.eye(3)
        M[3:, 3:] = self.dI
        return M

    @property
    def inverse(self):
        Mi = np.zeros((6, 6))
        Mi[:3, :3] = np.eye(3) / self.dm
        Mi[3:, 3:] = self.dI_inv
        return Mi

    def h(self, nu):
        """``h_delta = [dm w x v, w x dI w]``."""
        v, w = nu[:3], nu[3:]
        return np.concatenate([self.dm * cross3(w, v), cross3(w, self.dI @ w)])


def delta_inertia(flight, test, tol=SINGULAR_TOL):
    """Inertia difference between flight and test spacecraft.

    Raises :class:`SingularDeltaInertia` when the masses coincide or the
    inertia difference has a (relatively) zero eigenvalue.
    """
    flight = as_inertia6(flight)
    test = as_inertia6(test)
    dm = flight.mass - test.mass
    if abs(dm) <= tol * max(flight.mass, test.mass):
        raise SingularDeltaInertia(
            f"flight and test masses are equal ({flight.mass} kg): M_delta is singular", eigenvalue=dm)
    dI = flight.inertia - test.inertia
    dI = 0.5 * (dI + dI.T)
    eig = np.linalg.eigvalsh(dI)
    scale = max(np.abs(flight.inertia).max(), np.abs(test.inertia).max())
    worst = eig[np.argmin(np.abs(eig))]
    if abs(worst) <= tol * scale:
        raise SingularDeltaInertia(
            f"inertia difference I_s - I_m has eigenvalue {worst:.3e}: M_delta is singular",
            eigenvalue=worst)
    return DeltaInertia(dm, dI, np.linalg.inv(dI))


def estimate_cartesian_accel(delta, nu, F_sg):
    """``nu_dot* = M_delta^-1 (F_sg - h_delta(nu))``."""
    return delta.inverse @ (np.asarray(F_sg, float) - delta.h(nu))


def n_matrix(state, delta):
    """``N(q, qd)`` with ``N qd = M_delta^-1 h_delta``."""
    Wx = skew(state.J_w @ state.qd)
    return np.vstack([Wx @ state.J_v, delta.dI_inv @ Wx @ delta.dI @ state.J_w])


def estimate_joint_accel(state, delta, F_sg, limit=COND_LIMIT):
    """``qdd* = J^-1 M_delta^-1 F_sg - J^-1 (N + J_dot) qd``."""
    state.check_jacobian(limit)
    rhs = delta.inverse @ F_sg - (n_matrix(state, delta) + state.J_dot) @ state.qd
    return np.linalg.solve(state.J, rhs)


def estimate_external_force(state, attachment, delta, F_sg):
    """``F*_ext = (I + M_m M_delta^-1) F_sg + h_m - M_m N qd``."""
    M_m = attachment.M_m
    h_m = gyric_term(attachment.payload.inertia, state.nu)
    return (F_sg + M_m @ (delta.inverse @ F_sg) + h_m
            - M_m @ (n_matrix(state, delta) @ state.qd))


@dataclass
class ControllerState:
    """Reference integrators and the latest estimates.

    ``q_ref`` and ``qd_ref`` are the single and double integrals of
    ``qdd*``; they start at the measured ``q(0), qd(0)`` unless an initial
    error is injected on purpose.
    """

    q_ref: np.ndarray
    qd_ref: np.ndarray
    nu_dot_star: np.ndarray = field(default_factory=lambda: np.zeros(6))
    F_ext_star: np.ndarray = field(default_factory=lambda: np.zeros(6))
    qdd_star_prev: np.ndarray = None

    @classmethod
    def start(cls, q, qd, q_offset=None, qd_offset=None):
        q_ref = np.array(q, dtype=float)
        qd_ref = np.array(qd, dtype=float)
        if q_offset is not None:
            q_ref = q_ref + q_offset
        if qd_offset is not None:
            qd_ref = qd_ref + qd_offset
        return cls(q_ref, qd_ref)

    def advance(self, qdd_star, period):
        """Trapezoidal update of the reference integrators."""
        prev = qdd_star if self.qdd_star_prev is None else self.qdd_star_prev
        qd_new = self.qd_ref + 0.5 * period * (prev + qdd_star)
        self.q_ref = self.q_ref + 0.5 * period * (self.qd_ref + qd_new)
        self.qd_ref = qd_new
        self.qdd_star_prev = np.array(qdd_star, dtype=float)


def pd_term(state, gains, q_ref, qd_ref):
    return gains.k_d * (qd_ref - state.qd) + gains.k_p * (q_ref - state.q)


def control_torque(model, state, attachment, delta, gains, ctrl, F_sg, M_t=None):
    """Joint torque of the emulation law in its closed form::

        tau = J^T (M_Cr M_delta^-1 - I) F_sg + h_r - M_r J^-1 (N + J_dot) qd
              - m_m g J_v^T R^T k + M_t (K_d (qd_ref - qd) + K_p (q_ref - q))
    """
    if M_t is None:
        M_t, _ = combined_dynamics(model, attachment, state)
    force = force_feedback(model, state, delta, F_sg)
    return force + motion_feedback(model, state, attachment, delta) + M_t @ pd_term(
        state, gains, ctrl.q_ref, ctrl.qd_ref)


def force_feedback(model, state, delta, F_sg):
    """Force-feedback part ``J^T (M_Cr M_delta^-1 - I) F_sg``."""
    M_Cr = cartesian_inertia(model, state)
    return state.J.T @ (M_Cr @ (delta.inverse @ F_sg) - F_sg)


def motion_feedback(model, state, attachment, delta):
    """Motion-dependent part ``eta(q, qd)`` (excludes the PD tracking term)."""
    Nqd = (n_matrix(state, delta) + state.J_dot) @ state.qd
    return (state.h_r - state.M_r @ np.linalg.solve(state.J, Nqd)
            - attachment.mass * GRAVITY * (state.J_v.T @ (state.R.T @ model.gravity_dir)))


def feedback_decomposition(model, state, attachment, delta, F_sg):
    """Split the steady-state torque into ``(force_part, motion_part)``."""
    return force_feedback(model, state, delta, F_sg), motion_feedback(model, state, attachment, delta)


def inverse_dynamics_torque(model, state, attachment, gains, q_ref, qd_ref, qdd_star, F_ext_star,
                            M_t=None, h_t=None):
    """Inverse-dynamics form::

        tau = M_t qdd* + h_t - J^T F*_ext + M_t (K_d (qd_ref - qd) + K_p (q_ref - q))
    """
    if M_t is None or h_t is None:
        M_t, h_t = combined_dynamics(model, attachment, state)
    return M_t @ (qdd_star + pd_term(state, gains, q_ref, qd_ref)) + h_t - state.J.T @ F_ext_star


class RigidEmulationLaw:
    """Bundles the rigid-flight emulation law for the simulation loop.

    The acceleration estimate has the affine form
    ``nu_dot* = M_eff^-1 (F_sg - b)``; the flexible law overrides
    :meth:`bias` and ``M_eff_inv``.
    """

    flexible = False

    def __init__(self, model, attachment, flight, gains, limit=COND_LIMIT):
        self.model = model
        self.attachment = attachment
        self.flight = flight
        self.gains = gains
        self.limit = limit
        self.delta = delta_inertia(flight, attachment.payload)
        self.M_eff_inv = self.delta.inverse
        self.M_delta = self.delta.matrix

    def bias(self, state, flex=None):
        return self.delta.h(state.nu)

    def nu_dot_star(self, state, F_sg, flex=None):
        return self.M_eff_inv @ (F_sg - self.bias(state, flex))

    def qdd_star(self, state, F_sg, flex=None):
        return np.linalg.solve(state.J, self.nu_dot_star(state, F_sg, flex) - state.J_dot @ state.qd)

    def F_ext_star(self, state, F_sg, nu_dot_star):
        h_m = gyric_term(self.attachment.payload.inertia, state.nu)
        return F_sg + self.attachment.M_m @ nu_dot_star + h_m

    def force_gain(self, state):
        """``G = J^T (M_Cr M_eff^-1 - I)``, the map from F_sg to torque."""
        M_Cr = cartesian_inertia(self.model, state, check=False)
        return state.J.T @ (M_Cr @ self.M_eff_inv - np.eye(6))

    def affine_torque(self, state, q_ref, qd_ref, flex=None, M_t=None, h_t=None):
        """``(tau0, G)`` with ``tau = tau0 + G F_sg``; the Jacobian is not re-checked."""
        if M_t is None or h_t is None:
            M_t, h_t = combined_dynamics(self.model, self.attachment, state)
        G = self.force_gain(state)
        if self.flexible:
            tau0 = self.torque(state, np.zeros(6), q_ref, qd_ref, flex, M_t, h_t)[0]
        else:
            tau0 = (motion_feedback(self.model, state, self.attachment, self.delta)
                    + M_t @ pd_term(state, self.gains, q_ref, qd_ref))
        return tau0, G

    def torque(self, state, F_sg, q_ref, qd_ref, flex=None, M_t=None, h_t=None):
        """Torque together with the estimates it used.

        Returns ``(tau, qdd*, nu_dot*, F*_ext)``.
        """
        if M_t is None or h_t is None:
            M_t, h_t = combined_dynamics(self.model, self.attachment, state)
        nds = self.nu_dot_star(state, F_sg, flex)
        qdds = np.linalg.solve(state.J, nds - state.J_dot @ state.qd)
        F_star = self.F_ext_star(state, F_sg, nds)
        if self.flexible:
            tau = inverse_dynamics_torque(self.model, state, self.attachment, self.gains,
                                          q_ref, qd_ref, qdds, F_star, M_t, h_t)
        else:
            ctrl = ControllerState(q_ref, qd_ref)
            tau = control_torque(self.model, state, self.attachment, self.delta, self.gains, ctrl,
                                 F_sg, M_t)
        return tau, qdds, nds, F_star
