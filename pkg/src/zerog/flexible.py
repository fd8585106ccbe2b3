"""Emulating a flexible flight spacecraft with a rigid test payload.

Subtracting the rigid payload equation from the partitioned flexible model
gives, with ``h_delta = h_sr - h_m``::

    [[M_delta, M_sf], [M_sf^T, M_f]] [nu_dot; xi_ddot] = [F_sg - h_delta; -h_sf]

Eliminating ``xi_ddot`` with ``M_bar = M_delta - M_sf M_f^-1 M_sf^T``::

    nu_dot* = M_bar^-1 (F_sg - h_delta + M_sf M_f^-1 h_sf)
    xi_ddot = -M_f^-1 (h_sf + M_sf^T nu_dot*)

These are the ``form="exact"`` expressions. ``form="printed"`` evaluates the
published closed forms literally (with ``J^-1`` applied to every Cartesian
term) so the two can be compared; see :func:`cross_check`.

The flexural states are not measured: the controller integrates them
alongside the manipulator loop.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .controller import RigidEmulationLaw, delta_inertia, n_matrix
from .errors import SingularFlexDelta
from .manipulator import COND_LIMIT
from .spacecraft import FlexState, flexible_nonlinear_terms, gyric_term
from .spatial import as_inertia6, rk4_step

SINGULAR_TOL = 1e-9


class LoopPhase(enum.Enum):
    ESTIMATE = "estimate"
    CONTROL = "control"
    INTEGRATE_FLEX = "integrate_flex"


@dataclass
class FlexEmulationState:
    flex: FlexState
    M_bar_delta: np.ndarray
    loop_phase: LoopPhase = LoopPhase.ESTIMATE


def rigid_delta_matrix(flight, test):
    return flight.M_s - as_inertia6(getattr(test, "payload", test)).matrix


def flexible_delta_inertia(flight, test, tol=SINGULAR_TOL):
    """``M_bar = M_delta - M_sf M_f^-1 M_sf^T`` and its inverse."""
    test = getattr(test, "payload", test)
    M_bar = rigid_delta_matrix(flight, test) - flight.M_sf @ np.linalg.solve(flight.M_f, flight.M_sf.T)
    M_bar = 0.5 * (M_bar + M_bar.T)
    eig = np.linalg.eigvalsh(M_bar)
    worst = eig[np.argmin(np.abs(eig))]
    if abs(worst) <= tol * np.abs(flight.M_s).max():
        raise SingularFlexDelta(f"M_bar_delta has eigenvalue {worst:.3e}: singular")
    return M_bar, np.linalg.inv(M_bar)


def flex_h_delta(flight, test, nu, flex):
    """``h_delta = h_sr - h_m`` (distinct from the rigid ``h_delta``)."""
    test = as_inertia6(getattr(test, "payload", test))
    h_sr, h_sf = flexible_nonlinear_terms(flight, nu, flex.xi, flex.xi_dot)
    return h_sr - gyric_term(test, nu), h_sf


def flexible_cartesian_accel(flight, test, nu, flex, F_sg, M_bar_inv=None):
    if M_bar_inv is None:
        M_bar_inv = flexible_delta_inertia(flight, test)[1]
    h_d, h_sf = flex_h_delta(flight, test, nu, flex)
    return M_bar_inv @ (F_sg - h_d + flight.M_sf @ np.linalg.solve(flight.M_f, h_sf))


def flexible_joint_accel(state, flight, test, flex, F_sg, form="exact", limit=COND_LIMIT):
    """Joint acceleration estimate for a flexible flight spacecraft."""
    state.check_jacobian(limit)
    M_bar, M_bar_inv = flexible_delta_inertia(flight, test)
    if form == "exact":
        nds = flexible_cartesian_accel(flight, test, state.nu, flex, F_sg, M_bar_inv)
        return np.linalg.solve(state.J, nds - state.J_dot @ state.qd)
    if form == "printed":
        delta = delta_inertia(flight.rigid, getattr(test, "payload", test))
        _, h_sf = flexible_nonlinear_terms(flight, state.nu, flex.xi, flex.xi_dot)
        cart = (-(n_matrix(state, delta) + state.J_dot) @ state.qd
                - M_bar_inv @ flight.M_sf @ np.linalg.solve(flight.M_f, h_sf)
                + M_bar_inv @ F_sg)
        return np.linalg.solve(state.J, cart)
    raise ValueError(f"unknown form {form!r}")


def flexural_accel(flight, test, flex, nu, F_sg, form="exact"):
    """Acceleration of the simulated flexural coordinates."""
    M_bar, M_bar_inv = flexible_delta_inertia(flight, test)
    h_d, h_sf = flex_h_delta(flight, test, nu, flex)
    Mf_inv = np.linalg.inv(flight.M_f)
    if form == "exact":
        nds = M_bar_inv @ (F_sg - h_d + flight.M_sf @ (Mf_inv @ h_sf))
        return -Mf_inv @ (h_sf + flight.M_sf.T @ nds)
    if form == "printed":
        n = flight.n_modes
        inner = np.eye(n) + Mf_inv @ flight.M_sf.T @ flight.M_sf @ Mf_inv
        return -Mf_inv @ inner @ h_sf - Mf_inv @ flight.M_sf.T @ M_bar_inv @ (F_sg - h_d)
    raise ValueError(f"unknown form {form!r}")


def block_elimination(flight, test, nu, flex, F_sg):
    """Direct solve of the subtracted partitioned system for ``(nu_dot, xi_ddot)``."""
    h_d, h_sf = flex_h_delta(flight, test, nu, flex)
    n = flight.n_modes
    A = np.zeros((6 + n, 6 + n))
    A[:6, :6] = rigid_delta_matrix(flight, getattr(test, "payload", test))
    A[:6, 6:] = flight.M_sf
    A[6:, :6] = flight.M_sf.T
    A[6:, 6:] = flight.M_f
    sol = np.linalg.solve(A, np.concatenate([F_sg - h_d, -h_sf]))
    return sol[:6], sol[6:]


def cross_check(state, flight, test, flex, F_sg):
    """Compare the exact and printed forms against block elimination.

    Returns a dict of max-abs discrepancies; large ``printed`` entries are
    expected whenever the cross-inertia ``M_sf`` is non-zero.
    """
    nu_dot_ref, xi_ddot_ref = block_elimination(flight, test, state.nu, flex, F_sg)
    qdd_ref = np.linalg.solve(state.J, nu_dot_ref - state.J_dot @ state.qd)
    out = {}
    for form in ("exact", "printed"):
        qdd = flexible_joint_accel(state, flight, test, flex, F_sg, form)
        xdd = flexural_accel(flight, test, flex, state.nu, F_sg, form)
        out[f"qdd_{form}"] = float(np.abs(qdd - qdd_ref).max())
        out[f"xi_ddot_{form}"] = float(np.abs(xdd - xi_ddot_ref).max())
    return out


class FlexibleEmulationLaw(RigidEmulationLaw):
    """Emulation law for a flexible flight spacecraft (exact elimination)."""

    flexible = True

    def __init__(self, model, attachment, flight, gains, limit=COND_LIMIT):
        self.model = model
        self.attachment = attachment
        self.flight = flight
        self.gains = gains
        self.limit = limit
        M_bar, M_bar_inv = flexible_delta_inertia(flight, attachment.payload)
        self.M_bar = M_bar
        self.M_eff_inv = M_bar_inv
        self.M_delta = rigid_delta_matrix(flight, attachment.payload)
        self._Mf_inv = np.linalg.inv(flight.M_f)

    def bias(self, state, flex=None):
        h_d, h_sf = flex_h_delta(self.flight, self.attachment, state.nu, flex)
        return h_d - self.flight.M_sf @ (self._Mf_inv @ h_sf)

    def xi_ddot(self, nu, flex, nu_dot_star):
        _, h_sf = flexible_nonlinear_terms(self.flight, nu, flex.xi, flex.xi_dot)
        return -self._Mf_inv @ (h_sf + self.flight.M_sf.T @ nu_dot_star)

    def integrate_flex(self, state, flex, F_sg, period):
        """RK4 on ``(xi, xi_dot)`` over one period with ``nu`` and ``F_sg`` held."""
        n = self.flight.n_modes
        nu = state.nu

        def f(t, y):
            fl = FlexState(y[:n], y[n:])
            h_d, h_sf = flex_h_delta(self.flight, self.attachment, nu, fl)
            nds = self.M_eff_inv @ (F_sg - h_d + self.flight.M_sf @ (self._Mf_inv @ h_sf))
            return np.concatenate([y[n:], -self._Mf_inv @ (h_sf + self.flight.M_sf.T @ nds)])

        y = rk4_step(f, 0.0, np.concatenate([flex.xi, flex.xi_dot]), period)
        return FlexState(y[:n], y[n:])


def flex_emulation_step(law, state, emu, ctrl, F_sg, period):
    """One controller period of the flexible emulation procedure.

    Estimates the joint acceleration from the current flexural states,
    computes the torque, then integrates the flexural states and the
    reference integrators over ``period``. Returns the torque.
    """
    emu.loop_phase = LoopPhase.ESTIMATE
    state.check_jacobian(law.limit)
    emu.loop_phase = LoopPhase.CONTROL
    tau, qdds, nds, F_star = law.torque(state, F_sg, ctrl.q_ref, ctrl.qd_ref, emu.flex)
    ctrl.nu_dot_star, ctrl.F_ext_star = nds, F_star
    emu.loop_phase = LoopPhase.INTEGRATE_FLEX
    emu.flex = law.integrate_flex(state, emu.flex, F_sg, period)
    ctrl.advance(qdds, period)
    emu.loop_phase = LoopPhase.ESTIMATE
    return tau


def modal_coordinates(flight, xi):
    """Project flexural coordinates onto the mass-normalised modes of ``(K_f, M_f)``."""
    lam, Phi = eigh(flight.K_f, flight.M_f)
    return np.atleast_2d(xi) @ flight.M_f @ Phi, np.sqrt(lam)


def estimate_frequency(t, x):
    """Oscillation frequency in rad/s from the mean spacing of zero crossings."""
    t = np.asarray(t, float)
    x = np.asarray(x, float) - np.mean(x)
    i = np.nonzero(np.signbit(x[:-1]) != np.signbit(x[1:]))[0]
    if i.size < 3:
        raise ValueError("fewer than three zero crossings")
    tc = t[i] - x[i] * (t[i + 1] - t[i]) / (x[i + 1] - x[i])
    half = np.polyfit(np.arange(tc.size), tc, 1)[0]
    return np.pi / half
