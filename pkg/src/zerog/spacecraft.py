"""Flight and test spacecraft models and the free-floating reference integrator.

The rigid model is ``M_s nu_dot + h_s(nu) = F_ext`` in the body frame at the
CM. The flexible model appends modal coordinates ``xi`` with a partitioned
mass matrix ``[[M_s, M_sf], [M_sf^T, M_f]]``.

The nonlinear vectors of the flexible model follow from a kinetic energy with
constant mass matrix written in body-frame quasi-velocities. With the body
momenta ``p = m v + M_sf_v xi_dot`` and ``h = I_C w + M_sf_w xi_dot``::

    h_sr = [w x p, w x h + v x p]
    h_sf = D_f xi_dot + K_f xi

``h_sr`` reduces to the rigid gyric term when ``xi_dot = 0`` or ``M_sf = 0``,
and the model conserves world-frame linear momentum and (for ``D_f = 0``)
kinetic plus strain energy.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonSPDInertia, SingularMassMatrix, ValidationError
from .spatial import (Inertia6, cross3, quat_derivative, quat_normalize, quat_to_rot,
                      rk4_step)


@dataclass(frozen=True, eq=False)
class RigidSpacecraft:
    inertia: Inertia6
    name: str = "spacecraft"

    @property
    def mass(self):
        return self.inertia.mass

    @property
    def M(self):
        return self.inertia.matrix


def _spd(A, what):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1] or not np.allclose(A, A.T, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise NonSPDInertia(f"{what} must be a symmetric square matrix")
    if np.linalg.eigvalsh(A)[0] <= 0.0:
        raise NonSPDInertia(f"{what} must be positive definite")
    return A


@dataclass(frozen=True, eq=False)
class FlexibleSpacecraft:
    """Rigid hub plus ``n_modes`` flexural coordinates."""

    rigid: Inertia6
    M_f: np.ndarray
    M_sf: np.ndarray
    K_f: np.ndarray
    D_f: np.ndarray = None
    name: str = "flexible spacecraft"

    def __post_init__(self):
        M_f = _spd(self.M_f, "M_f")
        n = M_f.shape[0]
        M_sf = np.asarray(self.M_sf, dtype=float).reshape(6, n)
        K_f = _spd(self.K_f, "K_f")
        D_f = np.zeros((n, n)) if self.D_f is None else np.atleast_2d(np.asarray(self.D_f, dtype=float))
        if K_f.shape != (n, n) or D_f.shape != (n, n):
            raise ValidationError("K_f and D_f must be n_modes x n_modes")
        if np.linalg.eigvalsh(0.5 * (D_f + D_f.T))[0] < -1e-12:
            raise NonSPDInertia("D_f must be positive semi-definite")
        object.__setattr__(self, "M_f", M_f)
        object.__setattr__(self, "M_sf", M_sf)
        object.__setattr__(self, "K_f", K_f)
        object.__setattr__(self, "D_f", D_f)
        _spd(self.mass_matrix, "partitioned mass matrix")
        _spd(self.M_s - M_sf @ np.linalg.solve(M_f, M_sf.T), "Schur complement M_s - M_sf M_f^-1 M_sf^T")

    @property
    def n_modes(self):
        return self.M_f.shape[0]

    @property
    def mass(self):
        return self.rigid.mass

    @property
    def M_s(self):
        return self.rigid.matrix

    @property
    def mass_matrix(self):
        n = self.n_modes
        M = np.zeros((6 + n, 6 + n))
        M[:6, :6] = self.M_s
        M[:6, 6:] = self.M_sf
        M[6:, :6] = self.M_sf.T
        M[6:, 6:] = self.M_f
        return M

    def modal_frequencies(self):
        """Clamped-hub natural frequencies ``sqrt(eig(M_f^-1 K_f))`` in rad/s."""
        lam = np.linalg.eigvals(np.linalg.solve(self.M_f, self.K_f))
        return np.sort(np.sqrt(np.abs(lam.real)))


@dataclass
class FlexState:
    xi: np.ndarray
    xi_dot: np.ndarray

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n))


@dataclass
class RigidBodyState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    nu: np.ndarray = field(default_factory=lambda: np.zeros(6))

    @property
    def attitude(self):
        return quat_to_rot(self.quat)

    def as_vector(self):
        return np.concatenate([self.position, self.quat, self.nu])

    @classmethod
    def from_vector(cls, y):
        return cls(y[0:3].copy(), y[3:7].copy(), y[7:13].copy())


# --- dynamics ----------------------------------------------------------------

def gyric_term(inertia, nu):
    """``h(nu) = [m w x v, w x I_C w]``."""
    v, w = nu[:3], nu[3:]
    return np.concatenate([inertia.mass * cross3(w, v), cross3(w, inertia.inertia @ w)])


def rigid_forward_dynamics(sc, nu, F_ext):
    inertia = sc.inertia if isinstance(sc, RigidSpacecraft) else sc
    rhs = np.asarray(F_ext, dtype=float) - gyric_term(inertia, nu)
    return np.concatenate([rhs[:3] / inertia.mass, np.linalg.solve(inertia.inertia, rhs[3:])])


def flexible_nonlinear_terms(sc, nu, xi, xi_dot):
    """Return ``(h_sr, h_sf)`` for the flexible model."""
    v, w = nu[:3], nu[3:]
    coupled = sc.M_sf @ xi_dot
    p = sc.rigid.mass * v + coupled[:3]
    h = sc.rigid.inertia @ w + coupled[3:]
    h_sr = np.concatenate([cross3(w, p), cross3(w, h) + cross3(v, p)])
    h_sf = sc.D_f @ xi_dot + sc.K_f @ xi
    return h_sr, h_sf


def flexible_forward_dynamics(sc, nu, flex, F_ext):
    """Solve the partitioned equations for ``(nu_dot, xi_ddot)``."""
    h_sr, h_sf = flexible_nonlinear_terms(sc, nu, flex.xi, flex.xi_dot)
    rhs = np.concatenate([np.asarray(F_ext, dtype=float) - h_sr, -h_sf])
    try:
        acc = np.linalg.solve(sc.mass_matrix, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularMassMatrix(str(exc)) from exc
    return acc[:6], acc[6:]


def linear_momentum_world(sc, R, nu, xi_dot=None):
    p = sc.mass * nu[:3]
    if xi_dot is not None and isinstance(sc, FlexibleSpacecraft):
        p = p + (sc.M_sf @ xi_dot)[:3]
    return R @ p


def mechanical_energy(sc, nu, xi=None, xi_dot=None):
    if isinstance(sc, FlexibleSpacecraft):
        z = np.concatenate([nu, xi_dot])
        return 0.5 * z @ sc.mass_matrix @ z + 0.5 * xi @ sc.K_f @ xi
    M = sc.M if isinstance(sc, RigidSpacecraft) else sc.matrix
    return 0.5 * nu @ M @ nu


# --- pose integration and the reference oracle -------------------------------

def _pose_rates(y, nu_dot):
    R = quat_to_rot(y[3:7])
    nu = y[7:13]
    return np.concatenate([R @ nu[:3], quat_derivative(y[3:7], nu[3:]), nu_dot])


def integrate_pose(state, nu_dot, dt, t=0.0):
    """Advance ``(position, attitude, nu)`` by one RK4 step.

    ``nu_dot`` is either a constant ``(6,)`` body-frame acceleration or a
    callable ``nu_dot(t, state) -> (6,)``. Velocities are body-frame; the
    position is world-frame. The quaternion is renormalised after the step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if callable(nu_dot):
        def f(tt, y):
            return _pose_rates(y, nu_dot(tt, RigidBodyState.from_vector(y)))
    else:
        acc = np.asarray(nu_dot, dtype=float)

        def f(tt, y):
            return _pose_rates(y, acc)
    y = rk4_step(f, t, state.as_vector(), dt)
    y[3:7] = quat_normalize(y[3:7])
    return RigidBodyState.from_vector(y)


@dataclass
class OracleTrajectory:
    t: np.ndarray
    position: np.ndarray
    quat: np.ndarray
    nu: np.ndarray
    F_ext: np.ndarray
    xi: np.ndarray = None
    xi_dot: np.ndarray = None


def simulate_free_flyer(sc, state0, wrench_at, dt, n_steps, flex0=None):
    """Integrate the free-floating flight spacecraft with fixed-step RK4.

    ``wrench_at(t)`` gives the body-frame external wrench; it is sampled at
    the start of each step and held over the step. Returns an
    :class:`OracleTrajectory` with ``n_steps + 1`` rows.
    """
    flexible = isinstance(sc, FlexibleSpacecraft)
    n = sc.n_modes if flexible else 0
    if flexible and flex0 is None:
        flex0 = FlexState.zeros(n)

    def f(t, y, F):
        rates = np.empty_like(y)
        R = quat_to_rot(y[3:7])
        nu = y[7:13]
        rates[0:3] = R @ nu[:3]
        rates[3:7] = quat_derivative(y[3:7], nu[3:])
        if flexible:
            xi, xi_dot = y[13:13 + n], y[13 + n:]
            nu_dot, xi_ddot = flexible_forward_dynamics(sc, nu, FlexState(xi, xi_dot), F)
            rates[7:13] = nu_dot
            rates[13:13 + n] = xi_dot
            rates[13 + n:] = xi_ddot
        else:
            rates[7:13] = rigid_forward_dynamics(sc, nu, F)
        return rates

    y = state0.as_vector()
    if flexible:
        y = np.concatenate([y, flex0.xi, flex0.xi_dot])
    Y = np.empty((n_steps + 1, y.size))
    Fs = np.empty((n_steps + 1, 6))
    Y[0] = y
    for k in range(n_steps):
        t = k * dt
        F = np.asarray(wrench_at(t), dtype=float)
        Fs[k] = F
        y = rk4_step(lambda tt, yy: f(tt, yy, F), t, y, dt)
        y[3:7] = quat_normalize(y[3:7])
        Y[k + 1] = y
    Fs[n_steps] = wrench_at(n_steps * dt)
    traj = OracleTrajectory(np.arange(n_steps + 1) * dt, Y[:, 0:3], Y[:, 3:7], Y[:, 7:13], Fs)
    if flexible:
        traj.xi = Y[:, 13:13 + n]
        traj.xi_dot = Y[:, 13 + n:]
    return traj
