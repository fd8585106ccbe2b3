"""Manipulator kinematics and dynamics.

Two models share one interface, ``model.state(q, qd, c) -> ManipulatorState``:

* :class:`SerialArm` - revolute serial chain in standard Denavit-Hartenberg
  form with per-link inertial data and reflected rotor inertia.
* :class:`CartesianStage` - an ideal 6-DOF stage (three prismatic axes and a
  ZYX gimbal) whose moving carriage is a single rigid body lumped at the
  payload CM, so its Cartesian inertia is constant.

The payload frame {C} sits at the payload CM, parallel to the sensor frame
{S}, which is the flange frame of the last link. ``c`` is the CM position in
{S}. ``J`` maps joint rates to the body twist of {C}: ``nu = J @ qd``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._armkernel import arm_state
from .errors import ConfigError, NearSingularJacobian
from .spacecraft import RigidSpacecraft, gyric_term
from .spatial import GRAVITY, Inertia6, cross3, check_inertia_tensor, rot_x, rot_y, rot_z, skew

COND_LIMIT = 1e6

DATA_DIR = Path(__file__).with_name("data")


@dataclass(frozen=True, eq=False)
class PayloadAttachment:
    payload: RigidSpacecraft
    c: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def M_m(self):
        return self.payload.M

    @property
    def mass(self):
        return self.payload.mass


@dataclass
class ManipulatorState:
    q: np.ndarray
    qd: np.ndarray
    R: np.ndarray
    c_pos: np.ndarray
    J: np.ndarray
    J_dot: np.ndarray
    M_r: np.ndarray
    h_r: np.ndarray

    @property
    def J_v(self):
        return self.J[:3]

    @property
    def J_w(self):
        return self.J[3:]

    @property
    def nu(self):
        return self.J @ self.qd

    def condition(self):
        return np.linalg.cond(self.J)

    def check_jacobian(self, limit=COND_LIMIT):
        cond = self.condition()
        if not np.isfinite(cond) or cond > limit:
            raise NearSingularJacobian(
                f"Jacobian condition number {cond:.3e} exceeds {limit:.1e} at q={np.array2string(self.q, precision=6)}",
                condition=cond, q=self.q.copy())
        return cond


_LEVI = np.zeros((3, 3, 3))
_LEVI[0, 1, 2] = _LEVI[1, 2, 0] = _LEVI[2, 0, 1] = 1.0
_LEVI[0, 2, 1] = _LEVI[2, 1, 0] = _LEVI[1, 0, 2] = -1.0


def _bcross(a, b):
    """Broadcast cross product over leading axes (cheaper than np.cross for small arrays)."""
    return np.einsum("ijk,...j,...k->...i", _LEVI, a, b)


@dataclass(frozen=True, eq=False)
class Link:
    a: float
    alpha: float
    d: float
    offset: float
    mass: float
    com: np.ndarray
    inertia: np.ndarray
    armature: float = 0.0


class SerialArm:
    """All-revolute serial manipulator in standard DH convention.

    Joint ``i`` turns about ``z_{i-1}``; link ``i`` is fixed to frame ``i``.
    Link CM positions and inertia tensors are given in the link frame.
    """

    def __init__(self, links, gravity_dir=(0.0, 0.0, -1.0), q_min=None, q_max=None,
                 name="serial arm"):
        self.links = list(links)
        self.n_joints = len(self.links)
        k = np.asarray(gravity_dir, dtype=float)
        if abs(np.linalg.norm(k) - 1.0) > 1e-12:
            raise ConfigError("gravity_dir must be a unit vector")
        self.gravity_dir = k
        self.q_min = np.full(self.n_joints, -np.pi) if q_min is None else np.asarray(q_min, float)
        self.q_max = np.full(self.n_joints, np.pi) if q_max is None else np.asarray(q_max, float)
        self.name = name
        self._a = np.array([l.a for l in self.links])
        self._d = np.array([l.d for l in self.links])
        self._ca = np.cos([l.alpha for l in self.links])
        self._sa = np.sin([l.alpha for l in self.links])
        self._offset = np.array([l.offset for l in self.links])
        self._m = np.array([l.mass for l in self.links])
        self._com = np.ascontiguousarray([l.com for l in self.links], dtype=float)
        self._I = np.ascontiguousarray([l.inertia for l in self.links], dtype=float)
        self._armature = np.diag([l.armature for l in self.links])

    @classmethod
    def from_table(cls, table):
        try:
            links = []
            for row in table["joint"]:
                inertia = np.asarray(row["inertia"], dtype=float)
                if inertia.shape == (6,):
                    ixx, iyy, izz, ixy, iyz, ixz = inertia
                    inertia = np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])
                links.append(Link(float(row["a"]), float(row["alpha"]), float(row["d"]),
                                  float(row.get("offset", 0.0)), float(row["mass"]),
                                  np.asarray(row["com"], dtype=float),
                                  check_inertia_tensor(inertia),
                                  float(row.get("armature", 0.0))))
            rows = table["joint"]
            q_min = [row.get("q_min", -np.pi) for row in rows]
            q_max = [row.get("q_max", np.pi) for row in rows]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad manipulator table: {exc}") from exc
        return cls(links, table.get("gravity_dir", (0.0, 0.0, -1.0)), q_min, q_max,
                   table.get("name", "serial arm"))

    # -- kinematics --

    def _frames(self, q):
        """Rotations and origins of frames 0..n in the world."""
        n = self.n_joints
        Rs = np.empty((n + 1, 3, 3))
        ps = np.empty((n + 1, 3))
        Rs[0] = np.eye(3)
        ps[0] = 0.0
        th = np.asarray(q) + self._offset
        ct, st = np.cos(th), np.sin(th)
        for i in range(n):
            ca, sa = self._ca[i], self._sa[i]
            A = np.array([[ct[i], -st[i] * ca, st[i] * sa],
                          [st[i], ct[i] * ca, -ct[i] * sa],
                          [0.0, sa, ca]])
            Rs[i + 1] = Rs[i] @ A
            ps[i + 1] = ps[i] + Rs[i] @ np.array([self._a[i] * ct[i], self._a[i] * st[i], self._d[i]])
        return Rs, ps

    def forward_kinematics(self, q, c=np.zeros(3)):
        """Payload CM frame pose ``(R, c_pos)`` in the world frame."""
        Rs, ps = self._frames(q)
        return Rs[-1], ps[-1] + Rs[-1] @ c

    def _point_jacobian(self, Z, P, x, upto):
        Jv = np.zeros((3, self.n_joints))
        Jv[:, :upto] = _bcross(Z[:upto], x - P[:upto]).T
        return Jv

    def world_jacobian(self, q, c=np.zeros(3)):
        Rs, ps = self._frames(q)
        Z, P = Rs[:-1, :, 2], ps[:-1]
        x = ps[-1] + Rs[-1] @ c
        return np.vstack([self._point_jacobian(Z, P, x, self.n_joints), Z.T])

    def jacobian(self, q, c=np.zeros(3)):
        R, _ = self.forward_kinematics(q, c)
        Jw = self.world_jacobian(q, c)
        return np.vstack([R.T @ Jw[:3], R.T @ Jw[3:]])

    def jacobian_dot(self, q, qd, c=np.zeros(3)):
        return self.state(q, qd, c, with_dynamics=False).J_dot

    # -- dynamics --

    def _recursion(self, Rs, ps, qd):
        """Link angular velocities, origin velocities and zero-q_ddot accelerations."""
        n = self.n_joints
        w = np.zeros((n + 1, 3))
        v = np.zeros((n + 1, 3))
        alpha = np.zeros((n + 1, 3))
        acc = np.zeros((n + 1, 3))
        for i in range(n):
            z = Rs[i][:, 2]
            r = ps[i + 1] - ps[i]
            w[i + 1] = w[i] + z * qd[i]
            alpha[i + 1] = alpha[i] + cross3(w[i], z) * qd[i]
            v[i + 1] = v[i] + cross3(w[i + 1], r)
            acc[i + 1] = acc[i] + cross3(alpha[i + 1], r) + cross3(w[i + 1], cross3(w[i + 1], r))
        return w, v, alpha, acc

    def dynamics(self, q, qd, extra_bodies=(), gravity=GRAVITY):
        """Joint-space inertia ``M_r`` and bias ``h_r`` (Coriolis, centrifugal, gravity).

        ``extra_bodies`` is a sequence of ``(mass, com_in_flange, inertia_in_flange)``
        rigidly attached to the last link; it lets the same routine assemble an
        arm-plus-payload multibody.
        """
        Rs, ps = self._frames(q)
        w, v, alpha, acc = self._recursion(Rs, ps, qd)
        return self._assemble(Rs, ps, w, alpha, acc, extra_bodies, gravity)

    def _assemble(self, Rs, ps, w, alpha, acc, extra_bodies=(), gravity=GRAVITY):
        n = self.n_joints
        Z, P = Rs[:-1, :, 2], ps[:-1]
        m = self._m
        Rl = Rs[1:]
        s = np.einsum("kab,kb->ka", Rl, self._com)
        C = ps[1:] + s
        I_w = np.einsum("kab,kbc,kdc->kad", Rl, self._I, Rl)
        wl, al = w[1:], alpha[1:]
        a_c = acc[1:] + _bcross(al, s) + _bcross(wl, _bcross(wl, s))
        if len(extra_bodies):
            Rn = Rs[-1]
            for mass, com, inertia in extra_bodies:
                sx = Rn @ np.asarray(com, float)
                m = np.append(m, mass)
                s = np.vstack([s, sx])
                C = np.vstack([C, ps[-1] + sx])
                I_w = np.concatenate([I_w, (Rn @ np.asarray(inertia, float) @ Rn.T)[None]])
                wl = np.vstack([wl, w[-1]])
                al = np.vstack([al, alpha[-1]])
                a_c = np.vstack([a_c, acc[-1] + cross3(alpha[-1], sx) + cross3(w[-1], cross3(w[-1], sx))])
        nb = len(m)
        owner = np.minimum(np.arange(nb), n - 1)
        mask = np.arange(n)[None, :] <= owner[:, None]  # (nb, n)
        Jv = _bcross(Z[None, :, :], C[:, None, :] - P[None, :, :]) * mask[:, :, None]  # (nb, n, 3)
        Jw = np.broadcast_to(Z, (nb, n, 3)) * mask[:, :, None]
        M = (np.einsum("k,kia,kja->ij", m, Jv, Jv)
             + np.einsum("kia,kab,kjb->ij", Jw, I_w, Jw)
             + self._armature)
        g = gravity * self.gravity_dir
        f_lin = m[:, None] * (a_c - g)
        Iw_w = np.einsum("kab,kb->ka", I_w, wl)
        f_ang = np.einsum("kab,kb->ka", I_w, al) + _bcross(wl, Iw_w)
        h = np.einsum("kia,ka->i", Jv, f_lin) + np.einsum("kia,ka->i", Jw, f_ang)
        return 0.5 * (M + M.T), h

    def gravity_torque(self, q, extra_bodies=()):
        _, h = self.dynamics(q, np.zeros(self.n_joints), extra_bodies)
        return h

    def state(self, q, qd, c=np.zeros(3), with_dynamics=True):
        """Kinematics and dynamics cache at ``(q, qd)`` (compiled kernel)."""
        q = np.ascontiguousarray(q, dtype=float)
        qd = np.ascontiguousarray(qd, dtype=float)
        R, x, J, J_dot, M_r, h_r = arm_state(
            q, qd, np.ascontiguousarray(c, dtype=float), self._a, self._d, self._ca, self._sa,
            self._offset, self._m, self._com, self._I, np.diag(self._armature).copy(),
            GRAVITY * self.gravity_dir, with_dynamics)
        if not with_dynamics:
            M_r = h_r = None
        return ManipulatorState(q, qd, R, x, J, J_dot, M_r, h_r)

    def _state_numpy(self, q, qd, c=np.zeros(3), with_dynamics=True):
        """Reference implementation of :meth:`state` in vectorised numpy."""
        q = np.asarray(q, dtype=float)
        qd = np.asarray(qd, dtype=float)
        Rs, ps = self._frames(q)
        w, v, alpha, acc = self._recursion(Rs, ps, qd)
        Z, P = Rs[:-1, :, 2], ps[:-1]
        R = Rs[-1]
        rc = R @ c
        x = ps[-1] + rc
        Jv_w = _bcross(Z, x - P).T
        Jw_w = Z.T
        # time derivative of the world-frame geometric Jacobian
        Zd = _bcross(w[:-1], Z)
        xd = v[-1] + cross3(w[-1], rc)
        Jvd_w = (_bcross(Zd, x - P) + _bcross(Z, xd - v[:-1])).T
        Jwd_w = Zd.T
        J = np.vstack([R.T @ Jv_w, R.T @ Jw_w])
        wb = R.T @ w[-1]
        Wx = skew(wb)
        J_dot = np.vstack([R.T @ Jvd_w - Wx @ J[:3], R.T @ Jwd_w - Wx @ J[3:]])
        if with_dynamics:
            M_r, h_r = self._assemble(Rs, ps, w, alpha, acc)
        else:
            M_r = h_r = None
        return ManipulatorState(q, qd, R, x, J, J_dot, M_r, h_r)


class CartesianStage:
    """Ideal 6-DOF positioning stage.

    ``q = [x, y, z, yaw, pitch, roll]``: the carriage sits at ``(x, y, z)``
    with attitude ``Rz(yaw) Ry(pitch) Rx(roll)``. The carriage is one rigid
    body of generalised inertia ``Lambda`` expressed at the payload CM frame,
    so ``M_r = J^T Lambda J`` and the Cartesian inertia is exactly ``Lambda``.
    """

    n_joints = 6

    def __init__(self, carriage, gravity_dir=(0.0, 0.0, -1.0), q_min=None, q_max=None,
                 name="cartesian stage"):
        self.carriage = carriage
        self.Lambda = carriage.matrix
        self.gravity_dir = np.asarray(gravity_dir, dtype=float)
        self.q_min = np.array([-1, -1, -1, -np.pi, -1.2, -np.pi]) if q_min is None else np.asarray(q_min, float)
        self.q_max = np.array([1, 1, 1, np.pi, 1.2, np.pi]) if q_max is None else np.asarray(q_max, float)
        self.name = name

    @staticmethod
    def _gimbal(q):
        Rz, Ry, Rx = rot_z(q[3]), rot_y(q[4]), rot_x(q[5])
        Rzy = Rz @ Ry
        R = Rzy @ Rx
        E = np.column_stack([[0.0, 0.0, 1.0], Rz[:, 1], Rzy[:, 0]])
        return R, E

    def forward_kinematics(self, q, c=np.zeros(3)):
        R, _ = self._gimbal(q)
        return R, np.asarray(q[:3], float) + R @ c

    def jacobian(self, q, c=np.zeros(3)):
        R, E = self._gimbal(q)
        B = R.T @ E
        J = np.zeros((6, 6))
        J[:3, :3] = R.T
        J[:3, 3:] = -skew(c) @ B
        J[3:, 3:] = B
        return J

    def jacobian_dot(self, q, qd, c=np.zeros(3)):
        return self.state(q, qd, c, with_dynamics=False).J_dot

    def state(self, q, qd, c=np.zeros(3), with_dynamics=True):
        q = np.asarray(q, dtype=float)
        qd = np.asarray(qd, dtype=float)
        R, E = self._gimbal(q)
        B = R.T @ E
        J = np.zeros((6, 6))
        J[:3, :3] = R.T
        J[:3, 3:] = -skew(c) @ B
        J[3:, 3:] = B
        w_world = E @ qd[3:]
        wb = R.T @ w_world
        # gimbal axes rotate with the preceding gimbal stages
        e = E.T
        Ed = np.column_stack([np.zeros(3),
                              cross3(qd[3] * e[0], e[1]),
                              cross3(qd[3] * e[0] + qd[4] * e[1], e[2])])
        Wx = skew(wb)
        Bd = -Wx @ B + R.T @ Ed
        J_dot = np.zeros((6, 6))
        J_dot[:3, :3] = -Wx @ R.T
        J_dot[:3, 3:] = -skew(c) @ Bd
        J_dot[3:, 3:] = Bd
        c_pos = q[:3] + R @ c
        if with_dynamics:
            nu = J @ qd
            Lam = self.Lambda
            F_g = np.concatenate([self.carriage.mass * GRAVITY * (R.T @ self.gravity_dir), np.zeros(3)])
            M_r = J.T @ Lam @ J
            h_r = J.T @ (Lam @ (J_dot @ qd) + gyric_term(self.carriage, nu) - F_g)
            M_r = 0.5 * (M_r + M_r.T)
        else:
            M_r = h_r = None
        return ManipulatorState(q, qd, R, c_pos, J, J_dot, M_r, h_r)

    def dynamics(self, q, qd, extra_bodies=()):
        if extra_bodies:
            raise NotImplementedError("extra bodies are not supported on the ideal stage")
        st = self.state(q, qd)
        return st.M_r, st.h_r

    def gravity_torque(self, q):
        return self.dynamics(q, np.zeros(6))[1]

    def exact_cartesian_inertia(self):
        return self.Lambda.copy()


# --- module-level operations -------------------------------------------------

def forward_kinematics(model, q, c=np.zeros(3)):
    return model.forward_kinematics(q, c)


def jacobian(model, q, c=np.zeros(3)):
    return model.jacobian(q, c)


def jacobian_dot(model, q, qd, c=np.zeros(3)):
    return model.jacobian_dot(q, qd, c)


def manipulator_dynamics(model, q, qd):
    return model.dynamics(q, qd)


def payload_gravity_wrench(attachment, R, gravity_dir):
    return np.concatenate([attachment.mass * GRAVITY * (R.T @ gravity_dir), np.zeros(3)])


def combined_dynamics(model, attachment, state):
    """``M_t = J^T M_m J + M_r`` and
    ``h_t = h_r + J^T h_m + J^T M_m J_dot qd - m_m g J_v^T R^T k``."""
    J = state.J
    M_m = attachment.M_m
    nu = J @ state.qd
    M_t = J.T @ M_m @ J + state.M_r
    h_t = (state.h_r + J.T @ (gyric_term(attachment.payload.inertia, nu)
                              + M_m @ (state.J_dot @ state.qd))
           - attachment.mass * GRAVITY * (state.J_v.T @ (state.R.T @ model.gravity_dir)))
    return 0.5 * (M_t + M_t.T), h_t


def cartesian_inertia(model, state, check=True, limit=COND_LIMIT):
    """``M_Cr = J^-T M_r J^-1`` via two linear solves."""
    if check:
        state.check_jacobian(limit)
    if hasattr(model, "exact_cartesian_inertia"):
        return model.exact_cartesian_inertia()
    X = np.linalg.solve(state.J.T, state.M_r)  # J^-T M_r
    M_Cr = np.linalg.solve(state.J.T, X.T).T  # (J^-T (J^-T M_r)^T)^T = J^-T M_r J^-1
    return 0.5 * (M_Cr + M_Cr.T)


def cartesian_inertia_explicit(state):
    Ji = np.linalg.inv(state.J)
    return Ji.T @ state.M_r @ Ji


def load_arm(path=None):
    from .config import load_toml

    path = DATA_DIR / "puma560_like.toml" if path is None else Path(path)
    return SerialArm.from_table(load_toml(path))


def default_arm():
    return load_arm()
