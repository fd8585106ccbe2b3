"""Small 3-D / 6-D linear algebra used throughout the package.

Conventions
-----------
* A twist is ``nu = [v, w]`` (linear velocity first), a wrench is
  ``F = [f, n]`` (force first). Both are plain ``(6,)`` float arrays.
* Quaternions are scalar-first ``[w, x, y, z]`` and map body to world.
* Rotation matrices map body coordinates to world coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import NonPositiveMass, NonSPDInertia

GRAVITY = 9.81  # m/s^2

ORTHO_TOL = 1e-10
ORTHO_TOL_LONG = 1e-8


def skew(c):
    """Return the matrix ``[c x]`` with ``skew(c) @ x == np.cross(c, x)``."""
    cx, cy, cz = c
    return np.array([[0.0, -cz, cy],
                     [cz, 0.0, -cx],
                     [-cy, cx, 0.0]])


def cross3(a, b):
    """Cross product of two 3-vectors; much cheaper than ``np.cross`` at this size."""
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def sensor_transform(c):
    """Wrench map from the sensor frame {S} to the CM frame {C}.

    ``c`` is the CM location seen from the sensor origin. The returned
    ``T = [[I, 0], [-[c x], I]]`` keeps the force and moves the moment to
    the CM: ``n_C = n_S - c x f``.
    """
    T = np.eye(6)
    T[3:, :3] = -skew(c)
    return T


def sensor_transform_inv(c):
    T = np.eye(6)
    T[3:, :3] = skew(c)
    return T


@dataclass(frozen=True, eq=False)
class Inertia6:
    """Generalised rigid-body inertia ``diag(m I, I_C)`` about the CM."""

    mass: float
    inertia: np.ndarray

    @cached_property
    def matrix(self):
        M = np.zeros((6, 6))
        M[:3, :3] = self.mass * np.eye(3)
        M[3:, 3:] = self.inertia
        M.setflags(write=False)
        return M

    def scaled(self, factor):
        return Inertia6(self.mass * factor, self.inertia * factor)


def as_inertia6(obj):
    """Accept an Inertia6, a rigid spacecraft, a flexible spacecraft or an attachment."""
    if isinstance(obj, Inertia6):
        return obj
    if hasattr(obj, "rigid"):
        return obj.rigid
    if hasattr(obj, "payload"):
        return obj.payload.inertia
    return obj.inertia


def check_inertia_tensor(I_C, tol=ORTHO_TOL):
    I_C = np.asarray(I_C, dtype=float)
    if I_C.shape != (3, 3) or not np.all(np.isfinite(I_C)):
        raise NonSPDInertia(f"inertia tensor must be a finite 3x3 matrix, got {I_C!r}")
    if not np.allclose(I_C, I_C.T, atol=tol * max(1.0, np.abs(I_C).max())):
        raise NonSPDInertia("inertia tensor is not symmetric")
    eig = np.linalg.eigvalsh(I_C)
    if eig[0] <= 0.0:
        raise NonSPDInertia(f"inertia tensor is not positive definite (eigenvalues {eig})")
    # principal moments must satisfy the triangle inequality
    slack = tol * eig.sum()
    if eig[0] + eig[1] < eig[2] - slack:
        raise NonSPDInertia(f"principal moments {eig} violate the triangle inequality")
    return I_C


def block_inertia(m, I_C):
    """Build an :class:`Inertia6` after checking ``m > 0`` and ``I_C`` SPD."""
    m = float(m)
    if not np.isfinite(m) or m <= 0.0:
        raise NonPositiveMass(f"mass must be positive, got {m}")
    I_C = check_inertia_tensor(I_C)
    return Inertia6(m, 0.5 * (I_C + I_C.T))


# --- rotations ---------------------------------------------------------------

def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def is_rotation(R, tol=ORTHO_TOL):
    R = np.asarray(R)
    return (R.shape == (3, 3)
            and np.abs(R.T @ R - np.eye(3)).max() <= tol
            and abs(np.linalg.det(R) - 1.0) <= tol)


def quat_mul(p, q):
    pw, px, py, pz = p
    qw, qx, qy, qz = q
    return np.array([
        pw * qw - px * qx - py * qy - pz * qz,
        pw * qx + px * qw + py * qz - pz * qy,
        pw * qy - px * qz + py * qw + pz * qx,
        pw * qz + px * qy - py * qx + pz * qw,
    ])


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.sqrt(q @ q)


def quat_derivative(q, omega):
    """``q_dot = 0.5 * q (x) [0, omega]`` for a body-frame rate."""
    w, x, y, z = q
    ox, oy, oz = omega
    return 0.5 * np.array([
        -x * ox - y * oy - z * oz,
        w * ox + y * oz - z * oy,
        w * oy - x * oz + z * ox,
        w * oz + x * oy - y * ox,
    ])


def quat_to_rot(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rot_to_quat(R):
    """Shepperd's method; returns the quaternion with non-negative scalar part."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    cands = np.array([tr, R[0, 0], R[1, 1], R[2, 2]])
    i = int(np.argmax(cands))
    if i == 0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif i == 1:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s,
                      (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif i == 2:
        s = 2.0 * np.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2])
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s,
                      0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2])
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s,
                      (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    if q[0] < 0:
        q = -q
    return quat_normalize(q)


def orthonormalize(R):
    """Project onto SO(3) via SVD (nearest rotation in Frobenius norm)."""
    U, _, Vt = np.linalg.svd(R)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


# --- integration -------------------------------------------------------------

def rk4_step(f, t, y, dt):
    """One classical Runge-Kutta step of ``y' = f(t, y)``."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
