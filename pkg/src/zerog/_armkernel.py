"""Compiled serial-arm kinematics/dynamics kernel.

Same quantities as :meth:`SerialArm._state_numpy`, written as explicit loops
so numba can compile them; the numpy path remains the reference used in tests.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _cr(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=True)
def arm_state(q, qd, c, a, d, ca, sa, offset, m, com, inertia, armature, gvec, with_dyn):
    n = q.shape[0]
    Rs = np.empty((n + 1, 3, 3))
    ps = np.empty((n + 1, 3))
    Rs[0] = np.eye(3)
    ps[0, :] = 0.0
    for i in range(n):
        th = q[i] + offset[i]
        ct = np.cos(th)
        st = np.sin(th)
        A = np.empty((3, 3))
        A[0, 0] = ct
        A[0, 1] = -st * ca[i]
        A[0, 2] = st * sa[i]
        A[1, 0] = st
        A[1, 1] = ct * ca[i]
        A[1, 2] = -ct * sa[i]
        A[2, 0] = 0.0
        A[2, 1] = sa[i]
        A[2, 2] = ca[i]
        Rs[i + 1] = Rs[i] @ A
        loc = np.empty(3)
        loc[0] = a[i] * ct
        loc[1] = a[i] * st
        loc[2] = d[i]
        ps[i + 1] = ps[i] + Rs[i] @ loc

    w = np.zeros((n + 1, 3))
    v = np.zeros((n + 1, 3))
    al = np.zeros((n + 1, 3))
    acc = np.zeros((n + 1, 3))
    for i in range(n):
        z = Rs[i][:, 2].copy()
        r = ps[i + 1] - ps[i]
        w[i + 1] = w[i] + z * qd[i]
        al[i + 1] = al[i] + _cr(w[i], z) * qd[i]
        v[i + 1] = v[i] + _cr(w[i + 1], r)
        acc[i + 1] = acc[i] + _cr(al[i + 1], r) + _cr(w[i + 1], _cr(w[i + 1], r))

    R = Rs[n].copy()
    rc = R @ c
    x = ps[n] + rc
    xd = v[n] + _cr(w[n], rc)
    Jw = np.zeros((6, n))
    Jwd = np.zeros((6, n))
    for j in range(n):
        z = Rs[j][:, 2].copy()
        zd = _cr(w[j], z)
        dx = x - ps[j]
        col = _cr(z, dx)
        cold = _cr(zd, dx) + _cr(z, xd - v[j])
        for k in range(3):
            Jw[k, j] = col[k]
            Jw[3 + k, j] = z[k]
            Jwd[k, j] = cold[k]
            Jwd[3 + k, j] = zd[k]

    RT = R.T.copy()
    wb = RT @ w[n]
    J = np.empty((6, n))
    J[:3] = RT @ Jw[:3]
    J[3:] = RT @ Jw[3:]
    Wx = np.zeros((3, 3))
    Wx[0, 1] = -wb[2]
    Wx[0, 2] = wb[1]
    Wx[1, 0] = wb[2]
    Wx[1, 2] = -wb[0]
    Wx[2, 0] = -wb[1]
    Wx[2, 1] = wb[0]
    Jd = np.empty((6, n))
    Jd[:3] = RT @ Jwd[:3] - Wx @ J[:3]
    Jd[3:] = RT @ Jwd[3:] - Wx @ J[3:]

    M = np.zeros((n, n))
    h = np.zeros(n)
    if with_dyn:
        for i in range(n):
            M[i, i] = armature[i]
        for k in range(n):
            Rl = Rs[k + 1]
            s = Rl @ com[k]
            ck = ps[k + 1] + s
            Iw = Rl @ inertia[k] @ Rl.T
            wk = w[k + 1]
            ak = al[k + 1]
            ac = acc[k + 1] + _cr(ak, s) + _cr(wk, _cr(wk, s))
            flin = m[k] * (ac - gvec)
            fang = Iw @ ak + _cr(wk, Iw @ wk)
            Jv = np.zeros((3, n))
            Jr = np.zeros((3, n))
            for j in range(k + 1):
                z = Rs[j][:, 2].copy()
                col = _cr(z, ck - ps[j])
                for r_ in range(3):
                    Jv[r_, j] = col[r_]
                    Jr[r_, j] = z[r_]
            M += m[k] * (Jv.T @ Jv) + Jr.T @ Iw @ Jr
            h += Jv.T @ flin + Jr.T @ fang
        M = 0.5 * (M + M.T)
    return R, x, J, Jd, M, h
