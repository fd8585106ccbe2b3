"""Static identification of the sensor offset and payload parameters.

At rest the sensor reads ``f_s = f_0 + g R^T w`` with ``w = m k`` and
``n_s = n_0 - g [(R^T w) x] c``. Both relations are linear in their unknowns,
so the force regression is solved first and its ``w`` then fixes the moment
regressor.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import EmptyDataset, RankDeficient, ValidationError, ZeroCMOffset
from .sensor import DEFAULT_K, SensorCalibration, SensorModel, SensorStream
from .spatial import GRAVITY, rot_x, rot_y, skew

RANK_TOL = 1e-10
ZERO_C_TOL = 1e-9  # m; smaller CM offsets count as zero for the rotational index


@dataclass
class CalibrationPose:
    q: np.ndarray
    R: np.ndarray
    F_s_measured: np.ndarray


@dataclass(eq=False)
class CalibrationResult:
    F_0_hat: np.ndarray
    w_hat: np.ndarray
    c_hat: np.ndarray
    force_residuals: np.ndarray = field(repr=False)
    moment_residuals: np.ndarray = field(repr=False)
    cond_psi1: float = np.nan
    cond_psi2: float = np.nan

    @property
    def m_hat(self):
        return float(np.linalg.norm(self.w_hat))

    @property
    def k_hat(self):
        return self.w_hat / np.linalg.norm(self.w_hat)

    def as_sensor_calibration(self):
        return SensorCalibration(self.F_0_hat, self.m_hat, self.c_hat, self.k_hat)

    def to_text(self):
        rows = [("m_hat", self.m_hat)]
        rows += [(f"k_hat_{a}", v) for a, v in zip("xyz", self.k_hat)]
        rows += [(f"c_hat_{a}", v) for a, v in zip("xyz", self.c_hat)]
        rows += [(f"F0_hat_{a}", v) for a, v in zip(("fx", "fy", "fz", "nx", "ny", "nz"), self.F_0_hat)]
        rows += [("cond_psi1", self.cond_psi1), ("cond_psi2", self.cond_psi2),
                 ("max_force_residual", self.force_residuals.max()),
                 ("max_moment_residual", self.moment_residuals.max())]
        return "".join(f"{k} = {v:.17g}\n" for k, v in rows)


def _check_poses(poses):
    if len(poses) == 0:
        raise EmptyDataset("calibration dataset is empty")


def build_force_regression(poses, check=True):
    """Stack ``f_s = [I  g R^T] [f_0; w]`` over all poses."""
    _check_poses(poses)
    y = np.concatenate([np.asarray(p.F_s_measured[:3], float) for p in poses])
    Psi = np.vstack([np.hstack([np.eye(3), GRAVITY * np.asarray(p.R).T]) for p in poses])
    if check:
        _rank_check(Psi, "force")
    return y, Psi


def build_moment_regression(poses, w_hat, check=True):
    """Stack ``n_s = [I  -g [(R^T w) x]] [n_0; c]`` using the identified ``w``."""
    _check_poses(poses)
    w_hat = np.asarray(w_hat, float)
    y = np.concatenate([np.asarray(p.F_s_measured[3:], float) for p in poses])
    Psi = np.vstack([np.hstack([np.eye(3), -GRAVITY * skew(np.asarray(p.R).T @ w_hat)])
                     for p in poses])
    if check:
        _rank_check(Psi, "moment")
    return y, Psi


def _rank_check(Psi, label):
    if Psi.shape[0] < Psi.shape[1]:
        _, _, Vt = np.linalg.svd(Psi)
        raise RankDeficient(f"{label} regression has {Psi.shape[0]} rows for {Psi.shape[1]} unknowns",
                            null_direction=Vt[-1])
    s = np.linalg.svd(Psi, compute_uv=False)
    if s[-1] <= RANK_TOL * s[0]:
        _, _, Vt = np.linalg.svd(Psi)
        raise RankDeficient(f"{label} regression is rank deficient (sigma_min/sigma_max = "
                            f"{s[-1] / s[0]:.3e}); add poses with other orientations",
                            null_direction=Vt[-1])


def solve_least_squares(y, Psi):
    """Minimiser of ``||Psi theta - y||`` via a thin QR factorisation.

    Returns ``(theta, residual)``.
    """
    Psi = np.asarray(Psi, float)
    y = np.asarray(y, float)
    _rank_check(Psi, "least-squares")
    Qm, Rm = np.linalg.qr(Psi)
    theta = solve_triangular(Rm, Qm.T @ y)
    return theta, y - Psi @ theta


def calibrate(poses):
    """Sequential identification: force regression, then moment regression."""
    y1, Psi1 = build_force_regression(poses)
    th1, r1 = solve_least_squares(y1, Psi1)
    y2, Psi2 = build_moment_regression(poses, th1[3:])
    th2, r2 = solve_least_squares(y2, Psi2)
    return CalibrationResult(
        F_0_hat=np.concatenate([th1[:3], th2[:3]]), w_hat=th1[3:], c_hat=th2[3:],
        force_residuals=np.linalg.norm(r1.reshape(-1, 3), axis=1),
        moment_residuals=np.linalg.norm(r2.reshape(-1, 3), axis=1),
        cond_psi1=float(np.linalg.cond(Psi1)), cond_psi2=float(np.linalg.cond(Psi2)))


def design_orientations(p=8):
    """``p`` orientations about two perpendicular axes (x, then y)."""
    if p < 3:
        raise ValidationError("at least 3 orientations are needed")
    nx = (p + 1) // 2
    ny = p - nx
    Rs = [rot_x(2 * np.pi * i / nx) for i in range(nx)]
    Rs += [rot_y(2 * np.pi * (i + 0.5) / ny) for i in range(ny)]
    return Rs


_WRIST_OFFSETS = np.array([
    [0.0, 0.0, 0.0], [np.pi / 2, 0.0, 0.0], [np.pi, 0.0, 0.0], [-np.pi / 2, 0.0, 0.0],
    [0.0, np.pi / 2, 0.0], [0.0, -np.pi / 2, 0.0], [0.0, np.pi / 3, np.pi / 2],
    [np.pi / 2, np.pi / 3, np.pi / 2]])


def design_joint_poses(model, q0, p=8):
    """Joint configurations that turn the last three joints away from ``q0``."""
    q0 = np.asarray(q0, float)
    qs = []
    for i in range(p):
        q = q0.copy()
        q[-3:] += _WRIST_OFFSETS[i % len(_WRIST_OFFSETS)] * (1 + i // len(_WRIST_OFFSETS))
        qs.append(q)
    return qs


def static_wrench(R, mass, c, k=DEFAULT_K):
    """Noise-free sensor wrench of a payload at rest (offset excluded)."""
    f = mass * GRAVITY * (np.asarray(R).T @ np.asarray(k, float))
    return np.concatenate([f, np.cross(c, f)])


def capture(stream, F_true, n_avg=100, t=0.0):
    """Average ``n_avg`` successive samples of a static wrench."""
    if n_avg < 1:
        raise ValidationError("n_avg must be >= 1")
    acc = np.zeros(6)
    for i in range(n_avg):
        acc += stream.sample(F_true, t + i * stream.model.sample_period).F_s_raw
    return acc / n_avg


def synthetic_dataset(rotations, F_0, mass, c, k=DEFAULT_K, noise_std=(0.0, 0.0),
                      resolution=(0.0, 0.0), n_avg=100, seed=0, qs=None):
    """Generate calibration poses from known parameters."""
    sensor = SensorModel(offset=np.asarray(F_0, float), noise_std=tuple(noise_std),
                         resolution=tuple(resolution), seed=seed)
    stream = SensorStream(sensor)
    n_avg = n_avg if not sensor.ideal else 1
    poses = []
    for i, R in enumerate(rotations):
        F = capture(stream, static_wrench(R, mass, c, k), n_avg)
        q = np.zeros(6) if qs is None else np.asarray(qs[i], float)
        poses.append(CalibrationPose(q, np.asarray(R, float), F))
    return poses


def arm_dataset(model, qs, F_0, mass, c, k=None, **kw):
    """Calibration poses taken at joint configurations of ``model``."""
    k = model.gravity_dir if k is None else k
    Rs = [model.forward_kinematics(q)[0] for q in qs]
    return synthetic_dataset(Rs, F_0, mass, c, k, qs=qs, **kw)


# --- sensitivity ---------------------------------------------------------------

def sensitivity_bounds(mass, c, delta_q_norm, n_joints=6):
    """Conservative bounds on the static wrench change due to a joint error.

    ``||df|| <= n g m ||dq||`` and ``||dn|| <= n g m ||c|| ||dq||`` with
    ``n = 6`` for the six-joint arm.
    """
    mass = getattr(mass, "mass", mass)
    df = n_joints * GRAVITY * mass * delta_q_norm
    return df, df * np.linalg.norm(c)


def empirical_sensitivity(model, mass, c, delta_q_norm, n=10_000, seed=0):
    """Largest observed ``(||df_s||, ||dn_s||)`` over random ``(q, dq)``."""
    rng = np.random.default_rng(seed)
    k = model.gravity_dir
    df_max = dn_max = 0.0
    for _ in range(n):
        q = rng.uniform(model.q_min, model.q_max)
        dq = rng.standard_normal(model.n_joints)
        dq *= delta_q_norm / np.linalg.norm(dq)
        F1 = static_wrench(model.forward_kinematics(q)[0], mass, c, k)
        F2 = static_wrench(model.forward_kinematics(q + dq)[0], mass, c, k)
        d = F2 - F1
        df_max = max(df_max, np.linalg.norm(d[:3]))
        dn_max = max(dn_max, np.linalg.norm(d[3:]))
    return df_max, dn_max


# --- micro-g indices -------------------------------------------------------------

def calibration_residuals(poses, calibration):
    """Per-pose ``(force, moment)`` residuals of the readings under a calibration."""
    _check_poses(poses)
    w = calibration.m_hat * np.asarray(calibration.k_hat, float)
    F0 = np.asarray(calibration.F_0_hat, float)
    rf, rn = [], []
    for p in poses:
        Rt_w = np.asarray(p.R).T @ w
        F = np.asarray(p.F_s_measured, float)
        rf.append(F[:3] - F0[:3] - GRAVITY * Rt_w)
        rn.append(F[3:] - F0[3:] + GRAVITY * np.cross(Rt_w, calibration.c_hat))
    return np.array(rf), np.array(rn)


def _as_sensor_cal(cal):
    return cal.as_sensor_calibration() if isinstance(cal, CalibrationResult) else cal


def microg_index(poses, flight_mass, calibration):
    """Translational index: ``||sum_i r_f,i|| / (n g m_s) * 1e6``."""
    rf, _ = calibration_residuals(poses, _as_sensor_cal(calibration))
    return np.linalg.norm(rf.sum(axis=0)) / (len(poses) * GRAVITY * flight_mass) * 1e6


def microg_index_rotational(poses, calibration):
    """Rotational index ``||sum_i r_n,i|| / (n g ||c|| m_m) * 1e6``."""
    cal = _as_sensor_cal(calibration)
    cn = np.linalg.norm(cal.c_hat)
    if cn <= ZERO_C_TOL:
        raise ZeroCMOffset("rotational index undefined for a zero CM offset")
    _, rn = calibration_residuals(poses, cal)
    return np.linalg.norm(rn.sum(axis=0)) / (len(poses) * GRAVITY * cn * cal.m_hat) * 1e6


def microg_index_mean_norm(poses, flight_mass, calibration):
    """Stricter diagnostic: mean of per-pose residual norms (no cancellation)."""
    rf, _ = calibration_residuals(poses, _as_sensor_cal(calibration))
    return np.linalg.norm(rf, axis=1).mean() / (GRAVITY * flight_mass) * 1e6


def resolution_floor(sensor_resolution, flight_mass):
    """Best achievable index for a sensor of the given force resolution."""
    return sensor_resolution / (GRAVITY * flight_mass) * 1e6


# --- CSV -------------------------------------------------------------------------

_WRENCH_COLS = ["fx", "fy", "fz", "nx", "ny", "nz"]


def write_poses_csv(path, poses):
    n = len(poses[0].q)
    header = [f"q{i + 1}" for i in range(n)] + [f"R{i}{j}" for i in range(3) for j in range(3)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header + _WRENCH_COLS)
        for p in poses:
            vals = list(p.q) + list(np.asarray(p.R).ravel()) + list(p.F_s_measured)
            w.writerow([f"{float(v):.17g}" for v in vals])


def read_poses_csv(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError as exc:
        raise ValidationError(f"file not found: {path}") from exc
    if len(rows) < 2:
        raise EmptyDataset(f"{path} has no data rows")
    header = rows[0]
    n = sum(1 for h in header if h.startswith("q"))
    if len(header) != n + 15:
        raise ValidationError(f"{path}: expected q columns, 9 R entries and 6 wrench columns")
    poses = []
    for r in rows[1:]:
        if not r:
            continue
        v = np.array([float(x) for x in r])
        poses.append(CalibrationPose(v[:n], v[n:n + 9].reshape(3, 3), v[n + 9:]))
    return poses


def write_residuals_csv(path, poses, result):
    rf, rn = calibration_residuals(poses, result.as_sensor_calibration())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pose", "rfx", "rfy", "rfz", "rnx", "rny", "rnz"])
        for i, (a, b) in enumerate(zip(rf, rn)):
            w.writerow([i] + [f"{float(v):.17g}" for v in (*a, *b)])


def read_calibration_text(path):
    """Parse the key-value output of :meth:`CalibrationResult.to_text`."""
    vals = {}
    try:
        text = open(path).read()
    except FileNotFoundError as exc:
        raise ValidationError(f"file not found: {path}") from exc
    for line in text.splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            vals[k.strip()] = float(v)
    try:
        k_hat = np.array([vals[f"k_hat_{a}"] for a in "xyz"])
        return SensorCalibration(
            np.array([vals[f"F0_hat_{a}"] for a in ("fx", "fy", "fz", "nx", "ny", "nz")]),
            vals["m_hat"], np.array([vals[f"c_hat_{a}"] for a in "xyz"]), k_hat)
    except KeyError as exc:
        raise ValidationError(f"{path}: missing calibration key {exc}") from exc
