"""Closed-loop simulation of the emulation testbed and the reference comparison.

Two stepping modes are provided.

``ideal``
    The sensed wrench depends on the joint acceleration, which depends on
    the torque, which depends on the sensed wrench. Both dependencies are
    affine (``F_sg = F_sg0 + S qdd`` and ``tau = tau0 + G F_sg``), so the
    loop is closed by one linear solve per derivative evaluation. Sensor
    noise and quantisation are switched off; offsets and calibration errors
    are kept. The reference integrators ride along in the RK4 state.

``sampled``
    A discrete controller runs every ``control_period``. At each tick it
    samples the sensor under the torque held since the previous tick, so the
    force enters the law one period late. The plant is integrated at ``dt``
    with the torque held.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controller import ControllerState, RigidEmulationLaw
from .errors import Diverged, NonDecayingError, SingularClosedLoopMatrix
from .flexible import FlexEmulationState, FlexibleEmulationLaw, flex_emulation_step
from .manipulator import combined_dynamics
from .sensor import SensorStream, compensated_wrench, true_interaction_wrench
from .spacecraft import FlexState, RigidBodyState, linear_momentum_world, simulate_free_flyer
from .spatial import rot_to_quat, sensor_transform, sensor_transform_inv
from .stability import check_mass_inequality, delta_envelope, fit_decay_envelope, workspace_samples

CLOSED_LOOP_COND_LIMIT = 1e12
DIVERGENCE_LIMIT = 1e6  # any state entry beyond this aborts the run


def _fmt(v):
    return f"{float(v):.17g}"


def _check_finite(y, t):
    if not (np.all(np.isfinite(y)) and np.abs(y).max() < DIVERGENCE_LIMIT):
        raise Diverged(f"closed loop diverged at t={t:.6g} s", t=t)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


_W = ("fx", "fy", "fz", "nx", "ny", "nz")
_NU = ("vx", "vy", "vz", "wx", "wy", "wz")


@dataclass
class TrajectoryLog:
    """Per-step record of the emulation run (one row per ``dt``)."""

    n_joints: int
    n_modes: int = 0
    rows: dict = field(default_factory=dict)
    wall_time: float = 0.0

    FIELDS = ("t", "q", "qd", "nu", "pos", "quat", "nu_dot_star", "F_s", "F_sg", "F_ext_star",
              "F_ext", "tau", "q_tilde", "qd_tilde", "delta_norm", "xi", "xi_dot")

    def __post_init__(self):
        self._buf = {k: [] for k in self.FIELDS}

    def append(self, **kw):
        for k, v in kw.items():
            self._buf[k].append(v)

    def finish(self):
        self.rows = {k: np.array(v, dtype=float) for k, v in self._buf.items() if v}
        return self

    def __getattr__(self, name):
        rows = self.__dict__.get("rows", {})
        if name in rows:
            return rows[name]
        raise AttributeError(name)

    def header(self):
        n, m = self.n_joints, self.n_modes
        h = ["t"]
        h += [f"q{i + 1}" for i in range(n)] + [f"qd{i + 1}" for i in range(n)]
        h += list(_NU) + ["px", "py", "pz", "qw", "qx", "qy", "qz"]
        h += [f"nudot_star_{a}" for a in _NU]
        h += [f"Fs_{a}" for a in _W] + [f"Fsg_{a}" for a in _W]
        h += [f"Fext_star_{a}" for a in _W] + [f"Fext_{a}" for a in _W]
        h += [f"tau{i + 1}" for i in range(n)]
        h += [f"q_tilde{i + 1}" for i in range(n)] + [f"qd_tilde{i + 1}" for i in range(n)]
        h += ["delta_norm"]
        h += [f"xi{i + 1}" for i in range(m)] + [f"xi_dot{i + 1}" for i in range(m)]
        return h

    def table(self):
        cols = [self.rows["t"][:, None]]
        for k in self.FIELDS[1:]:
            if k not in self.rows:
                continue
            a = self.rows[k]
            cols.append(a[:, None] if a.ndim == 1 else a)
        return np.hstack(cols)

    def write_csv(self, path, stride=1):
        write_csv(path, self.header(), self.table()[::stride])

    @property
    def x_norm(self):
        return np.linalg.norm(np.hstack([self.rows["q_tilde"], self.rows["qd_tilde"]]), axis=1)


def oracle_header(n_modes):
    h = ["t", "px", "py", "pz", "qw", "qx", "qy", "qz"] + list(_NU) + [f"Fext_{a}" for a in _W]
    return h + [f"xi{i + 1}" for i in range(n_modes)] + [f"xi_dot{i + 1}" for i in range(n_modes)]


def oracle_table(traj):
    cols = [traj.t[:, None], traj.position, traj.quat, traj.nu, traj.F_ext]
    if getattr(traj, "xi", None) is not None:
        cols += [traj.xi, traj.xi_dot]
    return np.hstack(cols)


class Emulator:
    """Runs one scenario; owns all mutable loop state."""

    def __init__(self, scenario):
        sc = scenario
        self.sc = sc
        self.model = sc.model
        self.att = sc.attachment
        self.n = self.model.n_joints
        self.nm = sc.flight.n_modes if sc.flexible else 0
        law_cls = FlexibleEmulationLaw if sc.flexible else RigidEmulationLaw
        self.law = law_cls(self.model, self.att, sc.flight, sc.gains, sc.cond_limit)
        self.cal = sc.calibration
        self.k = self.model.gravity_dir
        self.offset = np.asarray(sc.sensor.offset, float)
        self.T_inv = sensor_transform_inv(sc.c)
        # F_sg depends on qdd through -T(c_hat) T(c)^-1 M_m J qdd
        self.S_base = -sensor_transform(self.cal.c_hat) @ self.T_inv @ self.att.M_m
        self.zero6 = np.zeros(6)

    # -- shared pieces --

    def true_wrench(self, st, qdd, F_ext):
        nu_dot = st.J @ qdd + st.J_dot @ st.qd
        return true_interaction_wrench(self.att, st.nu, nu_dot, st.R, F_ext, self.k)

    def initial_state(self):
        sc = self.sc
        st = self.model.state(sc.q0, sc.qd0, sc.c)
        st.check_jacobian(sc.cond_limit)
        return st

    def _flex(self, y):
        if not self.nm:
            return None
        b = 4 * self.n
        return FlexState(y[b:b + self.nm], y[b + self.nm:])

    # -- ideal mode --

    def ideal_eval(self, y, F_ext, full=False):
        """State derivative with the algebraic loop solved exactly."""
        n = self.n
        law = self.law
        q, qd, q_ref, qd_ref = y[:n], y[n:2 * n], y[2 * n:3 * n], y[3 * n:4 * n]
        flex = self._flex(y)
        st = self.model.state(q, qd, self.sc.c)
        st.check_jacobian(self.sc.cond_limit)
        M_t, h_t = combined_dynamics(self.model, self.att, st)
        F_raw0 = self.true_wrench(st, np.zeros(n), F_ext) + self.offset
        F_sg0 = compensated_wrench(F_raw0, self.cal, st.R)
        S = self.S_base @ st.J
        tau0, G = law.affine_torque(st, q_ref, qd_ref, flex, M_t, h_t)
        A = M_t - G @ S
        cond = np.linalg.cond(A)
        if not cond < CLOSED_LOOP_COND_LIMIT:
            raise SingularClosedLoopMatrix(f"closed-loop matrix has condition number {cond:.3e}",
                                           condition=cond)
        qdd = np.linalg.solve(A, tau0 + G @ F_sg0 + st.J.T @ F_ext - h_t)
        F_sg = F_sg0 + S @ qdd
        nds = law.nu_dot_star(st, F_sg, flex)
        qdds = np.linalg.solve(st.J, nds - st.J_dot @ st.qd)
        parts = [qd, qdd, qd_ref, qdds]
        if flex is not None:
            parts += [flex.xi_dot, law.xi_ddot(st.nu, flex, nds)]
        dy = np.concatenate(parts)
        if not full:
            return dy, None
        info = dict(
            st=st, qdd=qdd, qdds=qdds, nds=nds, F_sg=F_sg, tau=tau0 + G @ F_sg,
            F_s=F_raw0 + self.T_inv @ (-self.att.M_m @ (st.J @ qdd)),
            F_ext_star=law.F_ext_star(st, F_sg, nds), M_t=M_t, h_t=h_t, flex=flex,
            q_tilde=q - q_ref, qd_tilde=qd - qd_ref)
        return dy, info

    def closed_loop_residuals(self, y, F_ext):
        """Residuals of the plant equation and the control law at the solved point."""
        _, info = self.ideal_eval(y, F_ext, full=True)
        st = info["st"]
        plant = info["M_t"] @ info["qdd"] + info["h_t"] - info["tau"] - st.J.T @ F_ext
        n = self.n
        tau_law = self.law.torque(st, info["F_sg"], y[2 * n:3 * n], y[3 * n:4 * n], info["flex"],
                                  info["M_t"], info["h_t"])[0]
        return np.abs(plant).max(), np.abs(tau_law - info["tau"]).max()

    def initial_vector(self):
        sc = self.sc
        n = self.n
        q_err = np.zeros(n) if sc.q_error0 is None else sc.q_error0
        qd_err = np.zeros(n) if sc.qd_error0 is None else sc.qd_error0
        ctrl = ControllerState.start(sc.q0, sc.qd0, -q_err, -qd_err)
        parts = [sc.q0, sc.qd0, ctrl.q_ref, ctrl.qd_ref]
        if self.nm:
            f0 = sc.flex0 or FlexState.zeros(self.nm)
            parts += [f0.xi, f0.xi_dot]
        return np.concatenate([np.asarray(p, float) for p in parts])

    def _log(self, log, t, info, F_ext):
        st = info["st"]
        delta = self.law.M_delta @ (st.J @ (info["qdd"] - info["qdds"]))
        row = dict(t=t, q=st.q, qd=st.qd, nu=st.nu, pos=st.c_pos, quat=rot_to_quat(st.R),
                   nu_dot_star=info["nds"], F_s=info["F_s"], F_sg=info["F_sg"],
                   F_ext_star=info["F_ext_star"], F_ext=F_ext, tau=info["tau"],
                   q_tilde=info["q_tilde"], qd_tilde=info["qd_tilde"],
                   delta_norm=np.linalg.norm(delta))
        if self.nm:
            row["xi"] = info["flex"].xi
            row["xi_dot"] = info["flex"].xi_dot
        log.append(**row)

    def run_ideal(self):
        sc = self.sc
        self.initial_state()
        dt = sc.dt
        y = self.initial_vector()
        log = TrajectoryLog(self.n, self.nm)
        for k in range(sc.n_steps + 1):
            t = k * dt
            F = sc.thrusters(t)
            k1, info = self.ideal_eval(y, F, full=True)
            self._log(log, t, info, F)
            if k == sc.n_steps:
                break
            k2 = self.ideal_eval(y + 0.5 * dt * k1, F)[0]
            k3 = self.ideal_eval(y + 0.5 * dt * k2, F)[0]
            k4 = self.ideal_eval(y + dt * k3, F)[0]
            y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            _check_finite(y, t + dt)
        return log.finish()

    # -- sampled mode --

    def _plant_accel(self, q, qd, tau, F_ext):
        st = self.model.state(q, qd, self.sc.c)
        M_t, h_t = combined_dynamics(self.model, self.att, st)
        return st, np.linalg.solve(M_t, tau + st.J.T @ F_ext - h_t), M_t, h_t

    def run_sampled(self):
        sc = self.sc
        n = self.n
        law = self.law
        dt = sc.dt
        period = sc.control_period
        m = sc.steps_per_tick
        q_err = np.zeros(n) if sc.q_error0 is None else sc.q_error0
        qd_err = np.zeros(n) if sc.qd_error0 is None else sc.qd_error0
        ctrl = ControllerState.start(sc.q0, sc.qd0, -q_err, -qd_err)
        emu = None
        if self.nm:
            emu = FlexEmulationState(sc.flex0 or FlexState.zeros(self.nm), law.M_bar)
        stream = SensorStream(sc.sensor, sc.seed)
        st0 = self.initial_state()
        # before the first tick the arm holds the static torque
        tau = combined_dynamics(self.model, self.att, st0)[1]
        q, qd = np.array(sc.q0, float), np.array(sc.qd0, float)
        log = TrajectoryLog(n, self.nm)
        k_tick = 0
        for k in range(sc.n_steps + 1):
            t = k * dt
            F = sc.thrusters(t)
            st, qdd, M_t, h_t = self._plant_accel(q, qd, tau, F)
            st.check_jacobian(sc.cond_limit)
            if k % m == 0 and (k < sc.n_steps or k == 0):
                k_tick = k
                F_s = stream.sample(self.true_wrench(st, qdd, F), t).F_s_raw
                F_sg = compensated_wrench(F_s, self.cal, st.R)
                ref_q, ref_qd = ctrl.q_ref.copy(), ctrl.qd_ref.copy()
                if emu is not None:
                    flex_log = FlexState(emu.flex.xi.copy(), emu.flex.xi_dot.copy())
                    tau = flex_emulation_step(law, st, emu, ctrl, F_sg, period)
                    qdds = ctrl.qdd_star_prev
                else:
                    tau, qdds, nds, F_star = law.torque(st, F_sg, ctrl.q_ref, ctrl.qd_ref, None, M_t, h_t)
                    ctrl.nu_dot_star, ctrl.F_ext_star = nds, F_star
                    ctrl.advance(qdds, period)
                nds, F_star = ctrl.nu_dot_star, ctrl.F_ext_star
                qdd = np.linalg.solve(M_t, tau + st.J.T @ F - h_t)
            # reference between ticks, for the log only
            age = (k - k_tick) * dt
            q_ref = ref_q + ref_qd * age + 0.5 * qdds * age ** 2
            qd_ref = ref_qd + qdds * age
            info = dict(st=st, qdd=qdd, qdds=qdds, nds=nds, F_sg=F_sg, tau=tau, F_s=F_s,
                        F_ext_star=F_star, q_tilde=q - q_ref, qd_tilde=qd - qd_ref,
                        flex=flex_log if emu is not None else None)
            self._log(log, t, info, F)
            if k == sc.n_steps:
                break
            y = np.concatenate([q, qd])

            def f(yy, tau=tau, F=F):
                return np.concatenate([yy[n:], self._plant_accel(yy[:n], yy[n:], tau, F)[1]])

            k1 = np.concatenate([qd, qdd])
            k2 = f(y + 0.5 * dt * k1)
            k3 = f(y + 0.5 * dt * k2)
            k4 = f(y + dt * k3)
            y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            _check_finite(y, t + dt)
            q, qd = y[:n], y[n:]
        return log.finish()

    def run(self):
        t0 = time.perf_counter()
        log = self.run_ideal() if self.sc.mode == "ideal" else self.run_sampled()
        log.wall_time = time.perf_counter() - t0
        return log

    def run_oracle(self):
        sc = self.sc
        st = self.initial_state()
        state0 = RigidBodyState(st.c_pos.copy(), rot_to_quat(st.R), st.nu.copy())
        flex0 = (sc.flex0 or FlexState.zeros(self.nm)) if self.nm else None
        return simulate_free_flyer(sc.flight, state0, sc.thrusters, sc.dt, sc.n_steps, flex0)


def simulate(scenario):
    return Emulator(scenario).run()


def stability_report(scenario):
    model = scenario.model
    samples = workspace_samples(model, scenario.workspace_samples)
    return check_mass_inequality(model, scenario.attachment, scenario.gains, samples)


@dataclass
class FidelityReport:
    nu_err_max: float
    nu_err_rms: float
    nu_oracle_max: float
    nu_rel_err: float
    pos_err_max: float
    momentum_err_max: float
    delta_norm_max: float
    x0_norm: float
    wall_time: float
    mode: str
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        d = {k: getattr(self, k) for k in ("mode", "nu_err_max", "nu_err_rms", "nu_oracle_max",
                                            "nu_rel_err", "pos_err_max", "momentum_err_max",
                                            "delta_norm_max", "x0_norm")}
        d.update(self.extra)
        return d

    def to_text(self):
        out = []
        for k, v in self.as_dict().items():
            out.append(f"{k} = {v}" if isinstance(v, str) else f"{k} = {_fmt(v)}")
        return "\n".join(out) + "\n"


def envelope_check(log, report, M_delta, t_start=None):
    """Fit the decay of ``||x||`` and compare ``||x||`` and ``||delta||`` with their envelopes."""
    t = log.t
    x = log.x_norm
    fit = fit_decay_envelope(t, x, t_start)
    x0 = x[0]
    win = t >= fit.t_start
    x_ratio = np.max(x[win] / (x0 * np.exp(-fit.Omega * t[win])))
    kp, kd = report.k_p, report.k_d
    a = (kp ** 2 + kd ** 2) * (1.0 + report.Q_norm_max) * x0
    env = delta_envelope(report.sigma, a, M_delta, fit.Omega, t)
    d_ratio = np.max(log.delta_norm[win] / env[win])
    return dict(Omega_fit=fit.Omega, a_fit=fit.a, fit_residual=fit.residual, fit_t_start=fit.t_start,
                x_envelope_ratio_max=x_ratio, delta_bound_a=a, delta_envelope_ratio_max=d_ratio)


def compare(log, oracle, scenario):
    nu_e = log.nu
    nu_o = oracle.nu
    err = np.linalg.norm(nu_e - nu_o, axis=1)
    nu_max = np.linalg.norm(nu_o, axis=1).max()
    pos_err = np.linalg.norm(log.pos - oracle.position, axis=1).max()
    flight = scenario.flight
    m_s = flight.mass
    Rs_o = np.array([_qrot(qq) for qq in oracle.quat])
    Rs_e = np.array([_qrot(qq) for qq in log.quat])
    p_o = m_s * np.einsum("kij,kj->ki", Rs_o, nu_o[:, :3])
    p_e = m_s * np.einsum("kij,kj->ki", Rs_e, nu_e[:, :3])
    return FidelityReport(
        nu_err_max=err.max(), nu_err_rms=float(np.sqrt(np.mean(err ** 2))), nu_oracle_max=nu_max,
        nu_rel_err=err.max() / nu_max if nu_max > 0 else err.max(),
        pos_err_max=pos_err, momentum_err_max=np.linalg.norm(p_e - p_o, axis=1).max(),
        delta_norm_max=log.delta_norm.max(), x0_norm=log.x_norm[0], wall_time=log.wall_time,
        mode=scenario.mode)


def _qrot(q):
    from .spatial import quat_to_rot
    return quat_to_rot(q)


def run_with_oracle(scenario, with_envelope=True):
    """Emulation run, independent flight integration and their comparison."""
    emu = Emulator(scenario)
    log = emu.run()
    oracle = emu.run_oracle()
    report = compare(log, oracle, scenario)
    if with_envelope and report.x0_norm > 0:
        stab = stability_report(scenario)
        try:
            report.extra.update(envelope_check(log, stab, emu.law.M_delta))
        except (NonDecayingError, ValueError) as exc:  # reported, not fatal
            report.extra["envelope_error"] = str(exc)
    return log, oracle, report


def write_outputs(out_dir, log, scenario, oracle=None, report=None, stability=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log.write_csv(out / "trajectory.csv", scenario.log_stride)
    if oracle is not None:
        write_csv(out / "oracle.csv", oracle_header(getattr(scenario.flight, "n_modes", 0)
                                                    if scenario.flexible else 0),
                  oracle_table(oracle)[::scenario.log_stride])
    if report is not None:
        (out / "fidelity.txt").write_text(report.to_text())
    if stability is not None:
        (out / "stability.txt").write_text(stability.to_text())
    return out


def momentum(scenario, oracle):
    """World-frame linear momentum along an oracle trajectory."""
    return np.array([linear_momentum_world(scenario.flight, _qrot(q), nu)
                     for q, nu in zip(oracle.quat, oracle.nu)])
