"""Scenario description and TOML parsing.

Units throughout: m, s, kg, kg m^2, rad, N, N m.

Sections
--------
``[flight]``       ``mass``, ``inertia`` (3 principal moments or a 3x3 matrix);
                   optional ``[flight.flex]`` with ``M_f``, ``M_sf`` (6 x n),
                   ``K_f``, ``D_f``, ``xi0``, ``xi_dot0``.
``[test]``         ``mass`` and ``inertia``, or ``scale`` relative to the flight
                   hub; ``c`` is the CM seen from the sensor (default 0).
``[manipulator]``  ``type = "serial" | "cartesian"``; ``table`` (path to a DH
                   table, default the bundled six-joint arm); ``carriage_mass``
                   and ``carriage_inertia`` for the stage; ``q0``, ``qd0``;
                   ``q_min``/``q_max`` to override the workspace box.
``[sensor]``       ``offset`` (6), ``noise_std = [N, N m]``,
                   ``resolution = [N, N m]``; ``[sensor.calibration]`` either
                   ``exact = true`` or ``F0_hat``, ``m_hat``, ``c_hat``, ``k_hat``.
``[controller]``   ``k_p``, ``k_d``, ``control_period``, ``initial_q_error``,
                   ``initial_qd_error``, ``cond_limit``.
``[sim]``          ``mode = "ideal" | "sampled"``, ``dt``, ``duration``, ``seed``,
                   ``log_stride``, ``workspace_samples``.
``[[thruster]]``   ``t_start``, ``t_end``, ``wrench = [fx, fy, fz, nx, ny, nz]``
                   in the flight body frame.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import load_toml
from .controller import EmulationGains, delta_inertia
from .errors import ConfigError, ValidationError
from .flexible import flexible_delta_inertia
from .manipulator import COND_LIMIT, CartesianStage, PayloadAttachment, load_arm
from .sensor import DEFAULT_K, SensorCalibration, SensorModel
from .spacecraft import FlexibleSpacecraft, FlexState, RigidSpacecraft
from .spatial import block_inertia

MODES = ("ideal", "sampled")


@dataclass(frozen=True)
class ThrusterPulse:
    t_start: float
    t_end: float
    wrench: tuple


class WrenchSchedule:
    """Piecewise-constant body wrench; each interval is ``[t_start, t_end)``."""

    def __init__(self, pulses=()):
        self.pulses = sorted(pulses, key=lambda p: p.t_start)
        for p in self.pulses:
            if not p.t_end > p.t_start:
                raise ValidationError(f"thruster interval [{p.t_start}, {p.t_end}) is empty")
        for a, b in zip(self.pulses, self.pulses[1:]):
            if b.t_start < a.t_end:
                raise ValidationError(f"thruster intervals overlap at t={b.t_start}")
        self._w = [np.asarray(p.wrench, float) for p in self.pulses]

    def __call__(self, t, eps=1e-9):
        for p, w in zip(self.pulses, self._w):
            if p.t_start - eps <= t < p.t_end - eps:
                return w
        return np.zeros(6)


@dataclass(eq=False)
class Scenario:
    flight: object
    test: RigidSpacecraft
    c: np.ndarray
    model: object
    sensor: SensorModel
    calibration: SensorCalibration
    gains: EmulationGains
    mode: str = "ideal"
    dt: float = 1e-3
    control_period: float = 1e-3
    duration: float = 1.0
    thrusters: WrenchSchedule = field(default_factory=WrenchSchedule)
    q0: np.ndarray = None
    qd0: np.ndarray = None
    q_error0: np.ndarray = None
    qd_error0: np.ndarray = None
    flex0: FlexState = None
    seed: int = 0
    log_stride: int = 1
    workspace_samples: int = 4096
    cond_limit: float = COND_LIMIT
    name: str = "scenario"

    @property
    def attachment(self):
        return PayloadAttachment(self.test, self.c)

    @property
    def flexible(self):
        return isinstance(self.flight, FlexibleSpacecraft)

    @property
    def n_steps(self):
        return int(round(self.duration / self.dt))

    @property
    def steps_per_tick(self):
        return int(round(self.control_period / self.dt))

    def with_overrides(self, seed=None, mode=None):
        out = self
        if seed is not None:
            out = replace(out, seed=int(seed), sensor=replace(out.sensor, seed=int(seed)))
        if mode is not None:
            out = replace(out, mode=mode)
        out.validate()
        return out

    def validate(self):
        """Checks that must pass before anything is simulated or written."""
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (self.dt > 0 and self.duration > 0):
            raise ValidationError("dt and duration must be positive")
        if self.dt > self.control_period * (1 + 1e-12):
            raise ValidationError(f"dt={self.dt} exceeds control_period={self.control_period}")
        m = self.control_period / self.dt
        if abs(m - round(m)) > 1e-9 * m:
            raise ValidationError("control_period must be an integer multiple of dt")
        if self.log_stride < 1:
            raise ValidationError("log_stride must be >= 1")
        n = self.model.n_joints
        for name in ("q0", "qd0", "q_error0", "qd_error0"):
            v = getattr(self, name)
            if v is not None and np.shape(v) != (n,):
                raise ValidationError(f"{name} must have {n} entries")
        if self.flexible:
            flexible_delta_inertia(self.flight, self.test)
            nyq = 0.5 / self.dt
            f_hz = self.flight.modal_frequencies() / (2 * np.pi)
            if np.any(f_hz >= nyq):
                raise ValidationError(
                    f"modal frequency {f_hz.max():.4g} Hz is not below the Nyquist limit {nyq:.4g} Hz")
            delta_inertia(self.flight.rigid, self.test)
        else:
            delta_inertia(self.flight, self.test)
        return self


# --- parsing ---------------------------------------------------------------------

def _vec(d, key, n, default=None):
    if key not in d:
        if default is None:
            raise ConfigError(f"missing key {key!r}")
        return np.asarray(default, float)
    v = np.asarray(d[key], dtype=float)
    if v.shape != (n,):
        raise ConfigError(f"{key!r} must have {n} entries")
    return v


def _inertia(val, key):
    I = np.asarray(val, dtype=float)
    if I.shape == (3,):
        return np.diag(I)
    if I.shape == (3, 3):
        return I
    raise ConfigError(f"{key!r} must be 3 principal moments or a 3x3 matrix")


def _matrix(d, key, shape, default=None):
    if key not in d:
        if default is None:
            raise ConfigError(f"missing key {key!r}")
        return default
    A = np.atleast_2d(np.asarray(d[key], dtype=float))
    try:
        return A.reshape(shape)
    except ValueError as exc:
        raise ConfigError(f"{key!r} must have shape {shape}") from exc


def _section(doc, name, required=True):
    if name not in doc:
        if required:
            raise ConfigError(f"missing section [{name}]")
        return {}
    return doc[name]


def parse_scenario(doc, base_dir=Path(".")):
    try:
        return _parse(doc, Path(base_dir))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad scenario: {exc}") from exc


def _parse(doc, base_dir):
    fl = _section(doc, "flight")
    hub = block_inertia(fl["mass"], _inertia(fl["inertia"], "flight.inertia"))
    flex0 = None
    if "flex" in fl:
        fx = fl["flex"]
        M_f = np.atleast_2d(np.asarray(fx["M_f"], dtype=float))
        n = M_f.shape[0]
        flight = FlexibleSpacecraft(hub, M_f, _matrix(fx, "M_sf", (6, n)), _matrix(fx, "K_f", (n, n)),
                                    _matrix(fx, "D_f", (n, n), np.zeros((n, n))), name="flight")
        flex0 = FlexState(_vec(fx, "xi0", n, np.zeros(n)), _vec(fx, "xi_dot0", n, np.zeros(n)))
    else:
        flight = RigidSpacecraft(hub, name="flight")

    ts = _section(doc, "test")
    if "scale" in ts:
        s = float(ts["scale"])
        test_in = block_inertia(hub.mass * s, hub.inertia * s)
    else:
        test_in = block_inertia(ts["mass"], _inertia(ts["inertia"], "test.inertia"))
    test = RigidSpacecraft(test_in, name="test")
    c = _vec(ts, "c", 3, np.zeros(3))

    mp = _section(doc, "manipulator")
    kind = mp.get("type", "serial")
    if kind == "serial":
        model = load_arm(base_dir / mp["table"]) if "table" in mp else load_arm()
    elif kind == "cartesian":
        carriage = block_inertia(mp["carriage_mass"], _inertia(mp["carriage_inertia"],
                                                              "manipulator.carriage_inertia"))
        model = CartesianStage(carriage)
    else:
        raise ConfigError(f"unknown manipulator type {kind!r}")
    n = model.n_joints
    if "q_min" in mp:
        model.q_min = _vec(mp, "q_min", n)
    if "q_max" in mp:
        model.q_max = _vec(mp, "q_max", n)
    q0 = _vec(mp, "q0", n)
    qd0 = _vec(mp, "qd0", n, np.zeros(n))

    sim = _section(doc, "sim")
    dt = float(sim.get("dt", 1e-3))
    seed = int(sim.get("seed", 0))

    ct = _section(doc, "controller")
    gains = EmulationGains(float(ct["k_p"]), float(ct["k_d"]))
    period = float(ct.get("control_period", dt))

    sn = _section(doc, "sensor", required=False)
    sensor = SensorModel(offset=_vec(sn, "offset", 6, np.zeros(6)),
                         noise_std=tuple(_vec(sn, "noise_std", 2, (0.0, 0.0))),
                         resolution=tuple(_vec(sn, "resolution", 2, (0.0, 0.0))),
                         sample_period=period, seed=seed)
    cal = sn.get("calibration", {"exact": True})
    if cal.get("exact", False):
        calibration = SensorCalibration.exact(PayloadAttachment(test, c), sensor, model.gravity_dir)
    else:
        k_hat = _vec(cal, "k_hat", 3, DEFAULT_K)
        calibration = SensorCalibration(_vec(cal, "F0_hat", 6), float(cal["m_hat"]),
                                        _vec(cal, "c_hat", 3), k_hat / np.linalg.norm(k_hat))

    pulses = [ThrusterPulse(float(p["t_start"]), float(p["t_end"]), tuple(_vec(p, "wrench", 6)))
              for p in doc.get("thruster", [])]

    sc = Scenario(
        flight=flight, test=test, c=c, model=model, sensor=sensor, calibration=calibration,
        gains=gains, mode=sim.get("mode", "ideal"), dt=dt, control_period=period,
        duration=float(sim["duration"]), thrusters=WrenchSchedule(pulses), q0=q0, qd0=qd0,
        q_error0=_vec(ct, "initial_q_error", n, np.zeros(n)),
        qd_error0=_vec(ct, "initial_qd_error", n, np.zeros(n)),
        flex0=flex0, seed=seed, log_stride=int(sim.get("log_stride", 1)),
        workspace_samples=int(sim.get("workspace_samples", 4096)),
        cond_limit=float(ct.get("cond_limit", COND_LIMIT)), name=doc.get("name", "scenario"))
    return sc.validate()


def load_scenario(path):
    path = Path(path)
    return parse_scenario(load_toml(path), path.parent)
