"""Force/moment sensor at the manipulator-payload interface.

The sensor frame {S} is parallel to the payload CM frame {C}; ``c`` is the CM
seen from {S}. The payload obeys

    M_m nu_dot + h_m(nu) = -T F_s + F_g + F_ext

so the exact sensed wrench is ``F_s = T^-1 (F_g + F_ext - M_m nu_dot - h_m)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spacecraft import gyric_term
from .spatial import GRAVITY, sensor_transform, sensor_transform_inv

DEFAULT_K = np.array([0.0, 0.0, -1.0])


@dataclass(frozen=True, eq=False)
class SensorModel:
    offset: np.ndarray = field(default_factory=lambda: np.zeros(6))
    noise_std: tuple = (0.0, 0.0)  # (N, N m)
    resolution: tuple = (0.0, 0.0)  # (N, N m) quantisation steps
    sample_period: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if min(self.noise_std) < 0 or min(self.resolution) < 0:
            raise ValueError("noise_std and resolution must be non-negative")
        if self.sample_period <= 0:
            raise ValueError("sample_period must be positive")

    @property
    def sigma(self):
        return np.repeat(np.asarray(self.noise_std, dtype=float), 3)

    @property
    def step(self):
        return np.repeat(np.asarray(self.resolution, dtype=float), 3)

    @property
    def ideal(self):
        return not (np.any(self.sigma) or np.any(self.step))


@dataclass
class SensorReading:
    F_s_raw: np.ndarray
    timestamp: float


@dataclass(frozen=True, eq=False)
class SensorCalibration:
    """Estimates used to compensate raw readings."""

    F_0_hat: np.ndarray
    m_hat: float
    c_hat: np.ndarray
    k_hat: np.ndarray = field(default_factory=lambda: DEFAULT_K.copy())

    @classmethod
    def exact(cls, attachment, sensor, k=DEFAULT_K):
        return cls(np.asarray(sensor.offset, float).copy(), attachment.mass,
                   np.asarray(attachment.c, float).copy(), np.asarray(k, float).copy())


def quantize(x, step):
    """Mid-tread quantiser, round half away from zero; ``step == 0`` passes through."""
    x = np.asarray(x, dtype=float)
    step = np.broadcast_to(np.asarray(step, dtype=float), x.shape)
    out = x.copy()
    on = step > 0
    out[on] = np.sign(x[on]) * np.floor(np.abs(x[on]) / step[on] + 0.5) * step[on]
    return out


def gravity_wrench(mass, R, k=DEFAULT_K):
    """``F_g = [m g R^T k, 0]`` in the CM frame."""
    mass = getattr(mass, "mass", mass)
    return np.concatenate([mass * GRAVITY * (np.asarray(R).T @ k), np.zeros(3)])


def true_interaction_wrench(attachment, nu, nu_dot, R, F_ext, k=DEFAULT_K):
    """Exact sensor wrench in {S} for the given payload motion."""
    rhs = (gravity_wrench(attachment.mass, R, k) + np.asarray(F_ext, float)
           - attachment.M_m @ nu_dot - gyric_term(attachment.payload.inertia, nu))
    return sensor_transform_inv(attachment.c) @ rhs


def sample(sensor, F_s_true, t, rng=None):
    """Add offset and Gaussian noise, then quantise each axis."""
    F = np.asarray(F_s_true, dtype=float) + sensor.offset
    sigma = sensor.sigma
    if np.any(sigma):
        if rng is None:
            rng = np.random.default_rng(sensor.seed)
        F = F + sigma * rng.standard_normal(6)
    return SensorReading(quantize(F, sensor.step), float(t))


class SensorStream:
    """A sensor with its own RNG stream; one per simulation run."""

    def __init__(self, model, seed=None):
        self.model = model
        self.rng = np.random.default_rng(model.seed if seed is None else seed)

    def sample(self, F_s_true, t):
        return sample(self.model, F_s_true, t, self.rng)


def compensated_wrench(reading, calibration, R):
    """``F_sg = T(c_hat) (F_s - F_0_hat) - F_g_hat`` expressed in {C}."""
    F_s = getattr(reading, "F_s_raw", reading)
    T = sensor_transform(calibration.c_hat)
    return T @ (np.asarray(F_s, float) - calibration.F_0_hat) - gravity_wrench(
        calibration.m_hat, R, calibration.k_hat)
