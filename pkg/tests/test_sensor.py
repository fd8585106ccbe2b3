import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zerog.sensor import (SensorCalibration, SensorModel, SensorStream, compensated_wrench,
                          gravity_wrench, quantize, sample, true_interaction_wrench)
from zerog.spatial import rot_x, rot_y, sensor_transform


def test_quantize_rounds_half_away_from_zero():
    assert np.array_equal(quantize([0.5, -0.5, 1.49, -2.51, 0.0], 1.0), [1, -1, 1, -3, 0])


def test_quantize_zero_step_passes_through():
    x = np.array([0.123, -4.56])
    assert np.array_equal(quantize(x, 0.0), x)


@given(st.floats(-1e3, 1e3), st.floats(1e-3, 10))
def test_quantize_error_within_half_step(x, step):
    assert abs(quantize([x], step)[0] - x) <= 0.5 * step * (1 + 1e-12)


def test_gravity_wrench_level_and_tilted():
    assert np.allclose(gravity_wrench(2.0, np.eye(3)), [0, 0, -19.62, 0, 0, 0])
    # rolled 90 degrees about x: world down is body +y
    assert np.allclose(gravity_wrench(2.0, rot_x(np.pi / 2)), [0, -19.62, 0, 0, 0, 0], atol=1e-12)


def test_static_payload_reading(attachment):
    # at rest the sensor holds the payload against gravity
    R = rot_y(0.4) @ rot_x(-0.3)
    F_s = true_interaction_wrench(attachment, np.zeros(6), np.zeros(6), R, np.zeros(6))
    assert np.allclose(sensor_transform(attachment.c) @ F_s, gravity_wrench(attachment.mass, R))


def test_exact_compensation_recovers_dynamic_wrench(attachment, rng):
    sensor = SensorModel(offset=rng.standard_normal(6))
    calib = SensorCalibration.exact(attachment, sensor)
    nu, nu_dot, F_ext = rng.standard_normal((3, 6))
    R = rot_x(0.7) @ rot_y(-1.2)
    F_s = true_interaction_wrench(attachment, nu, nu_dot, R, F_ext)
    F_sg = compensated_wrench(sample(sensor, F_s, 0.0), calib, R)
    # F_sg = F_ext - M_m nu_dot - h_m
    from zerog.spacecraft import gyric_term
    expect = F_ext - attachment.M_m @ nu_dot - gyric_term(attachment.payload.inertia, nu)
    assert np.allclose(F_sg, expect, atol=1e-12)


def test_noise_is_seeded_and_has_requested_spread():
    sensor = SensorModel(noise_std=(0.05, 0.002), seed=7)
    a = SensorStream(sensor)
    b = SensorStream(sensor)
    ra = np.array([a.sample(np.zeros(6), k * 1e-3).F_s_raw for k in range(20000)])
    rb = np.array([b.sample(np.zeros(6), k * 1e-3).F_s_raw for k in range(20000)])
    assert np.array_equal(ra, rb)
    assert np.allclose(ra.std(axis=0), [0.05] * 3 + [0.002] * 3, rtol=0.03)


def test_sensor_model_rejects_negative_noise():
    with pytest.raises(ValueError):
        SensorModel(noise_std=(-1.0, 0.0))
    assert SensorModel().ideal
