import numpy as np
import pytest

from kfattack.errors import DimensionError, NumericalError, ValidationError
from kfattack.fusion import (
    equivalent_bias_covariance,
    fisher_information,
    fuse_identical_h,
    fuse_observable,
)
from kfattack.kalman import finite_schedule, information_contribution, steady_state
from kfattack.model import Sensor, SensorSuite, stack_suite

from conftest import P0


def test_position_pair_weights(pos_fused):
    assert pos_fused.r_e[0, 0] == pytest.approx(12.0 / 7.0, rel=1e-15)
    c = [float(w[0, 0]) for w in pos_fused.weights]
    assert c == pytest.approx([4.0 / 7.0, 3.0 / 7.0], rel=1e-15)


def test_pv_pair_weights(pv2_fused):
    np.testing.assert_allclose(pv2_fused.r_e, np.diag([12.0 / 7.0, 20.0 / 9.0]), rtol=1e-14)
    np.testing.assert_allclose(pv2_fused.weights[0], np.diag([4.0 / 7.0, 5.0 / 9.0]), rtol=1e-14)
    np.testing.assert_allclose(pv2_fused.weights[1], np.diag([3.0 / 7.0, 4.0 / 9.0]), rtol=1e-14)


def test_weights_sum_to_identity(pv2_fused):
    np.testing.assert_allclose(sum(pv2_fused.weights), np.eye(2), atol=1e-15)


def test_single_sensor_is_identity():
    s = Sensor.position_velocity(3.0, 4.0)
    f = fuse_identical_h(SensorSuite((s,)))
    np.testing.assert_allclose(f.r_e, s.r, rtol=1e-15)
    np.testing.assert_allclose(f.weights[0], np.eye(2), atol=1e-15)


def test_identical_h_rejects_mixed():
    suite = SensorSuite((Sensor.position(3.0), Sensor(np.array([[0.0, 1.0]]), np.eye(1))))
    with pytest.raises(ValidationError):
        fuse_identical_h(suite)


def test_observable_route_position_velocity_mix():
    suite = SensorSuite((Sensor.position(3.0), Sensor(np.array([[0.0, 1.0]]), np.array([[4.0]]))))
    f = fuse_observable(suite)
    np.testing.assert_allclose(f.r_e, np.diag([3.0, 4.0]), rtol=1e-14)
    np.testing.assert_array_equal(f.h_e, np.eye(2))


def test_observable_route_rejects_unobservable(pos_suite):
    with pytest.raises(NumericalError):
        fuse_observable(pos_suite)


def test_fused_information_matches_stacked(pv_suite, pv2_fused):
    fisher = fisher_information(pv_suite)
    fused = pv2_fused.h_e.T @ np.linalg.inv(pv2_fused.r_e) @ pv2_fused.h_e
    np.testing.assert_allclose(fused, fisher, rtol=1e-12)


def test_information_state_equivalence(pv_suite, pv2_fused):
    rng = np.random.default_rng(2)
    zs = [rng.normal(size=2) for _ in pv_suite]
    stacked = sum(information_contribution(s.h, s.r, z) for s, z in zip(pv_suite, zs))
    fused = information_contribution(pv2_fused.h_e, pv2_fused.r_e, pv2_fused.measurement(zs))
    np.testing.assert_allclose(fused, stacked, atol=1e-10)


def test_fused_filter_covariances_match_stacked(dwna, pv_suite, pv2_fused):
    h, r = stack_suite(pv_suite)
    a = finite_schedule(dwna, h, r, P0, 30)
    b = finite_schedule(dwna, pv2_fused.h_e, pv2_fused.r_e, P0, 30)
    for pa, pb in zip(a.covariances, b.covariances):
        np.testing.assert_allclose(pa, pb, rtol=1e-10)


def test_stacked_gain_equals_fused_gain_times_combiner(dwna, pos_suite, pos_fused, pos_steady):
    h, r = stack_suite(pos_suite)
    stacked = steady_state(dwna, h, r, P0).require_steady()
    np.testing.assert_allclose(stacked.gain, pos_steady.gain @ pos_fused.combiner, rtol=1e-9)


def test_measurement_length_check(pos_fused):
    with pytest.raises(DimensionError):
        pos_fused.measurement([1.0])


def test_equivalent_bias_covariance_position(pos_fused):
    sigma = np.array([[1920.0, np.sqrt(1920.0 * 1080.0)], [np.sqrt(1920.0 * 1080.0), 1080.0]])
    se = equivalent_bias_covariance(pos_fused, sigma)
    assert se[0, 0] == pytest.approx(3000.0 * (16 + 9) / 49, rel=1e-12)


def test_equivalent_bias_covariance_shape(pos_fused):
    with pytest.raises(DimensionError):
        equivalent_bias_covariance(pos_fused, np.eye(3))
