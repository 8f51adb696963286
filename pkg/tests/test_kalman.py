import numpy as np
import pytest
import scipy.linalg

from kfattack.errors import ConvergenceError, DimensionError, NumericalError
from kfattack.kalman import (
    FilterState,
    finite_schedule,
    information_contribution,
    information_update,
    innovation_gain,
    predict,
    steady_state,
    update,
)
from kfattack.model import Sensor, StateSpaceModel, TrackingParams, build_dwna_model

from conftest import P0

# steady values for the (3, 4) position/velocity sensor, frozen from a tol=1e-10 run
W_PV = np.array([[0.4684134512483149, 0.1197914091903266],
                 [0.1597218789204355, 0.11410234435891772]])
P_PV = np.array([[1.4052403537449447, 0.4791656367613064],
                 [0.4791656367613064, 0.45640937743567095]])


def test_predict_null_system():
    m = StateSpaceModel(f=np.eye(2), q=np.zeros((2, 2)))
    out = predict(FilterState(np.zeros(2), np.zeros((2, 2))), m)
    np.testing.assert_array_equal(out.x_hat, [0.0, 0.0])
    np.testing.assert_array_equal(out.p, np.zeros((2, 2)))


def test_predict_constant_velocity(dwna):
    out = predict(FilterState(np.array([1.0, 1.0]), np.eye(2)), dwna)
    np.testing.assert_array_equal(out.x_hat, [2.0, 1.0])
    np.testing.assert_allclose(out.p, [[2.0625, 1.125], [1.125, 1.25]], rtol=1e-15)


def test_predict_dimension_mismatch(dwna):
    with pytest.raises(DimensionError):
        predict(FilterState(np.zeros(3), np.eye(3)), dwna)


def test_update_uninformative_measurement():
    p = np.array([[2.0, 0.5], [0.5, 1.0]])
    st, w = update(FilterState(np.zeros(2), p), np.array([[1.0, 0.0]]), np.array([[1e12]]), np.array([5.0]))
    assert np.max(np.abs(w)) < 1e-9
    np.testing.assert_allclose(st.p, p, rtol=1e-9)


def test_update_perfect_measurement():
    st, _ = update(FilterState(np.zeros(2), np.eye(2) * 4.0), np.eye(2), np.eye(2) * 1e-12, np.array([1.0, 2.0]))
    assert np.max(np.abs(st.p)) <= 1e-9
    np.testing.assert_allclose(st.x_hat, [1.0, 2.0], atol=1e-9)


def test_update_singular_innovation():
    with pytest.raises(NumericalError):
        innovation_gain(np.zeros((2, 2)), np.array([[1.0, 0.0]]), np.array([[0.0]]))


def test_scalar_riccati_fixed_point():
    m = StateSpaceModel(f=np.eye(1), q=np.eye(1))
    sched = steady_state(m, np.eye(1), np.eye(1), np.eye(1), tol=1e-14)
    assert sched.steady
    # fixed point of P- = P-/(P- + 1) + 1  ->  P- = (1 + sqrt 5) / 2
    p_pred = (1 + np.sqrt(5)) / 2
    assert sched.gain[0, 0] == pytest.approx(p_pred / (p_pred + 1), abs=1e-12)


def test_steady_trivial_case_converges_immediately():
    m = StateSpaceModel(f=np.eye(2), q=np.zeros((2, 2)))
    sched = steady_state(m, np.array([[1.0, 0.0]]), np.array([[2.0]]), np.zeros((2, 2)))
    assert sched.steady and len(sched) == 1
    np.testing.assert_array_equal(sched.gain, np.zeros((2, 1)))
    np.testing.assert_array_equal(sched.p, np.zeros((2, 2)))


def test_steady_pv_frozen(dwna, pv_sensor):
    sched = steady_state(dwna, pv_sensor.h, pv_sensor.r, P0)
    assert sched.steady
    np.testing.assert_allclose(sched.gain, W_PV, rtol=1e-9)
    np.testing.assert_allclose(sched.p, P_PV, rtol=1e-9)


def test_steady_matches_dare(dwna, pv_sensor):
    h, r = pv_sensor.h, pv_sensor.r
    p_pred = scipy.linalg.solve_discrete_are(dwna.f.T, h.T, dwna.q, r)
    s = h @ p_pred @ h.T + r
    p_post = p_pred - p_pred @ h.T @ np.linalg.solve(s, h @ p_pred)
    sched = steady_state(dwna, h, r, P0, tol=1e-13)
    np.testing.assert_allclose(sched.p, p_post, rtol=1e-9)


def test_steady_fused_position_against_tight_oracle(dwna):
    h, r = np.array([[1.0, 0.0]]), np.array([[12.0 / 7.0]])
    sched = steady_state(dwna, h, r, P0, tol=1e-12)
    assert sched.steady and len(sched) <= 200
    oracle = steady_state(dwna, h, r, P0, tol=1e-14)
    np.testing.assert_allclose(sched.p, oracle.p, atol=1e-11)
    np.testing.assert_allclose(sched.gain, [[0.579843269754343], [0.24753354620197526]], rtol=1e-10)


def test_steady_flag_false_when_capped(dwna, pv_sensor):
    sched = steady_state(dwna, pv_sensor.h, pv_sensor.r, P0, max_iter=1)
    assert not sched.steady
    assert len(sched) == 1
    with pytest.raises(ConvergenceError) as info:
        sched.require_steady()
    assert info.value.iterations == 1
    assert info.value.residual > 0


def test_steady_rejects_bad_tolerance(dwna, pv_sensor):
    with pytest.raises(ValueError):
        steady_state(dwna, pv_sensor.h, pv_sensor.r, P0, tol=0.0)


def test_schedule_covariances_psd(dwna, pv_sensor):
    sched = finite_schedule(dwna, pv_sensor.h, pv_sensor.r, P0, 60)
    for p in sched.covariances:
        np.testing.assert_array_equal(p, p.T)
        assert np.linalg.eigvalsh(p)[0] >= -1e-9


def test_trace_monotone_from_large_prior(dwna, pv_sensor):
    steady = steady_state(dwna, pv_sensor.h, pv_sensor.r, P0)
    lam = float(np.linalg.eigvalsh(steady.p)[-1]) * 10
    sched = finite_schedule(dwna, pv_sensor.h, pv_sensor.r, lam * np.eye(2), 80)
    traces = [np.trace(p) for p in sched.covariances]
    assert all(b <= a + 1e-12 for a, b in zip(traces, traces[1:]))


def test_steady_gain_fixed_point_residual(dwna, pv_sensor):
    tol = 1e-10
    sched = steady_state(dwna, pv_sensor.h, pv_sensor.r, P0, tol=tol)
    p_pred = dwna.f @ sched.p @ dwna.f.T + dwna.q
    resid = np.max(np.abs(sched.gain - innovation_gain(p_pred, pv_sensor.h, pv_sensor.r)))
    assert resid < 10 * tol


def test_finite_schedule_length_and_lookup(dwna, pv_sensor):
    sched = finite_schedule(dwna, pv_sensor.h, pv_sensor.r, P0, 7)
    assert len(sched) == 7 and not sched.steady
    np.testing.assert_array_equal(sched.covariance_at(0), P0)
    np.testing.assert_array_equal(sched.gain_at(7), sched.gains[-1])
    with pytest.raises(IndexError):
        sched.gain_at(8)


def test_steady_schedule_extends(dwna, pv_sensor):
    sched = steady_state(dwna, pv_sensor.h, pv_sensor.r, P0)
    np.testing.assert_array_equal(sched.gain_at(len(sched) + 100), sched.gain)


def test_filter_matches_schedule(dwna, pv_sensor):
    rng = np.random.default_rng(1)
    sched = finite_schedule(dwna, pv_sensor.h, pv_sensor.r, P0, 10)
    st = FilterState(np.zeros(2), P0)
    for k in range(1, 11):
        st, w = update(predict(st, dwna), pv_sensor.h, pv_sensor.r, rng.normal(size=2))
        np.testing.assert_allclose(w, sched.gain_at(k), rtol=1e-12)
        np.testing.assert_allclose(st.p, sched.covariance_at(k), rtol=1e-12)


def test_information_update():
    y = np.array([1.0, 2.0])
    np.testing.assert_array_equal(information_update(y, np.zeros(2)), y)
    with pytest.raises(DimensionError):
        information_update(y, np.zeros(3))


def test_information_contribution_sums(pv_suite):
    zs = [np.array([1.0, -2.0]), np.array([0.5, 3.0])]
    total = sum(information_contribution(s.h, s.r, z) for s, z in zip(pv_suite, zs))
    expected = np.array([1.0 / 3 + 0.5 / 4, -2.0 / 4 + 3.0 / 5])
    np.testing.assert_allclose(total, expected, rtol=1e-14)


def test_information_form_matches_covariance_form(dwna, pv_sensor):
    st = predict(FilterState(np.array([3.0, -1.0]), P0), dwna)
    z = np.array([2.5, 0.3])
    upd, _ = update(st, pv_sensor.h, pv_sensor.r, z)
    y_pred = np.linalg.solve(st.p, st.x_hat)
    y = information_update(y_pred, information_contribution(pv_sensor.h, pv_sensor.r, z))
    np.testing.assert_allclose(np.linalg.solve(upd.p, upd.x_hat), y, rtol=1e-10)


def test_other_interval():
    m = build_dwna_model(TrackingParams(t=0.5, sigma_v2=1.0))
    s = Sensor.position(2.0)
    assert steady_state(m, s.h, s.r, P0).steady
