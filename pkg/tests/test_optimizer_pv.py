import math

import numpy as np
import pytest

from kfattack.attack import BiasCovariance
from kfattack.errors import DimensionError, ValidationError
from kfattack.optimizer import (
    pv_coefficients,
    pv_trace_gain,
    trace_pv_multi,
    trace_pv_multi_eigen,
    trace_pv_multi_objective,
    trace_pv_single,
)

A2 = 3000.0


def test_coefficients_positive_cross_term(pv_steady):
    c = pv_coefficients(pv_steady.gain, 1.0)
    assert c.rho_sign == 1.0
    w = pv_steady.gain
    assert c.alpha1 + c.alpha2 == pytest.approx(w[0, 0] * w[0, 1] + w[1, 0] * w[1, 1])
    assert math.tan(c.phi) == pytest.approx((c.beta2 - c.beta1) / (2 * (c.alpha1 + c.alpha2)))


def test_coefficients_negative_cross_term():
    w = np.array([[0.5, -0.2], [0.1, 0.1]])
    c = pv_coefficients(w, 1.0)
    assert c.rho_sign == -1.0
    assert c.alpha1 == pytest.approx(0.1) and c.alpha2 == pytest.approx(-0.01)


def test_coefficients_shape():
    with pytest.raises(DimensionError):
        pv_coefficients(np.ones((2, 1)), 1.0)


def test_single_sensor_frozen(pv_steady):
    sp, sv, rho = trace_pv_single(pv_coefficients(pv_steady.gain, 1.0), A2, 1.0)
    assert sp == pytest.approx(52.33006, abs=1e-4)
    assert sv == pytest.approx(16.17296, abs=1e-4)
    assert rho == 1.0
    assert sp ** 2 + sv ** 2 == pytest.approx(A2, rel=1e-12)


def test_single_sensor_beats_fine_grid(pv_steady):
    w = pv_steady.gain
    sp, sv, rho = trace_pv_single(pv_coefficients(w, 1.0), A2, 1.0)
    best = pv_trace_gain(w, sp, sv, rho)
    a = math.sqrt(A2)
    for th in np.linspace(0, math.pi / 2, 2001):
        for r in (-1.0, 0.0, 1.0):
            assert pv_trace_gain(w, a * math.sin(th), a * math.cos(th), r) <= best * (1 + 1e-12)


def test_single_sensor_negative_sign_matches_brute_force():
    w = np.array([[0.5, -0.3], [0.2, 0.1]])
    t = 2.0
    sp, sv, rho = trace_pv_single(pv_coefficients(w, t), 100.0, t)
    assert rho == -1.0
    best = pv_trace_gain(w, sp, sv, rho)
    brute = max(pv_trace_gain(w, 10 * math.sin(th), 10 / t * math.cos(th), -1.0)
                for th in np.linspace(0, math.pi / 2, 20001))
    assert best >= brute * (1 - 1e-9)


def test_single_sensor_rejects_negative_budget(pv_steady):
    with pytest.raises(ValidationError):
        trace_pv_single(pv_coefficients(pv_steady.gain, 1.0), -1.0, 1.0)


def test_multi_matches_eigen_oracle(pv2_fused, pv2_steady):
    grid = trace_pv_multi(pv2_fused, pv2_steady.gain, A2, 1.0)
    exact = trace_pv_multi_eigen(pv2_fused, pv2_steady.gain, A2, 1.0)
    assert grid.objective == pytest.approx(exact.objective, rel=1e-10)
    assert exact.objective == pytest.approx(486.34017859, rel=1e-8)
    np.testing.assert_allclose(grid.variances, exact.variances, rtol=1e-4)


def test_multi_beats_reference_point(pv2_fused, pv2_steady):
    sol = trace_pv_multi(pv2_fused, pv2_steady.gain, A2, 1.0)
    ref = BiasCovariance.from_variances([1826.0, 81.0, 1023.0, 68.0], np.ones((4, 4)))
    ref_val = trace_pv_multi_objective(pv2_fused, pv2_steady.gain, ref)
    assert ref_val == pytest.approx(477.635, abs=1e-3)
    assert sol.objective >= ref_val


def test_reduced_and_full_objective_agree_at_reference(pv2_fused, pv2_steady):
    # four standard deviations with the sign-pattern correlation vs the full covariance form
    w = pv2_steady.gain
    sd = np.sqrt([1826.0, 81.0, 1023.0, 68.0])
    xi = np.tile([1.0, pv_coefficients(w, 1.0).rho_sign], 2)
    shift = w @ pv2_fused.combiner @ (xi * sd)
    full = trace_pv_multi_objective(pv2_fused, w, BiasCovariance(sd, np.outer(xi, xi)))
    assert float(shift @ shift) == pytest.approx(full, rel=1e-12)


def test_multi_budget_used(pv2_fused, pv2_steady):
    sol = trace_pv_multi(pv2_fused, pv2_steady.gain, A2, 1.0)
    assert np.sum(sol.variances * np.array([1, 1, 1, 1])) == pytest.approx(A2, rel=1e-9)


def test_multi_zero_budget(pv2_fused, pv2_steady):
    sol = trace_pv_multi(pv2_fused, pv2_steady.gain, 0.0, 1.0)
    assert sol.objective == 0.0


def test_multi_includes_p(pv2_fused, pv2_steady):
    a = trace_pv_multi(pv2_fused, pv2_steady.gain, A2, 1.0)
    b = trace_pv_multi(pv2_fused, pv2_steady.gain, A2, 1.0, p=pv2_steady.p)
    assert b.objective - a.objective == pytest.approx(np.trace(pv2_steady.p), rel=1e-9)


def test_per_sensor_split(pv2_fused, pv2_steady):
    sol = trace_pv_multi(pv2_fused, pv2_steady.gain, A2, 1.0)
    blocks = sol.per_sensor()
    assert len(blocks) == 2
    np.testing.assert_allclose(blocks[1].matrix, sol.sigma.matrix[2:, 2:])
