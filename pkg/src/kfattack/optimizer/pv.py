"""Trace-optimal attacks on position/velocity sensors.

Power is measured as ``sigma_p^2 + T^2 sigma_v^2`` per sensor. Stacked bias
vectors are ordered sensor-major: ``(p1, v1, p2, v2, ...)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..attack import BiasCovariance
from ..errors import DimensionError, ValidationError
from ..fusion import EquivalentSensor
from .search import coordinate_refine, pair_transfer_moves, simplex_grid


@dataclass(frozen=True)
class PvGainCoefficients:
    beta1: float
    beta2: float
    alpha1: float
    alpha2: float
    phi: float
    amplitude: float
    rho_sign: float

    @property
    def theta(self) -> float:
        """Optimal angle on the power ellipse, ``pi/4 - phi/2``."""
        return math.pi / 4 - self.phi / 2


def pv_coefficients(gain, t: float) -> PvGainCoefficients:
    w = np.asarray(gain, dtype=float)
    if w.shape != (2, 2):
        raise DimensionError(f"expected a 2x2 gain, got {w.shape}")
    (w11, w12), (w21, w22) = w
    beta1 = w11 * w11 + w21 * w21
    beta2 = w12 * w12 + w22 * w22
    if w11 * w12 + w21 * w22 >= 0:
        alpha1, alpha2, sign = w11 * w12, w21 * w22, 1.0
    else:
        alpha1, alpha2, sign = -w11 * w12, -w21 * w22, -1.0
    num = beta2 - beta1 * t * t
    den = 2.0 * t * (alpha1 + alpha2)
    # atan2(0, 0) == 0 gives the symmetric split in the fully degenerate case
    phi = math.atan2(num, den)
    amp = math.sqrt(0.25 * num * num + t * t * (alpha1 + alpha2) ** 2)
    return PvGainCoefficients(beta1, beta2, alpha1, alpha2, phi, amp, sign)


def pv_trace_gain(gain, sigma_p: float, sigma_v: float, rho: float) -> float:
    """``trace(W Sigma W^T)`` for a single 2x2 position/velocity bias covariance."""
    c = rho * sigma_p * sigma_v
    s = np.array([[sigma_p ** 2, c], [c, sigma_v ** 2]])
    w = np.asarray(gain, dtype=float)
    return float(np.trace(w @ s @ w.T))


def trace_pv_single(coeff: PvGainCoefficients, budget: float, t: float) -> tuple[float, float, float]:
    """Closed-form ``(sigma_p, sigma_v, rho)`` maximizing the trace under the PV power budget."""
    if budget < 0:
        raise ValidationError("budget must be non-negative")
    a = math.sqrt(budget)
    theta = coeff.theta
    return a * math.sin(theta), a / t * math.cos(theta), coeff.rho_sign


@dataclass(frozen=True)
class PvMultiSolution:
    """Optimal stacked bias covariance for several position/velocity sensors."""

    sigma: BiasCovariance
    objective: float
    grid_objective: float
    sweeps: int

    @property
    def variances(self) -> np.ndarray:
        return self.sigma.variances

    def per_sensor(self) -> list[BiasCovariance]:
        m = self.sigma.matrix
        return [BiasCovariance.from_matrix(m[2 * i:2 * i + 2, 2 * i:2 * i + 2]) for i in range(self.sigma.dim // 2)]


def _pv_scale(t: float, n_sensors: int) -> np.ndarray:
    """Divide scaled powers (``sigma_p^2``, ``T^2 sigma_v^2``) by this to get variances."""
    return np.tile([1.0, t * t], n_sensors)


def trace_pv_pattern(sign: float, n_sensors: int) -> np.ndarray:
    """Correlation sign vector: +1 on position components, ``sign`` on velocity ones."""
    return np.tile([1.0, sign], n_sensors)


def trace_pv_multi_objective(sensor: EquivalentSensor, gain, sigma, p=None) -> float:
    """``trace(P + W C Sigma C^T W^T)`` for a stacked bias covariance."""
    s = np.asarray(getattr(sigma, "matrix", sigma), dtype=float)
    c = sensor.combiner
    w = np.asarray(gain, dtype=float)
    a = w @ c @ s @ c.T @ w.T
    base = 0.0 if p is None else float(np.trace(p))
    return base + float(np.trace(a))


def trace_pv_multi(
    sensor: EquivalentSensor,
    gain,
    budget: float,
    t: float,
    grid_step: float | None = None,
    p=None,
    refine_iters: int = 200,
    rtol: float = 1e-10,
) -> PvMultiSolution:
    """Grid search plus coordinate refinement over the per-component powers.

    All position-position and velocity-velocity correlations are fixed at 1
    and every position-velocity correlation at the sign of
    ``w11 w12 + w21 w22``. That leaves one standard deviation per component,
    searched on the budget simplex in scaled power units.
    """
    if budget < 0:
        raise ValidationError("budget must be non-negative")
    n_sensors = len(sensor.weights)
    dim = 2 * n_sensors
    if sensor.combiner.shape != (2, dim):
        raise DimensionError("trace_pv_multi expects position/velocity sensors")
    coeff = pv_coefficients(gain, t)
    xi = trace_pv_pattern(coeff.rho_sign, n_sensors)
    rho = np.outer(xi, xi)
    scale = _pv_scale(t, n_sensors)
    w = np.asarray(gain, dtype=float)
    lin = w @ sensor.combiner * xi  # bias std-devs -> shift of the estimate
    base = 0.0 if p is None else float(np.trace(p))

    def objective(u):
        g = lin @ np.sqrt(np.clip(u, 0.0, None) / scale)
        return base + float(g @ g)

    if budget == 0:
        zero = BiasCovariance(np.zeros(dim), rho)
        return PvMultiSolution(zero, base, base, 0)

    grid_step = budget / 20.0 if grid_step is None else grid_step
    if grid_step <= 0:
        raise ValidationError("grid_step must be positive")
    grid = simplex_grid(budget, dim, grid_step)
    shifts = np.sqrt(grid / scale) @ lin.T
    values = base + np.sum(shifts * shifts, axis=1)
    start = int(np.argmax(values))
    u, value, sweeps = coordinate_refine(
        objective, grid[start], pair_transfer_moves(range(dim)), refine_iters, rtol)
    sigma = BiasCovariance(np.sqrt(u / scale), rho)
    return PvMultiSolution(sigma, value, float(values[start]), sweeps)


def trace_pv_multi_eigen(sensor: EquivalentSensor, gain, budget: float, t: float, p=None) -> PvMultiSolution:
    """Exact optimum of the same problem via the top eigenvector of a quadratic form.

    With the correlation pattern fixed, the objective is ``y^T M y`` in the
    scaled standard deviations ``y`` on the sphere ``|y|^2 = a^2``; ``M``
    has non-negative entries so its top eigenvector lies in the positive
    orthant.
    """
    n_sensors = len(sensor.weights)
    coeff = pv_coefficients(gain, t)
    xi = trace_pv_pattern(coeff.rho_sign, n_sensors)
    scale = _pv_scale(t, n_sensors)
    lin = np.asarray(gain, dtype=float) @ sensor.combiner * xi / np.sqrt(scale)
    vals, vecs = np.linalg.eigh(lin.T @ lin)
    y = np.abs(vecs[:, -1]) * math.sqrt(budget)
    sigma = BiasCovariance(y / np.sqrt(scale), np.outer(xi, xi))
    value = (0.0 if p is None else float(np.trace(p))) + float(vals[-1] * budget)
    return PvMultiSolution(sigma, value, value, 0)
