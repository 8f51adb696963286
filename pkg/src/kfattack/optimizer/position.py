"""Attack allocations for suites of position-only sensors.

After fusion the suite acts as one scalar sensor whose bias is
``b_e = sum_i c_i b_i``. Both the trace and the determinant of the
post-attack MSE grow with ``var(b_e)``, so every solver here maximizes that
scalar variance under ``sum_i sigma_i^2 = a^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError


@dataclass(frozen=True)
class TraceSolutionPosition:
    """Per-sensor bias standard deviations and correlations.

    ``objective`` is the fused bias variance for trace solvers and
    ``det(P + A)`` for :func:`det_position`; ``sigma_e`` is always the fused
    bias variance.
    """

    sigmas: np.ndarray
    rho: np.ndarray
    objective: float
    sigma_e: float

    @property
    def variances(self) -> np.ndarray:
        return self.sigmas ** 2

    @property
    def matrix(self) -> np.ndarray:
        return self.sigmas[:, None] * self.rho * self.sigmas[None, :]


def _check(weights, budget) -> np.ndarray:
    c = np.atleast_1d(np.asarray(weights, dtype=float))
    if c.size == 0:
        raise ValidationError("weights must not be empty")
    if np.any(c < 0):
        raise ValidationError("fusion weights must be non-negative")
    if budget < 0:
        raise ValidationError("budget must be non-negative")
    return c


def fused_variance(weights, sigma_matrix) -> float:
    """``c^T Sigma c``: variance of the fused bias."""
    c = np.asarray(weights, dtype=float)
    return float(c @ np.asarray(sigma_matrix, dtype=float) @ c)


def trace_position_independent(weights, budget: float) -> TraceSolutionPosition:
    """Independent biases: put the whole budget on the largest weight (lowest index on ties)."""
    c = _check(weights, budget)
    best = int(np.argmax(c))
    sig = np.zeros_like(c)
    sig[best] = np.sqrt(budget)
    rho = np.eye(c.size)
    value = float(c[best] ** 2 * budget)
    return TraceSolutionPosition(sig, rho, value, value)


def trace_position_correlated(weights, budget: float) -> TraceSolutionPosition:
    """Fully correlated biases with ``sigma_i`` proportional to ``c_i``."""
    c = _check(weights, budget)
    norm = float(np.sqrt(np.sum(c * c)))
    if norm == 0.0:
        raise ValidationError("weights vector is identically zero")
    sig = c * np.sqrt(budget) / norm
    value = float(budget * norm ** 2)
    return TraceSolutionPosition(sig, np.ones((c.size, c.size)), value, value)


def equal_split_correlated(weights, budget: float) -> TraceSolutionPosition:
    """Baseline: equal power per sensor, all biases fully correlated."""
    c = _check(weights, budget)
    sig = np.full(c.size, np.sqrt(budget / c.size))
    rho = np.ones((c.size, c.size))
    value = fused_variance(c, sig[:, None] * rho * sig[None, :])
    return TraceSolutionPosition(sig, rho, value, value)


def det_with_scalar_bias(p, d0, sigma_e: float) -> tuple[float, float]:
    """``det(P + sigma_e d0 d0^T)`` computed directly and through eigenvalues.

    The eigenvalue route uses ``|P| prod(1 + sigma_e lambda_i)`` with
    ``lambda_i`` the eigenvalues of ``P^-1/2 d0 d0^T P^-1/2``.
    """
    p = np.asarray(p, dtype=float)
    d0 = np.asarray(d0, dtype=float).reshape(-1, 1)
    direct = float(np.linalg.det(p + sigma_e * (d0 @ d0.T)))
    vals, vecs = np.linalg.eigh(p)
    p_isqrt = (vecs / np.sqrt(vals)) @ vecs.T
    lam = np.linalg.eigvalsh(p_isqrt @ d0 @ d0.T @ p_isqrt)
    via_eig = float(np.prod(vals) * np.prod(1.0 + sigma_e * lam))
    return direct, via_eig


def det_position(weights, budget: float, p, d0) -> TraceSolutionPosition:
    """Determinant-optimal allocation; identical to the correlated trace optimum.

    ``p`` is the nominal ``P[K|K]`` and ``d0`` the (fused, scalar-input) gain.
    """
    sol = trace_position_correlated(weights, budget)
    direct, via_eig = det_with_scalar_bias(p, d0, sol.sigma_e)
    assert abs(direct - via_eig) <= 1e-9 * abs(direct), (direct, via_eig)
    return TraceSolutionPosition(sol.sigmas, sol.rho, direct, sol.sigma_e)
