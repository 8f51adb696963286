"""Power allocation over time for a weighted sum of extra-MSE traces.

The objective ``trace(sum_j alpha_j A_{K+j})`` is linear in the per-time
bias covariances: ``sum_m trace(Sigma_{K+m} M_m)`` with
``M_m = sum_{j>=m} alpha_j D_{j-m}^T D_{j-m}``. Under one total power
budget the maximum puts everything at a single time, along the top
eigenvector of the (power-normalized) ``M_m`` with the largest eigenvalue.
"""

from __future__ import annotations

import numpy as np

from ..attack import AttackPlan, BiasCovariance, propagation_matrix
from ..errors import DimensionError, ValidationError
from ..kalman import GainSchedule
from ..model import StateSpaceModel


def time_coefficients(schedule: GainSchedule, model: StateSpaceModel, h, weights, end: int | None = None) -> list[np.ndarray]:
    """Coefficient matrices ``M_0 .. M_N`` of the weighted multi-time objective.

    ``D_m`` are taken from the schedule ending at ``end`` (default: its last
    time, i.e. the steady gain when the schedule has converged).
    """
    alpha = np.asarray(weights, dtype=float)
    n = alpha.size
    if n == 0:
        raise ValidationError("empty attack horizon")
    end = len(schedule) if end is None else end
    if schedule.steady:
        end = max(end, len(schedule) + n)
    d = [propagation_matrix(m, schedule, model, h, end=end) for m in range(n)]
    gram = [dm.T @ dm for dm in d]
    return [sum(alpha[j] * gram[j - m] for j in range(m, n)) for m in range(n)]


def trace_multitime(
    schedule: GainSchedule,
    weights,
    budget: float,
    model: StateSpaceModel,
    h,
    mode: str = "vector",
    power_weights=None,
    start: int | None = None,
) -> AttackPlan:
    """All power at the time (and direction) with the largest objective coefficient.

    ``mode="scalar"`` is the single-measurement case where each coefficient
    is the number ``sum_j alpha_j |D_{j-m}|^2``; ``"vector"`` handles bias
    vectors. Ties go to the earliest time.
    """
    if mode not in ("scalar", "vector"):
        raise ValueError(f"unknown mode {mode!r}")
    alpha = np.asarray(weights, dtype=float)
    if alpha.size == 0:
        raise ValidationError("empty attack horizon")
    if np.any(alpha < 0) or abs(alpha.sum() - 1.0) > 1e-12:
        raise ValidationError("time weights must be non-negative and sum to 1")
    coeffs = time_coefficients(schedule, model, h, alpha)
    dim = coeffs[0].shape[0]
    if mode == "scalar" and dim != 1:
        raise DimensionError("scalar mode needs a single-output (fused) measurement")
    pw = np.ones(dim) if power_weights is None else np.asarray(power_weights, dtype=float)
    s_inv = np.diag(1.0 / np.sqrt(pw))
    tops = []
    for m_mat in coeffs:
        vals, vecs = np.linalg.eigh(s_inv @ m_mat @ s_inv)
        tops.append((vals[-1], vecs[:, -1]))
    best = int(np.argmax([v for v, _ in tops]))
    direction = s_inv @ tops[best][1]
    covs = []
    for m in range(alpha.size):
        if m == best:
            covs.append(BiasCovariance.from_matrix(budget * np.outer(direction, direction)))
        else:
            covs.append(BiasCovariance.zeros(dim))
    start = len(schedule) + 1 if start is None else start
    return AttackPlan(start, tuple(covs), budget, tuple(alpha), pw)


def multitime_objective(plan: AttackPlan, schedule: GainSchedule, model: StateSpaceModel, h) -> float:
    """``sum_m trace(Sigma_{K+m} M_m)`` for an arbitrary plan."""
    coeffs = time_coefficients(schedule, model, h, plan.weights)
    return float(sum(np.trace(c.matrix @ m) for c, m in zip(plan.covariances, coeffs)))
