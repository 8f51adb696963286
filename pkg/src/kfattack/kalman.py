"""Kalman and information filter recursions and gain schedules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DimensionError, NumericalError
from .model import StateSpaceModel

DEFAULT_P0 = np.diag([100.0, 100.0])
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10000


@dataclass(frozen=True)
class FilterState:
    x_hat: np.ndarray
    p: np.ndarray


@dataclass(frozen=True)
class GainSchedule:
    """Offline gain and covariance sequence of a Kalman filter.

    ``gains[i]`` and ``covariances[i]`` belong to time ``k = i + 1``; time 0
    is the prior ``p0``. When ``steady`` is set, the last entries are the
    steady-state gain and covariance and are reused for any later time.
    """

    gains: tuple[np.ndarray, ...]
    covariances: tuple[np.ndarray, ...]
    steady: bool
    p0: np.ndarray
    residual: float = 0.0

    def __post_init__(self):
        if len(self.gains) != len(self.covariances) or not self.gains:
            raise DimensionError("gains and covariances must be non-empty and equal in length")

    def __len__(self):
        return len(self.gains)

    def _index(self, k: int) -> int:
        if k < 1:
            raise IndexError(f"time {k} precedes the first update")
        if k > len(self.gains):
            if not self.steady:
                raise IndexError(f"time {k} beyond non-steady schedule of length {len(self.gains)}")
            return len(self.gains) - 1
        return k - 1

    def gain_at(self, k: int) -> np.ndarray:
        return self.gains[self._index(k)]

    def covariance_at(self, k: int) -> np.ndarray:
        if k == 0:
            return self.p0
        return self.covariances[self._index(k)]

    @property
    def gain(self) -> np.ndarray:
        """Last (steady, if converged) gain."""
        return self.gains[-1]

    @property
    def p(self) -> np.ndarray:
        """Last (steady, if converged) updated covariance."""
        return self.covariances[-1]

    def require_steady(self) -> "GainSchedule":
        if not self.steady:
            raise ConvergenceError("gain schedule did not reach steady state", len(self.gains), self.residual)
        return self


def predict(state: FilterState, model: StateSpaceModel) -> FilterState:
    x = np.asarray(state.x_hat, dtype=float)
    p = np.asarray(state.p, dtype=float)
    if x.shape != (model.dim_x,) or p.shape != (model.dim_x, model.dim_x):
        raise DimensionError(f"state {x.shape}/{p.shape} does not match model dim {model.dim_x}")
    x_new = model.f @ x + model.g @ model.u
    p_new = model.f @ p @ model.f.T + model.q
    return FilterState(x_new, 0.5 * (p_new + p_new.T))


def innovation_gain(p_pred, h, r) -> np.ndarray:
    """Kalman gain ``P H^T (H P H^T + R)^-1``; raises on singular innovation covariance."""
    s = h @ p_pred @ h.T + r
    try:
        # solve S^T W^T = H P^T, S symmetric
        return np.linalg.solve(s, h @ p_pred.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular innovation covariance") from exc


def joseph(p_pred, w, h, r) -> np.ndarray:
    i_wh = np.eye(p_pred.shape[0]) - w @ h
    p = i_wh @ p_pred @ i_wh.T + w @ r @ w.T
    return 0.5 * (p + p.T)


def update(state: FilterState, h, r, z) -> tuple[FilterState, np.ndarray]:
    """Measurement update in Joseph form; returns the new state and the gain used."""
    h = np.atleast_2d(np.asarray(h, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    x = np.asarray(state.x_hat, dtype=float)
    p = np.asarray(state.p, dtype=float)
    if h.shape[1] != x.shape[0] or r.shape != (h.shape[0], h.shape[0]) or z.shape != (h.shape[0],):
        raise DimensionError(f"H {h.shape}, R {r.shape}, z {z.shape} inconsistent with state {x.shape}")
    w = innovation_gain(p, h, r)
    x_new = x + w @ (z - h @ x)
    return FilterState(x_new, joseph(p, w, h, r)), w


def information_update(y_pred, contribution) -> np.ndarray:
    y_pred = np.asarray(y_pred, dtype=float)
    contribution = np.asarray(contribution, dtype=float)
    if y_pred.shape != contribution.shape:
        raise DimensionError(f"information vectors differ in shape: {y_pred.shape} vs {contribution.shape}")
    return y_pred + contribution


def information_contribution(h, r, z) -> np.ndarray:
    """``H^T R^-1 z`` for one (possibly stacked) measurement."""
    h = np.atleast_2d(np.asarray(h, dtype=float))
    return h.T @ np.linalg.solve(np.atleast_2d(r), np.atleast_1d(z))


def steady_state(
    model: StateSpaceModel,
    h,
    r,
    p0=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> GainSchedule:
    """Iterate the covariance recursion from ``p0`` until ``P[k|k]`` stops moving.

    Convergence is declared when the max-abs change of ``P[k|k]`` between
    successive steps drops below ``tol``. The full schedule is returned either
    way; ``steady`` tells whether convergence happened (see
    :meth:`GainSchedule.require_steady`).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    h, r, p = _check_recursion_inputs(model, h, r, p0)
    gains, covs = [], []
    p_prev = p
    residual = np.inf
    steady = False
    for w, p_new in _recursion(model, h, r, p):
        gains.append(w)
        covs.append(p_new)
        residual = float(np.max(np.abs(p_new - p_prev)))
        p_prev = p_new
        if residual < tol:
            steady = True
            break
        if len(gains) >= max_iter:
            break
    return GainSchedule(tuple(gains), tuple(covs), steady, p, residual)


def finite_schedule(model: StateSpaceModel, h, r, p0, steps: int) -> GainSchedule:
    """Exactly ``steps`` recursions from ``p0``, without a convergence test."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    h, r, p = _check_recursion_inputs(model, h, r, p0)
    gains, covs = [], []
    for w, p_new in _recursion(model, h, r, p):
        gains.append(w)
        covs.append(p_new)
        if len(gains) == steps:
            break
    residual = float(np.max(np.abs(covs[-1] - (covs[-2] if steps > 1 else p))))
    return GainSchedule(tuple(gains), tuple(covs), False, p, residual)


def _check_recursion_inputs(model, h, r, p0):
    h = np.atleast_2d(np.asarray(h, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    p = np.array(DEFAULT_P0 if p0 is None else p0, dtype=float)
    if p.shape != (model.dim_x, model.dim_x) or h.shape[1] != model.dim_x:
        raise DimensionError("p0/H dimensions do not match the model")
    if r.shape != (h.shape[0], h.shape[0]):
        raise DimensionError(f"R {r.shape} does not match H {h.shape}")
    p.setflags(write=False)
    return h, r, p


def _recursion(model, h, r, p):
    while True:
        p_pred = model.f @ p @ model.f.T + model.q
        w = innovation_gain(p_pred, h, r)
        p = joseph(p_pred, w, h, r)
        yield w, p
