"""Extra mean-squared error (EMSE) caused by bias injection.

A bias ``b_k`` added to the measurements from time ``K`` onwards shifts the
estimate at time ``K+N`` by ``sum_m D_m b_{K+N-m}`` where

    B_k = (I - W_k H) F
    D_m = B_{K+N} B_{K+N-1} ... B_{K+N-m+1} W_{K+N-m}

For zero-mean biases independent over time this adds
``A_{K+N} = sum_m D_m Sigma_{K+N-m} D_m^T`` to the filter's MSE matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ValidationError
from .kalman import FilterState, GainSchedule, predict, update
from .model import StateSpaceModel

PSD_ATOL = 1e-9
WEIGHT_SUM_ATOL = 1e-12


@dataclass(frozen=True)
class BiasCovariance:
    """Covariance of a bias vector, as standard deviations and a correlation matrix."""

    sigmas: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        sig = np.atleast_1d(np.array(self.sigmas, dtype=float))
        rho = np.atleast_2d(np.array(self.rho, dtype=float))
        n = sig.shape[0]
        if sig.ndim != 1 or rho.shape != (n, n):
            raise DimensionError(f"sigmas {sig.shape} and rho {rho.shape} do not match")
        if np.any(sig < 0) or not np.all(np.isfinite(sig)):
            raise ValidationError("bias standard deviations must be finite and non-negative")
        if not np.array_equal(rho, rho.T):
            if np.max(np.abs(rho - rho.T)) > 1e-12:
                raise ValidationError("correlation matrix must be symmetric")
            rho = 0.5 * (rho + rho.T)
        if not np.all(np.diag(rho) == 1.0):
            raise ValidationError("correlation matrix must have a unit diagonal")
        if np.any(np.abs(rho) > 1.0):
            raise ValidationError("correlation coefficients must lie in [-1, 1]")
        sig.setflags(write=False)
        rho.setflags(write=False)
        object.__setattr__(self, "sigmas", sig)
        object.__setattr__(self, "rho", rho)
        if self.min_eigenvalue() < -PSD_ATOL * max(1.0, float(np.max(sig, initial=0.0)) ** 2):
            raise ValidationError("bias covariance is not positive semidefinite")

    @property
    def dim(self) -> int:
        return self.sigmas.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        s = self.sigmas
        return s[:, None] * self.rho * s[None, :]

    @property
    def variances(self) -> np.ndarray:
        return self.sigmas ** 2

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])

    @classmethod
    def zeros(cls, n: int) -> "BiasCovariance":
        return cls(np.zeros(n), np.eye(n))

    @classmethod
    def from_variances(cls, variances, rho=None) -> "BiasCovariance":
        v = np.atleast_1d(np.asarray(variances, dtype=float))
        return cls(np.sqrt(v), np.eye(v.shape[0]) if rho is None else rho)

    @classmethod
    def from_matrix(cls, sigma) -> "BiasCovariance":
        """Decompose a PSD covariance; rows with zero variance get zero correlation."""
        s = np.atleast_2d(np.asarray(sigma, dtype=float))
        s = 0.5 * (s + s.T)
        sig = np.sqrt(np.clip(np.diag(s), 0.0, None))
        rho = np.eye(s.shape[0])
        nz = sig > 0
        idx = np.flatnonzero(nz)
        for i in idx:
            for j in idx:
                if i != j:
                    rho[i, j] = np.clip(s[i, j] / (sig[i] * sig[j]), -1.0, 1.0)
        return cls(sig, rho)


def nearest_correlation(rho) -> np.ndarray:
    """Project a symmetric matrix onto valid correlation matrices.

    Clips negative eigenvalues to zero, re-symmetrizes and rescales to a unit
    diagonal. One pass; not the Frobenius-nearest point, but always valid.
    """
    a = np.atleast_2d(np.asarray(rho, dtype=float))
    a = 0.5 * (a + a.T)
    vals, vecs = np.linalg.eigh(a)
    a = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    a = 0.5 * (a + a.T)
    d = np.sqrt(np.clip(np.diag(a), np.finfo(float).tiny, None))
    out = a / np.outer(d, d)
    np.fill_diagonal(out, 1.0)
    return np.clip(out, -1.0, 1.0)


def trace_power_weights(n: int) -> np.ndarray:
    """Power weights for the plain ``trace(Sigma)`` definition."""
    return np.ones(n)


def pv_power_weights(t: float, n_sensors: int = 1) -> np.ndarray:
    """Power weights ``(1, T^2)`` per position/velocity sensor, stacked sensor-major."""
    return np.tile([1.0, t * t], n_sensors)


def weighted_power(sigma, weights) -> float:
    s = np.asarray(getattr(sigma, "matrix", sigma), dtype=float)
    return float(np.dot(np.asarray(weights, dtype=float), np.diag(s)))


@dataclass(frozen=True)
class AttackPlan:
    """Covariances of biases injected at times ``start, start+1, ...``.

    ``weights`` are the per-time objective weights (alpha) and sum to one;
    ``budget`` (a^2) bounds the total weighted power over the whole plan,
    with per-component weights ``power_weights``.
    """

    start: int
    covariances: tuple[BiasCovariance, ...]
    budget: float
    weights: tuple[float, ...] | None = None
    power_weights: np.ndarray | None = None

    def __post_init__(self):
        covs = tuple(self.covariances)
        if not covs:
            raise ValidationError("an attack plan needs at least one covariance")
        if self.start < 1:
            raise ValidationError("attack start time must be >= 1")
        dims = {c.dim for c in covs}
        if len(dims) != 1:
            raise DimensionError("plan covariances differ in dimension")
        n = covs[0].dim
        w = np.full(len(covs), 1.0 / len(covs)) if self.weights is None else np.asarray(self.weights, float)
        if w.shape != (len(covs),) or np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_SUM_ATOL:
            raise ValidationError("time weights must be non-negative, one per step, and sum to 1")
        pw = trace_power_weights(n) if self.power_weights is None else np.asarray(self.power_weights, float)
        if pw.shape != (n,):
            raise DimensionError("power weights do not match bias dimension")
        if self.budget < 0:
            raise ValidationError("budget must be non-negative")
        total = sum(weighted_power(c, pw) for c in covs)
        if total > self.budget * (1 + 1e-9) + 1e-12:
            raise ValidationError(f"plan power {total:.6g} exceeds budget {self.budget:.6g}")
        object.__setattr__(self, "covariances", covs)
        object.__setattr__(self, "weights", tuple(float(x) for x in w))
        object.__setattr__(self, "power_weights", pw)

    @property
    def end(self) -> int:
        return self.start + len(self.covariances) - 1

    @property
    def horizon(self) -> int:
        """N, so the plan spans ``K .. K+N``."""
        return len(self.covariances) - 1

    def covariance_at(self, k: int) -> np.ndarray:
        n = self.covariances[0].dim
        if self.start <= k <= self.end:
            return self.covariances[k - self.start].matrix
        return np.zeros((n, n))

    @classmethod
    def single(cls, start, sigma: BiasCovariance, budget, power_weights=None) -> "AttackPlan":
        return cls(start, (sigma,), budget, (1.0,), power_weights)


@dataclass(frozen=True)
class EmseReport:
    p_nominal: np.ndarray
    a_extra: np.ndarray
    trace_total: float = field(init=False)
    det_total: float = field(init=False)

    def __post_init__(self):
        total = self.p_nominal + self.a_extra
        object.__setattr__(self, "trace_total", float(np.trace(total)))
        object.__setattr__(self, "det_total", float(np.linalg.det(total)))


def bias_transition(gain, h, f) -> np.ndarray:
    gain = np.atleast_2d(gain)
    h = np.atleast_2d(h)
    f = np.atleast_2d(f)
    n = f.shape[0]
    if gain.shape != (n, h.shape[0]) or h.shape[1] != n or f.shape != (n, n):
        raise DimensionError(f"W {gain.shape}, H {h.shape}, F {f.shape} are inconsistent")
    return (np.eye(n) - gain @ h) @ f


def propagation_matrix(m: int, schedule: GainSchedule, model: StateSpaceModel, h, end: int | None = None) -> np.ndarray:
    """``D_m`` mapping the bias injected at ``end - m`` into the error at ``end``.

    ``end`` defaults to the last time of the schedule.
    """
    end = len(schedule) if end is None else end
    if m < 0 or end - m < 1:
        raise IndexError(f"m={m} out of range for end time {end}")
    d = schedule.gain_at(end - m)
    for i in range(m - 1, -1, -1):
        d = bias_transition(schedule.gain_at(end - i), h, model.f) @ d
    return d


def _propagators(schedule, model, h, at, first):
    """Yield ``(tau, D)`` for tau = at, at-1, ..., first, reusing the running product."""
    prod = np.eye(model.dim_x)
    for tau in range(at, first - 1, -1):
        yield tau, prod @ schedule.gain_at(tau)
        prod = prod @ bias_transition(schedule.gain_at(tau), h, model.f)


def extra_mse(plan: AttackPlan, schedule: GainSchedule, model: StateSpaceModel, h, at: int | None = None) -> np.ndarray:
    """``A_at`` from every injection in ``plan`` at or before time ``at``."""
    at = plan.end if at is None else at
    n = model.dim_x
    a = np.zeros((n, n))
    if at < plan.start:
        return a
    last = min(at, plan.end)
    for tau, d in _propagators(schedule, model, h, at, plan.start):
        if tau <= last:
            s = plan.covariance_at(tau)
            if d.shape[1] != s.shape[0]:
                raise DimensionError(f"gain columns {d.shape[1]} do not match bias dimension {s.shape[0]}")
            a += d @ s @ d.T
    return 0.5 * (a + a.T)


def emse(plan: AttackPlan, schedule: GainSchedule, model: StateSpaceModel, h, at: int | None = None) -> EmseReport:
    at = plan.end if at is None else at
    return EmseReport(schedule.covariance_at(at), extra_mse(plan, schedule, model, h, at))


def error_recursion_check(
    plan: AttackPlan,
    schedule: GainSchedule,
    model: StateSpaceModel,
    h,
    r,
    bias_draws,
    rng: np.random.Generator | None = None,
) -> float:
    """Max-abs gap between a paired-filter simulation and the closed-form bias effect.

    Two filters start from the same state at time ``K-1`` and see the same
    measurements, except that the second one gets ``bias_draws[j]`` added at
    time ``K+j``. The estimate difference at ``K+N`` is compared against
    ``sum_m D_m b_{K+N-m}``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    h = np.atleast_2d(np.asarray(h, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    draws = [np.atleast_1d(np.asarray(b, dtype=float)) for b in bias_draws]
    if len(draws) != len(plan.covariances):
        raise DimensionError(f"expected {len(plan.covariances)} bias draws, got {len(draws)}")
    k0 = plan.start - 1
    p = schedule.covariance_at(k0)
    x_true = rng.normal(size=model.dim_x) * 10.0
    clean = FilterState(x_true + rng.multivariate_normal(np.zeros(model.dim_x), p), p)
    dirty = clean
    chol_q = _psd_sqrt(model.q)
    chol_r = np.linalg.cholesky(r)
    for b in draws:
        x_true = model.f @ x_true + chol_q @ rng.normal(size=model.dim_x)
        z = h @ x_true + chol_r @ rng.normal(size=h.shape[0])
        clean, _ = update(predict(clean, model), h, r, z)
        dirty, _ = update(predict(dirty, model), h, r, z + b)
    delta = dirty.x_hat - clean.x_hat
    predicted = np.zeros(model.dim_x)
    for tau, d in _propagators(schedule, model, h, plan.end, plan.start):
        predicted += d @ draws[tau - plan.start]
    return float(np.max(np.abs(delta - predicted)))


def _psd_sqrt(a) -> np.ndarray:
    vals, vecs = np.linalg.eigh(a)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))
