"""Monte Carlo validation of attack impact and confidence-ellipse geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .attack import AttackPlan, extra_mse
from .errors import NumericalError, ValidationError
from .kalman import DEFAULT_P0, GainSchedule, finite_schedule
from .model import SensorSuite, StateSpaceModel, stack_suite

DEFAULT_RUNS = 10_000
DEFAULT_GAMMA = 9.21
DEFAULT_SEED = 20160101


@dataclass(frozen=True)
class SimConfig:
    model: StateSpaceModel
    suite: SensorSuite
    runs: int = DEFAULT_RUNS
    horizon: int = 100
    seed: int = DEFAULT_SEED
    attack: AttackPlan | None = None
    p0: np.ndarray = field(default_factory=lambda: DEFAULT_P0.copy())
    x0: np.ndarray | None = None
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if self.runs < 1:
            raise ValidationError("runs must be >= 1")
        if self.horizon < 1:
            raise ValidationError("horizon must be >= 1")
        if self.attack is not None and self.horizon < self.attack.start:
            raise ValidationError("horizon ends before the attack starts")
        if not 0 <= self.seed < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        if self.gamma <= 0:
            raise ValidationError("gamma must be positive")


@dataclass(frozen=True)
class EllipseParams:
    center: np.ndarray
    axes: np.ndarray
    orientation: float


@dataclass(frozen=True)
class SimReport:
    """Per-step results for times ``k = 1 .. horizon``.

    ``band`` is three standard errors of ``q_norm`` under the theoretical
    error distribution ``N(0, P + A)``; with no attack it equals
    ``3 sqrt(2 n_x / runs)``.
    """

    runs: int
    q: np.ndarray
    q_norm: np.ndarray
    predicted: np.ndarray
    band: np.ndarray
    volumes: np.ndarray
    trace_total: np.ndarray
    det_total: np.ndarray
    ellipse_params: tuple[EllipseParams, ...]
    emse_theory: np.ndarray
    emse_empirical: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return np.arange(1, self.q.size + 1)

    def within_band(self) -> np.ndarray:
        return np.abs(self.q_norm - self.predicted) < self.band


def volume_constant(n: int) -> float:
    """Volume of the unit ball in ``n`` dimensions."""
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def _check_psd(p_total) -> np.ndarray:
    p = np.atleast_2d(np.asarray(p_total, dtype=float))
    if p.shape[0] != p.shape[1]:
        raise ValidationError("covariance must be square")
    p = 0.5 * (p + p.T)
    scale = max(float(np.max(np.abs(p))), 1.0)
    if np.linalg.eigvalsh(p)[0] < -1e-9 * scale:
        raise ValidationError("covariance is not positive semidefinite")
    return p


def ellipse_volume(p_total, gamma: float = DEFAULT_GAMMA) -> float:
    """Volume of ``{x : x^T P^-1 x <= gamma}``: ``c_n gamma^(n/2) |P|^(1/2)``."""
    if gamma <= 0:
        raise ValidationError("gamma must be positive")
    p = _check_psd(p_total)
    n = p.shape[0]
    det = max(float(np.linalg.det(p)), 0.0)
    return volume_constant(n) * gamma ** (n / 2) * math.sqrt(det)


def ellipse_geometry(p_total, gamma: float = DEFAULT_GAMMA) -> tuple[np.ndarray, float]:
    """Semi-axes (major first) and major-axis angle in ``(-pi/2, pi/2]``."""
    p = _check_psd(p_total)
    if p.shape != (2, 2):
        raise ValidationError("ellipse geometry needs a 2x2 covariance")
    vals, vecs = np.linalg.eigh(p)
    vals = np.clip(vals[::-1], 0.0, None)
    major = vecs[:, 1]
    angle = math.atan2(major[1], major[0])
    if angle <= -math.pi / 2:
        angle += math.pi
    elif angle > math.pi / 2:
        angle -= math.pi
    return np.sqrt(gamma * vals), angle


def q_band(p, a, runs: int, width: float = 3.0) -> float:
    """``width`` standard errors of the mean of ``e^T P^-1 e`` when ``e ~ N(0, P + A)``."""
    m = np.linalg.solve(p, p + a)
    return width * math.sqrt(2.0 * float(np.trace(m @ m)) / runs)


def covariance_standard_errors(cov, runs: int) -> np.ndarray:
    """Standard errors of sample-covariance entries for Gaussian data with covariance ``cov``."""
    c = np.asarray(cov, dtype=float)
    d = np.diag(c)
    return np.sqrt((np.outer(d, d) + c * c) / max(runs - 1, 1))


def _psd_sqrt(a) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (a + a.T))
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _run_stream(seed: int, run: int) -> np.random.Generator:
    # counter-derived substream: identical draws however runs are scheduled
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(run,))))


def draw_noise(seed: int, runs: int, horizon: int, dim_x: int, dim_z: int):
    """Standard-normal draws per run: initial state, process, measurement, bias."""
    x0 = np.empty((runs, dim_x))
    v = np.empty((runs, horizon, dim_x))
    w = np.empty((runs, horizon, dim_z))
    b = np.empty((runs, horizon, dim_z))
    for j in range(runs):
        g = _run_stream(seed, j)
        x0[j] = g.standard_normal(dim_x)
        v[j] = g.standard_normal((horizon, dim_x))
        w[j] = g.standard_normal((horizon, dim_z))
        b[j] = g.standard_normal((horizon, dim_z))
    return x0, v, w, b


def run_monte_carlo(config: SimConfig, schedule: GainSchedule | None = None) -> SimReport:
    """Paired clean/corrupted filter runs with the unsuspecting filter's own ``P[k|k]``.

    The true initial state is drawn from ``N(x0, P0)`` so the nominal filter
    is exactly consistent from the first step.
    """
    model, horizon, runs = config.model, config.horizon, config.runs
    h, r = stack_suite(config.suite)
    n, dz = model.dim_x, h.shape[0]
    p0 = np.asarray(config.p0, dtype=float)
    if schedule is None:
        schedule = finite_schedule(model, h, r, p0, horizon)
    plan = config.attack
    if plan is not None and plan.covariances[0].dim != dz:
        raise ValidationError(f"attack bias dimension {plan.covariances[0].dim} != stacked measurement {dz}")
    x0 = np.zeros(n) if config.x0 is None else np.asarray(config.x0, dtype=float)

    e0, ev, ew, eb = draw_noise(config.seed, runs, horizon, n, dz)
    sq_q = _psd_sqrt(model.q)
    sq_r = np.linalg.cholesky(r)
    x_true = x0 + e0 @ _psd_sqrt(p0).T
    x_clean = np.broadcast_to(x0, (runs, n)).copy()
    x_dirty = x_clean.copy()
    drift = model.g @ model.u

    q = np.empty(horizon)
    predicted = np.empty(horizon)
    band = np.empty(horizon)
    volumes = np.empty(horizon)
    trace_total = np.empty(horizon)
    det_total = np.empty(horizon)
    emse_theory = np.empty((horizon, n, n))
    emse_emp = np.empty((horizon, n, n))
    ellipses = []
    for k in range(1, horizon + 1):
        i = k - 1
        x_true = x_true @ model.f.T + drift + ev[:, i] @ sq_q.T
        z = x_true @ h.T + ew[:, i] @ sq_r.T
        z_dirty = z
        if plan is not None and plan.start <= k <= plan.end:
            z_dirty = z + eb[:, i] @ _psd_sqrt(plan.covariance_at(k)).T
        gain = schedule.gain_at(k)
        x_clean = x_clean @ model.f.T + drift
        x_clean = x_clean + (z - x_clean @ h.T) @ gain.T
        x_dirty = x_dirty @ model.f.T + drift
        x_dirty = x_dirty + (z_dirty - x_dirty @ h.T) @ gain.T

        p = schedule.covariance_at(k)
        try:
            p_inv = np.linalg.inv(p)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"nominal covariance singular at k={k}") from exc
        err = x_dirty - x_true
        q[i] = float(np.sum((err @ p_inv) * err))
        a = extra_mse(plan, schedule, model, h, at=k) if plan is not None else np.zeros((n, n))
        emse_theory[i] = a
        predicted[i] = n + float(np.trace(p_inv @ a))
        band[i] = q_band(p, a, runs)
        total = p + a
        trace_total[i] = float(np.trace(total))
        det_total[i] = float(np.linalg.det(total))
        volumes[i] = ellipse_volume(total, config.gamma)
        delta = x_dirty - x_clean
        emse_emp[i] = np.cov(delta, rowvar=False, ddof=1) if runs > 1 else np.zeros((n, n))
        if n == 2:
            axes, angle = ellipse_geometry(total, config.gamma)
            ellipses.append(EllipseParams(err.mean(axis=0), axes, angle))
    return SimReport(runs, q, q / runs, predicted, band, volumes, trace_total, det_total,
                     tuple(ellipses), emse_theory, emse_emp)


@dataclass(frozen=True)
class KappaSurface:
    rho: np.ndarray
    kappa: np.ndarray
    volume: np.ndarray  # shape (len(rho), len(kappa))

    @property
    def argmax(self) -> tuple[float, float]:
        i, j = np.unravel_index(int(np.argmax(self.volume)), self.volume.shape)
        return float(self.rho[i]), float(self.kappa[j])


def kappa_sweep(gain, p, budget: float, t: float, rho_grid, kappa_grid, gamma: float = DEFAULT_GAMMA) -> KappaSurface:
    """Ellipse volume over correlation and ``kappa = sigma_p / (T sigma_v)`` at fixed power.

    ``sigma_p^2 + T^2 sigma_v^2 = budget`` on every grid point.
    """
    rho_grid = np.atleast_1d(np.asarray(rho_grid, dtype=float))
    kappa_grid = np.atleast_1d(np.asarray(kappa_grid, dtype=float))
    if rho_grid.size == 0 or kappa_grid.size == 0:
        raise ValidationError("grids must be non-empty")
    w = np.asarray(gain, dtype=float)
    p = np.asarray(p, dtype=float)
    a = math.sqrt(budget)
    vol = np.empty((rho_grid.size, kappa_grid.size))
    for j, kap in enumerate(kappa_grid):
        sp = kap * a / math.sqrt(1 + kap * kap)
        sv = a / (t * math.sqrt(1 + kap * kap))
        for i, rho in enumerate(rho_grid):
            c = rho * sp * sv
            s = np.array([[sp * sp, c], [c, sv * sv]])
            vol[i, j] = ellipse_volume(p + w @ s @ w.T, gamma)
    return KappaSurface(rho_grid, kappa_grid, vol)
