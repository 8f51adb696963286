"""Determinant-optimal attacks on position/velocity sensors.

For a single sensor the problem reduces to maximizing
``|I + Sigma Xi|`` with ``Xi = W^T P^-1 W``, solved exactly by water-filling
over the eigen-directions of ``Xi``. The multi-sensor version has no closed
form and is solved by a coarse grid followed by coordinate refinement.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..attack import BiasCovariance
from ..errors import DimensionError, NumericalError, ValidationError
from ..fusion import EquivalentSensor
from .search import box_moves, coordinate_refine, pair_transfer_moves, simplex_grid

PSD_TOL = 1e-12
WATERFILL_RTOL = 1e-12

# Correlation entries of a two-sensor stacked bias (p1, v1, p2, v2).
RHO_NAMES = ("p1p2", "p1v1", "p1v2", "v1p2", "p2v2", "v1v2")
RHO_PAIRS = ((0, 2), (0, 1), (0, 3), (1, 2), (2, 3), (1, 3))


@dataclass(frozen=True)
class DetQuadratic:
    """Entries of the symmetric 2x2 matrix ``W^T P^-1 W``."""

    m1: float
    m2: float
    m3: float

    def __post_init__(self):
        if self.m1 < -PSD_TOL or self.m3 < -PSD_TOL or self.m1 * self.m3 - self.m2 ** 2 < -1e-12:
            raise ValidationError("W^T P^-1 W is not positive semidefinite")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.m1, self.m2], [self.m2, self.m3]])


def attack_leverage(gain, p) -> np.ndarray:
    """``W^T P^-1 W``, the matrix the determinant objective depends on."""
    w = np.asarray(gain, dtype=float)
    try:
        xi = w.T @ np.linalg.solve(np.asarray(p, dtype=float), w)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("nominal covariance P is singular") from exc
    return 0.5 * (xi + xi.T)


def det_quadratic(gain, p) -> DetQuadratic:
    xi = attack_leverage(gain, p)
    if xi.shape != (2, 2):
        raise DimensionError("closed-form determinant expansion needs a 2x2 gain")
    return DetQuadratic(xi[0, 0], xi[0, 1], xi[1, 1])


def _det_expansion(s, q: DetQuadratic) -> float:
    sp2, sv2, c = s[0, 0], s[1, 1], s[0, 1]
    return float(1.0 + (sp2 * sv2 - c * c) * (q.m1 * q.m3 - q.m2 ** 2)
                 + sp2 * q.m1 + sv2 * q.m3 + 2.0 * c * q.m2)


def det_objective(sigma, gain, p) -> float:
    """``|I + Sigma W^T P^-1 W|``, i.e. ``det(P + W Sigma W^T) / det(P)``.

    For 2x2 biases the value is computed both by the closed expansion in
    ``(m1, m2, m3)`` and by a direct determinant, which must agree.
    """
    s = np.asarray(getattr(sigma, "matrix", sigma), dtype=float)
    xi = attack_leverage(gain, p)
    if s.shape != xi.shape:
        raise DimensionError(f"bias covariance {s.shape} does not match gain columns {xi.shape}")
    direct = float(np.linalg.det(np.eye(s.shape[0]) + s @ xi))
    if s.shape == (2, 2):
        closed = _det_expansion(s, det_quadratic(gain, p))
        assert abs(closed - direct) <= 1e-10 * max(abs(direct), 1.0), (closed, direct)
    return direct


def det_total(sigma, gain, p) -> float:
    """``det(P + W Sigma W^T)``."""
    s = np.asarray(getattr(sigma, "matrix", sigma), dtype=float)
    w = np.asarray(gain, dtype=float)
    return float(np.linalg.det(np.asarray(p, dtype=float) + w @ s @ w.T))


def waterfill(eigvals, budget: float) -> tuple[np.ndarray, float]:
    """Maximize ``sum log(1 + x_i e_i)`` subject to ``sum x_i = budget``, ``x >= 0``.

    Returns ``(powers, water_level)`` where ``water_level = 1/lambda`` and
    ``powers_i = (water_level - 1/e_i)^+``. Directions with ``e_i == 0``
    never receive power; if all are zero, the water level is ``nan``.
    """
    e = np.asarray(eigvals, dtype=float)
    if budget < 0:
        raise ValidationError("budget must be non-negative")
    usable = e > PSD_TOL * max(float(np.max(e, initial=0.0)), 1.0)
    powers = np.zeros_like(e)
    if not np.any(usable) or budget == 0:
        return powers, (math.nan if not np.any(usable) else float(np.min(1.0 / e[usable])))
    inv = np.full_like(e, np.inf)
    inv[usable] = 1.0 / e[usable]
    lo = float(np.min(inv))
    hi = lo + budget

    def filled(mu):
        return float(np.sum(np.clip(mu - inv, 0.0, None)))

    while hi - lo > WATERFILL_RTOL * hi:
        mid = 0.5 * (lo + hi)
        if filled(mid) < budget:
            lo = mid
        else:
            hi = mid
    mu = 0.5 * (lo + hi)
    # exact level for the active set found by bisection
    for _ in range(e.size + 1):
        active = inv < mu
        mu_exact = (budget + float(np.sum(inv[active]))) / int(np.sum(active))
        if np.array_equal(inv < mu_exact, active) or mu_exact == mu:
            mu = mu_exact
            break
        mu = mu_exact
    active = inv < mu
    powers[active] = mu - inv[active]
    return powers, mu


@dataclass(frozen=True)
class WaterfillSolution:
    """Water-filling optimum of the single-sensor determinant problem.

    ``eigvals`` (ascending) and ``powers`` live in the power-normalized
    coordinates where the budget is a plain trace; ``sigma_k`` is mapped
    back to measurement units.
    """

    eigvals: np.ndarray
    powers: np.ndarray
    lam: float
    sigma_k: np.ndarray
    objective: float
    degenerate: bool = False
    eigvecs: np.ndarray = field(default=None, repr=False)

    @property
    def bias(self) -> BiasCovariance:
        return BiasCovariance.from_matrix(self.sigma_k)


def det_pv_single_waterfill(gain, p, budget: float, t: float = 1.0) -> WaterfillSolution:
    """Exact maximizer of ``det(P + W Sigma W^T)`` under ``sigma_p^2 + T^2 sigma_v^2 = a^2``.

    With ``S = diag(1, T)`` and ``Sigma' = S Sigma S`` the budget becomes
    ``trace(Sigma') = a^2``; water-filling runs on ``S^-1 Xi S^-1``.
    """
    xi = attack_leverage(gain, p)
    s_inv = np.diag(1.0 / np.array([1.0, t] if xi.shape == (2, 2) else np.ones(xi.shape[0])))
    xi_scaled = s_inv @ xi @ s_inv
    vals, vecs = np.linalg.eigh(0.5 * (xi_scaled + xi_scaled.T))
    vals = np.clip(vals, 0.0, None)
    powers, mu = waterfill(vals, budget)
    degenerate = not np.any(powers > 0) and budget > 0
    if degenerate:
        warnings.warn("attack has no leverage: W^T P^-1 W is zero", RuntimeWarning, stacklevel=2)
    sigma_scaled = (vecs * powers) @ vecs.T
    sigma_k = s_inv @ sigma_scaled @ s_inv
    sigma_k = 0.5 * (sigma_k + sigma_k.T)
    lam = 1.0 / mu if mu and math.isfinite(mu) else math.inf
    obj = det_total(sigma_k, gain, p)
    return WaterfillSolution(vals, powers, lam, sigma_k, obj, degenerate, vecs)


# ---------------------------------------------------------------- multi-sensor


def correlation_from_entries(entries, pairs=RHO_PAIRS, dim=4) -> np.ndarray:
    rho = np.eye(dim)
    for (i, j), r in zip(pairs, entries):
        rho[i, j] = rho[j, i] = r
    return rho


def entries_from_correlation(rho, pairs=RHO_PAIRS) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    return np.array([rho[i, j] for i, j in pairs])


def correlation_from_angles(angles, dim=4) -> np.ndarray:
    """Correlation matrix ``B B^T`` whose unit rows are given in hyperspherical angles.

    Row ``i`` uses ``i`` angles; any angles in ``[0, pi]`` give a valid
    correlation matrix and every correlation matrix is reachable.
    """
    b = np.zeros((dim, dim))
    b[0, 0] = 1.0
    k = 0
    for i in range(1, dim):
        prod = 1.0
        for j in range(i):
            th = angles[k]
            k += 1
            b[i, j] = prod * math.cos(th)
            prod *= math.sin(th)
        b[i, i] = prod
    rho = b @ b.T
    np.fill_diagonal(rho, 1.0)
    return np.clip(rho, -1.0, 1.0)


def angles_from_correlation(rho) -> np.ndarray:
    """Inverse of :func:`correlation_from_angles` for a PSD correlation matrix."""
    rho = np.asarray(rho, dtype=float)
    dim = rho.shape[0]
    b = np.zeros((dim, dim))
    # semidefinite Cholesky: zero pivots leave their column empty
    for i in range(dim):
        for j in range(i + 1):
            acc = rho[i, j] - b[i, :j] @ b[j, :j]
            if i == j:
                b[i, i] = math.sqrt(max(acc, 0.0))
            elif b[j, j] > 1e-12:
                b[i, j] = acc / b[j, j]
        norm = np.linalg.norm(b[i, :i + 1])
        if norm > 0:
            b[i, :i + 1] /= norm
    angles = []
    for i in range(1, dim):
        rest = 1.0
        for j in range(i):
            if rest <= 1e-15:
                angles.append(0.0)
                continue
            c = float(np.clip(b[i, j] / rest, -1.0, 1.0))
            th = math.acos(c)
            angles.append(th)
            rest *= math.sin(th)
    return np.array(angles)


@dataclass(frozen=True)
class PvDetMultiSolution:
    sigma: BiasCovariance
    objective: float
    grid_objective: float
    sweeps: int
    reference_objective: float | None = None

    @property
    def variances(self) -> np.ndarray:
        return self.sigma.variances

    @property
    def rho_entries(self) -> dict[str, float]:
        return dict(zip(RHO_NAMES, entries_from_correlation(self.sigma.rho)))

    @property
    def beats_reference(self) -> bool | None:
        if self.reference_objective is None:
            return None
        return self.objective >= self.reference_objective


def det_pv_multi_objective(sensor: EquivalentSensor, gain, p, sigma) -> float:
    """``det(P + W C Sigma C^T W^T)`` for a stacked bias covariance ``Sigma``.

    ``Sigma`` need not be PSD here; the value is evaluated formally.
    """
    s = np.asarray(getattr(sigma, "matrix", sigma), dtype=float)
    c = sensor.combiner
    return det_total(c @ s @ c.T, gain, p)


def _psd_rho_grid(levels: np.ndarray, dim: int, pairs) -> np.ndarray:
    combos = np.array(list(itertools.product(levels, repeat=len(pairs))))
    mats = np.broadcast_to(np.eye(dim), (len(combos), dim, dim)).copy()
    for k, (i, j) in enumerate(pairs):
        mats[:, i, j] = mats[:, j, i] = combos[:, k]
    ok = np.linalg.eigvalsh(mats)[:, 0] >= -PSD_TOL
    return combos[ok]


def det_pv_multi(
    sensor: EquivalentSensor,
    gain,
    p,
    budget: float,
    t: float = 1.0,
    grid_step: float | None = None,
    refine_iters: int = 200,
    rho_step: float = 0.25,
    starts: int = 4,
    rtol: float = 1e-10,
    reference: tuple | None = None,
    chunk: int = 4096,
) -> PvDetMultiSolution:
    """Maximize ``det(P + W C Sigma C^T W^T)`` over two-sensor PV bias covariances.

    Phase one evaluates every point of a power simplex grid (spacing
    ``grid_step`` in scaled power units) against every correlation grid
    point (spacing ``rho_step``) whose correlation matrix is PSD; the rest
    are rejected. Phase two refines the ``starts`` best power allocations by
    cyclic golden-section line searches: pairwise power transfers, and
    correlation moves expressed in hyperspherical angles so that every
    candidate stays PSD.

    ``reference`` may hold ``(variances, rho)`` of a known strategy; its
    objective is reported alongside the optimum.
    """
    if budget < 0:
        raise ValidationError("budget must be non-negative")
    n_sensors = len(sensor.weights)
    if n_sensors != 2 or sensor.combiner.shape != (2, 4):
        raise DimensionError("det_pv_multi handles exactly two position/velocity sensors")
    p = np.asarray(p, dtype=float)
    w = np.asarray(gain, dtype=float)
    c = sensor.combiner
    scale = np.tile([1.0, t * t], n_sensors)
    ref_obj = None
    if reference is not None:
        ref_var, ref_rho = reference
        ref_rho = np.asarray(ref_rho, dtype=float)
        if ref_rho.ndim == 1:
            ref_rho = correlation_from_entries(ref_rho)
        sd = np.sqrt(np.asarray(ref_var, dtype=float))
        ref_obj = det_pv_multi_objective(sensor, w, p, sd[:, None] * ref_rho * sd[None, :])

    base = float(np.linalg.det(p))
    if budget == 0:
        zero = BiasCovariance.zeros(4)
        return PvDetMultiSolution(zero, base, base, 0, ref_obj)

    grid_step = budget / 20.0 if grid_step is None else grid_step
    if grid_step <= 0 or rho_step <= 0:
        raise ValidationError("grid steps must be positive")
    u_grid = simplex_grid(budget, 4, grid_step)
    sd_grid = np.sqrt(u_grid / scale)
    levels = np.round(np.arange(-1.0, 1.0 + 0.5 * rho_step, rho_step), 12)
    levels = np.unique(np.clip(np.append(levels, 1.0), -1.0, 1.0))
    rho_grid = _psd_rho_grid(levels, 4, RHO_PAIRS)

    # Sigma_e[a, b] = const_ab + coef_ab . rho for each power row
    g = [c[a][None, :] * sd_grid for a in range(2)]
    const, coef = {}, {}
    for a, b in ((0, 0), (1, 1), (0, 1)):
        const[a, b] = np.sum(g[a] * g[b], axis=1)
        coef[a, b] = np.stack([g[a][:, i] * g[b][:, j] + g[a][:, j] * g[b][:, i] for i, j in RHO_PAIRS], axis=1)
    # M = P + W Sigma_e W^T, linear in the three distinct Sigma_e entries
    basis = {
        (0, 0): np.outer(w[:, 0], w[:, 0]),
        (1, 1): np.outer(w[:, 1], w[:, 1]),
        (0, 1): np.outer(w[:, 0], w[:, 1]) + np.outer(w[:, 1], w[:, 0]),
    }
    best_val = np.full(len(u_grid), -np.inf)
    best_idx = np.zeros(len(u_grid), dtype=int)
    for lo in range(0, len(rho_grid), chunk):
        rg = rho_grid[lo:lo + chunk].T
        se = {key: const[key][:, None] + coef[key] @ rg for key in const}
        m = {}
        for (r_, c_) in ((0, 0), (1, 1), (0, 1)):
            m[r_, c_] = p[r_, c_] + sum(basis[key][r_, c_] * se[key] for key in se)
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[0, 1]
        arg = np.argmax(det, axis=1)
        val = det[np.arange(len(u_grid)), arg]
        better = val > best_val
        best_val[better] = val[better]
        best_idx[better] = arg[better] + lo

    def objective(x):
        u = np.clip(x[:4], 0.0, None)
        sd = np.sqrt(u / scale)
        rho = correlation_from_angles(x[4:])
        s = sd[:, None] * rho * sd[None, :]
        return det_total(c @ s @ c.T, w, p)

    moves = pair_transfer_moves(range(4)) + box_moves(range(4, 10), 0.0, math.pi)
    order = np.argsort(-best_val, kind="stable")[:max(1, starts)]
    grid_best = float(best_val[order[0]])
    best = None
    for row in order:
        rho0 = correlation_from_entries(rho_grid[best_idx[row]])
        x0 = np.concatenate([u_grid[row], angles_from_correlation(rho0)])
        x, val, sweeps = coordinate_refine(objective, x0, moves, refine_iters, rtol)
        if best is None or val > best[1]:
            best = (x, val, sweeps)
    x, val, sweeps = best
    sd = np.sqrt(np.clip(x[:4], 0.0, None) / scale)
    rho = correlation_from_angles(x[4:])
    sigma = BiasCovariance(sd, rho)
    return PvDetMultiSolution(sigma, float(val), grid_best, sweeps, ref_obj)
