"""Built-in oracle suite: closed forms against brute force and simulation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attack import AttackPlan, BiasCovariance, error_recursion_check
from .fusion import fuse_identical_h
from .kalman import information_contribution, innovation_gain, steady_state
from .model import Sensor, SensorSuite, TrackingParams, build_dwna_model, stack_suite
from .optimizer import (
    det_pv_single_waterfill,
    det_total,
    pv_coefficients,
    pv_trace_gain,
    trace_position_correlated,
    trace_pv_multi,
    trace_pv_multi_eigen,
    trace_pv_single,
    waterfill,
)
from .sim import ellipse_geometry, ellipse_volume


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def __post_init__(self):
        object.__setattr__(self, "passed", bool(self.passed))


def _steady(model, sensor_or_suite, p0):
    h, r = (sensor_or_suite.h, sensor_or_suite.r) if isinstance(sensor_or_suite, Sensor) else stack_suite(sensor_or_suite)
    return steady_state(model, h, r, p0).require_steady()


def check_riccati_fixed_point(model, sensor, p0) -> Check:
    sched = _steady(model, sensor, p0)
    p_pred = model.f @ sched.p @ model.f.T + model.q
    resid = float(np.max(np.abs(sched.gain - innovation_gain(p_pred, sensor.h, sensor.r))))
    return Check("riccati_fixed_point", resid < 1e-9, f"gain residual {resid:.3e}")


def check_trace_pv_single(model, sensor, p0, budget, t, points=20001) -> Check:
    w = _steady(model, sensor, p0).gain
    sp, sv, rho = trace_pv_single(pv_coefficients(w, t), budget, t)
    best = pv_trace_gain(w, sp, sv, rho)
    a = math.sqrt(budget)
    brute = max(
        pv_trace_gain(w, a * math.sin(th), a / t * math.cos(th), r)
        for th in np.linspace(0.0, math.pi / 2, points) for r in (-1.0, 1.0)
    )
    ok = best >= brute * (1 - 1e-9)
    return Check("trace_pv_single_vs_grid", ok, f"closed form {best:.6f}, grid {brute:.6f}")


def check_det_waterfill(model, sensor, p0, budget, t, points=401) -> Check:
    sched = _steady(model, sensor, p0)
    w, p = sched.gain, sched.p
    sol = det_pv_single_waterfill(w, p, budget, t)
    brute = -math.inf
    for u in np.linspace(0.0, budget, points):
        sp2, sv2 = u, (budget - u) / (t * t)
        for rho in np.linspace(-1.0, 1.0, points):
            c = rho * math.sqrt(sp2 * sv2)
            brute = max(brute, det_total(np.array([[sp2, c], [c, sv2]]), w, p))
    ok = sol.objective >= brute * (1 - 1e-9)
    return Check("det_waterfill_vs_grid", ok, f"water-filling {sol.objective:.6f}, grid {brute:.6f}")


def check_position_closed_form(weights, budget, step_frac=1e-4) -> Check:
    c = np.asarray(weights, dtype=float)
    sol = trace_position_correlated(c, budget)
    s1 = np.arange(0.0, budget + 0.5 * budget * step_frac, budget * step_frac)
    vals = (c[0] * np.sqrt(s1) + c[1] * np.sqrt(np.clip(budget - s1, 0.0, None))) ** 2
    i = int(np.argmax(vals))
    ok = abs(s1[i] - sol.variances[0]) <= budget * step_frac and sol.objective >= vals[i] * (1 - 1e-8)
    return Check("position_closed_form_vs_grid", ok,
                 f"closed form sigma1^2={sol.variances[0]:.4f} obj {sol.objective:.6f}; grid {s1[i]:.4f} obj {vals[i]:.6f}")


def check_trace_pv_multi(model, suite, p0, budget, t) -> Check:
    fused = fuse_identical_h(suite)
    w = steady_state(model, fused.h_e, fused.r_e, p0).require_steady().gain
    grid = trace_pv_multi(fused, w, budget, t)
    exact = trace_pv_multi_eigen(fused, w, budget, t)
    rel = abs(grid.objective - exact.objective) / exact.objective
    return Check("trace_pv_multi_vs_eigen", rel < 1e-8, f"grid+refine {grid.objective:.8f}, eigen {exact.objective:.8f}")


def check_fusion_information(model, suite, seed=7) -> Check:
    rng = np.random.default_rng(seed)
    fused = fuse_identical_h(suite)
    zs = [rng.normal(size=s.dim_z) for s in suite]
    stacked = sum(information_contribution(s.h, s.r, z) for s, z in zip(suite, zs))
    eq = information_contribution(fused.h_e, fused.r_e, fused.measurement(zs))
    err = float(np.max(np.abs(stacked - eq)))
    return Check("fusion_information_equivalence", err < 1e-10, f"max gap {err:.3e}")


def check_recursion(model, suite, p0, plans=100, steps=5, seed=11) -> Check:
    h, r = stack_suite(suite)
    sched = steady_state(model, h, r, p0).require_steady()
    rng = np.random.default_rng(seed)
    dz = h.shape[0]
    worst = 0.0
    for _ in range(plans):
        start = int(rng.integers(1, 30))
        covs = []
        for _ in range(steps):
            g = rng.normal(size=(dz, dz))
            covs.append(BiasCovariance.from_matrix(g @ g.T))
        plan = AttackPlan(start, tuple(covs), float(sum(np.trace(c.matrix) for c in covs)))
        draws = [rng.multivariate_normal(np.zeros(dz), c.matrix) for c in covs]
        worst = max(worst, error_recursion_check(plan, sched, model, h, r, draws, rng))
    return Check("error_recursion_exact", worst < 1e-8, f"max residual {worst:.3e} over {plans} plans")


def check_waterfill_kkt(trials=200, seed=3) -> Check:
    rng = np.random.default_rng(seed)
    worst = 0.0
    ok = True
    for _ in range(trials):
        e = rng.exponential(size=int(rng.integers(1, 5)))
        budget = float(rng.uniform(0.1, 100.0))
        x, mu = waterfill(e, budget)
        worst = max(worst, abs(x.sum() - budget) / budget)
        active = x > 0
        ok &= bool(np.allclose(x[active] + 1 / e[active], mu, rtol=1e-9, atol=1e-9 * budget))
        ok &= bool(np.all(1 / e[~active] >= mu - 1e-9 * budget))
    ok &= worst < 1e-9
    return Check("waterfill_kkt", ok, f"max budget gap {worst:.3e}")


def check_ellipse_area() -> Check:
    p = np.array([[3.0, 1.2], [1.2, 2.0]])
    axes, _ = ellipse_geometry(p, 9.21)
    area = math.pi * axes[0] * axes[1]
    vol = ellipse_volume(p, 9.21)
    rel = abs(area - vol) / vol
    return Check("ellipse_area_consistency", rel < 1e-10, f"relative gap {rel:.3e}")


def run_checks(params: TrackingParams | None = None, p0=None, budget: float = 3000.0,
               pv_noise=((3.0, 4.0), (4.0, 5.0)), position_noise=(3.0, 4.0)) -> list[Check]:
    """All oracles on a DWNA model; defaults are the shipped example parameters."""
    params = TrackingParams() if params is None else params
    p0 = np.diag([100.0, 100.0]) if p0 is None else np.asarray(p0, dtype=float)
    model = build_dwna_model(params)
    t = params.t
    pv = [Sensor.position_velocity(a, b) for a, b in pv_noise]
    pos = SensorSuite(tuple(Sensor.position(v) for v in position_noise))
    pv_suite = SensorSuite(tuple(pv))
    inv = 1.0 / np.asarray(position_noise, dtype=float)
    return [
        check_riccati_fixed_point(model, pv[0], p0),
        check_trace_pv_single(model, pv[0], p0, budget, t),
        check_det_waterfill(model, pv[0], p0, budget, t),
        check_position_closed_form(inv / inv.sum(), budget),
        check_trace_pv_multi(model, pv_suite, p0, budget, t),
        check_fusion_information(model, pv_suite),
        check_recursion(model, pos, p0),
        check_waterfill_kkt(),
        check_ellipse_area(),
    ]
