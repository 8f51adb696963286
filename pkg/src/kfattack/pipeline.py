"""Scenario orchestration: solve, simulate, sweep, and re-evaluate stored results.

Everything returned here is plain Python data (dicts, lists, floats) ready
for deterministic serialization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import __version__
from .attack import AttackPlan, BiasCovariance, extra_mse, pv_power_weights, trace_power_weights
from .errors import DimensionError
from .fusion import EquivalentSensor, fuse_identical_h
from .kalman import GainSchedule, steady_state
from .model import SensorSuite, StateSpaceModel, build_dwna_model, stack_suite
from .optimizer import (
    det_position,
    det_pv_multi,
    det_pv_single_waterfill,
    equal_split_correlated,
    multitime_objective,
    pv_coefficients,
    trace_multitime,
    trace_position_correlated,
    trace_position_independent,
    trace_pv_multi,
    trace_pv_single,
)
from .optimizer.pv import trace_pv_pattern
from .scenario import Scenario
from .sim import SimConfig, SimReport, covariance_standard_errors, kappa_sweep, run_monte_carlo

EMSE_TAIL = 20
CSV_COLUMNS = ("time_k", "q_norm", "q_theory", "trace_total", "det_total", "volume")


@dataclass(frozen=True)
class Problem:
    """Numerical objects derived from a scenario; gains are steady-state."""

    scenario: Scenario
    model: StateSpaceModel
    suite: SensorSuite
    h: np.ndarray
    r: np.ndarray
    schedule: GainSchedule
    fused: EquivalentSensor
    fused_schedule: GainSchedule
    power_weights: np.ndarray

    @property
    def t(self) -> float:
        return self.scenario.model["sampling_t_s"]

    @property
    def budget(self) -> float:
        return self.scenario.attack["power_a2"]

    @property
    def gain(self) -> np.ndarray:
        return self.schedule.gain

    @property
    def p(self) -> np.ndarray:
        return self.schedule.p


def build_problem(scenario: Scenario) -> Problem:
    """Model, suite, and converged gains; raises ``ConvergenceError`` otherwise."""
    model = build_dwna_model(scenario.params)
    suite = scenario.suite()
    h, r = stack_suite(suite)
    tol = scenario.solver["riccati_tol"]
    max_iter = scenario.solver["riccati_max_iter"]
    schedule = steady_state(model, h, r, scenario.p0, tol, max_iter).require_steady()
    fused = fuse_identical_h(suite)
    fused_schedule = steady_state(model, fused.h_e, fused.r_e, scenario.p0, tol, max_iter).require_steady()
    if scenario.sensor_type == "pv":
        pw = pv_power_weights(scenario.model["sampling_t_s"], len(suite))
    else:
        pw = trace_power_weights(len(suite))
    return Problem(scenario, model, suite, h, r, schedule, fused, fused_schedule, pw)


def total_value(kind: str, p, a) -> float:
    total = np.asarray(p) + np.asarray(a)
    return float(np.trace(total)) if kind == "trace" else float(np.linalg.det(total))


def sigma_value(problem: Problem, sigma) -> float:
    """Objective of a single injection with stacked bias covariance ``sigma`` (PSD not required)."""
    s = np.asarray(getattr(sigma, "matrix", sigma), dtype=float)
    w = problem.gain
    return total_value(problem.scenario.attack["objective"], problem.p, w @ s @ w.T)


def plan_value(problem: Problem, plan: AttackPlan) -> float:
    """Objective of a whole plan under the scenario's mode."""
    sc = problem.scenario
    mode = sc.attack["mode"]
    if mode == "single":
        return sigma_value(problem, plan.covariances[0])
    if mode == "continuous":
        a = extra_mse(plan, problem.schedule, problem.model, problem.h, at=plan.end)
        return total_value(sc.attack["objective"], problem.p, a)
    return float(np.trace(problem.p)) + multitime_objective(plan, problem.schedule, problem.model, problem.h)


def _matrix_from_reference(ref: dict) -> np.ndarray:
    sd = np.sqrt(np.asarray(ref["variances"], dtype=float))
    n = sd.size
    rho = np.ones((n, n))
    if "rho_upper" in ref:
        rho = np.eye(n)
        rho[np.triu_indices(n, 1)] = ref["rho_upper"]
        rho = rho + np.triu(rho, 1).T
    return sd[:, None] * rho * sd[None, :]


def _strategy(problem: Problem, sigma_matrix) -> dict:
    s = np.asarray(sigma_matrix, dtype=float)
    psd = bool(np.linalg.eigvalsh(0.5 * (s + s.T))[0] >= -1e-9 * max(1.0, float(np.max(np.abs(s)))))
    return {"variances": np.diag(s).tolist(), "objective": sigma_value(problem, s), "psd": psd}


def _pv_matrix(variances, rho) -> np.ndarray:
    sd = np.sqrt(np.asarray(variances, dtype=float))
    return sd[:, None] * np.asarray(rho, dtype=float) * sd[None, :]


def optimal_sigma(problem: Problem) -> tuple[np.ndarray, float, dict, dict]:
    """Single-injection optimum: stacked covariance, solver objective, baselines, extras."""
    sc = problem.scenario
    kind = sc.attack["objective"]
    a2 = problem.budget
    w_e = problem.fused_schedule.gain
    p_e = problem.fused_schedule.p
    n = len(problem.suite)
    baselines: dict[str, dict] = {}
    extras: dict = {}
    if sc.sensor_type == "position":
        c = np.array([float(ci[0, 0]) for ci in problem.fused.weights])
        sol = trace_position_correlated(c, a2)
        solver_obj = sol.objective
        if kind == "det":
            solver_obj = det_position(c, a2, p_e, w_e[:, 0]).objective
        extras["fusion_weights"] = c.tolist()
        extras["fused_bias_variance"] = sol.sigma_e
        eq = equal_split_correlated(c, a2)
        ind = trace_position_independent(c, a2)
        baselines["equal_split_correlated"] = _strategy(problem, eq.matrix)
        baselines["best_independent"] = _strategy(problem, ind.matrix)
        baselines["equal_split_correlated"]["fused_bias_variance"] = eq.sigma_e
        baselines["best_independent"]["fused_bias_variance"] = ind.sigma_e
        return sol.matrix, solver_obj, baselines, extras

    t = problem.t
    if n == 1 and kind == "trace":
        coeff = pv_coefficients(w_e, t)
        sp, sv, rho = trace_pv_single(coeff, a2, t)
        extras.update(sigma_p=sp, sigma_v=sv, rho=rho, theta=coeff.theta, phi=coeff.phi)
        s = _pv_matrix([sp * sp, sv * sv], [[1.0, rho], [rho, 1.0]])
        return s, sigma_value(problem, s), baselines, extras
    if n == 1:
        wf = det_pv_single_waterfill(w_e, p_e, a2, t)
        s = wf.sigma_k
        extras.update(eigvals=wf.eigvals.tolist(), powers=wf.powers.tolist(),
                      rho=float(s[0, 1] / math.sqrt(s[0, 0] * s[1, 1])) if s[0, 0] * s[1, 1] > 0 else 0.0)
        if "reference" in sc.attack:
            baselines["reference"] = _strategy(problem, _matrix_from_reference(sc.attack["reference"]))
        baselines["equal_power_independent"] = _strategy(problem, np.diag([a2 / 2, a2 / (2 * t * t)]))
        return s, wf.objective, baselines, extras
    solver = sc.solver
    if kind == "trace":
        sol = trace_pv_multi(problem.fused, w_e, a2, t, solver["grid_step_a2"], p_e,
                             solver["refine_iters"], solver["refine_rtol"])
        extras.update(grid_objective=sol.grid_objective, sweeps=sol.sweeps)
        xi = trace_pv_pattern(pv_coefficients(w_e, t).rho_sign, n)
        equal = np.tile([a2 / (2 * n), a2 / (2 * n * t * t)], n)
        baselines["equal_split"] = _strategy(problem, _pv_matrix(equal, np.outer(xi, xi)))
        if "reference" in sc.attack:
            baselines["reference"] = _strategy(problem, _matrix_from_reference(sc.attack["reference"]))
        return sol.sigma.matrix, sol.objective, baselines, extras
    ref = sc.attack.get("reference")
    ref_arg = None
    if ref is not None:
        ref_s = _matrix_from_reference(ref)
        sd = np.sqrt(np.diag(ref_s))
        ref_arg = (np.diag(ref_s), ref_s / np.outer(sd, sd))
    sol = det_pv_multi(problem.fused, w_e, p_e, a2, t, solver["grid_step_a2"], solver["refine_iters"],
                       solver["rho_step"], solver["refine_starts"], solver["refine_rtol"], ref_arg)
    extras.update(grid_objective=sol.grid_objective, sweeps=sol.sweeps, rho_entries=sol.rho_entries)
    if ref is not None:
        ref_var, ref_rho = ref_arg
        dim = ref_var.size
        baselines["reference"] = _strategy(problem, ref_s)
        baselines["reference_rho_zero"] = _strategy(problem, _pv_matrix(ref_var, np.eye(dim)))
        baselines["reference_rho_one"] = _strategy(problem, _pv_matrix(ref_var, np.ones((dim, dim))))
        equal = np.tile([a2 / (2 * n), a2 / (2 * n * t * t)], n)
        baselines["equal_power_reference_rho"] = _strategy(problem, _pv_matrix(equal, ref_rho))
    return sol.sigma.matrix, sol.objective, baselines, extras


def build_plan(problem: Problem, sigma_matrix) -> AttackPlan:
    sc = problem.scenario
    start = sc.attack["start_k"]
    a2 = problem.budget
    mode = sc.attack["mode"]
    if mode == "multitime":
        return trace_multitime(problem.schedule, sc.time_weights, a2, problem.model, problem.h,
                               "vector", problem.power_weights, start=start)
    cov = BiasCovariance.from_matrix(sigma_matrix)
    if mode == "single":
        return AttackPlan.single(start, cov, a2, problem.power_weights)
    steps = sc.attack["horizon_n"] + 1
    return AttackPlan(start, (cov,) * steps, a2 * steps, None, problem.power_weights)


def plan_to_dict(plan: AttackPlan) -> dict:
    return {
        "start_k": plan.start,
        "budget_a2": plan.budget,
        "time_weights": list(plan.weights),
        "power_weights": plan.power_weights.tolist(),
        "std_devs": [c.sigmas.tolist() for c in plan.covariances],
        "correlations": [c.rho.tolist() for c in plan.covariances],
    }


def plan_from_dict(d: dict) -> AttackPlan:
    covs = tuple(BiasCovariance(np.array(s, dtype=float), np.array(r, dtype=float))
                 for s, r in zip(d["std_devs"], d["correlations"]))
    return AttackPlan(d["start_k"], covs, d["budget_a2"], tuple(d["time_weights"]), np.array(d["power_weights"]))


def emse_series(problem: Problem, plan: AttackPlan, tail: int = EMSE_TAIL) -> dict:
    """Trace/determinant of ``P + A_{K+n}`` for ``n = 0 .. N + tail``."""
    ns = list(range(plan.horizon + tail + 1))
    tr, dt = [], []
    for n in ns:
        a = extra_mse(plan, problem.schedule, problem.model, problem.h, at=plan.start + n)
        tr.append(total_value("trace", problem.p, a))
        dt.append(total_value("det", problem.p, a))
    return {"n": ns, "trace_total": tr, "det_total": dt}


def provenance(scenario: Scenario) -> dict:
    return {
        "config_sha256": scenario.sha256(),
        "seed": scenario.sim["seed"],
        "tool": "kfattack",
        "version": __version__,
    }


def solve_scenario(scenario: Scenario) -> dict:
    """Optimal attack for the scenario as a result bundle."""
    problem = build_problem(scenario)
    sigma, solver_obj, baselines, extras = optimal_sigma(problem)
    plan = build_plan(problem, sigma)
    objective = plan_value(problem, plan)
    chosen = plan.covariances[int(np.argmax([np.trace(c.matrix) for c in plan.covariances]))]
    solution = {
        "objective_kind": scenario.attack["objective"],
        "mode": scenario.attack["mode"],
        "objective": objective,
        "solver_objective": solver_obj,
        "bias_covariance": chosen.matrix.tolist(),
        "variances": chosen.variances.tolist(),
        "std_devs": chosen.sigmas.tolist(),
        "correlation": chosen.rho.tolist(),
        "plan": plan_to_dict(plan),
        "gain": problem.gain.tolist(),
        "p_nominal": problem.p.tolist(),
        "fused_gain": problem.fused_schedule.gain.tolist(),
        "fused_noise": problem.fused.r_e.tolist(),
        "baselines": baselines,
        "details": extras,
    }
    return {
        "scenario": scenario.to_dict(),
        "solution": solution,
        "emse": emse_series(problem, plan),
        "provenance": provenance(scenario),
    }


def reevaluate(bundle: dict) -> float:
    """Recompute a stored solution's objective from its own scenario and plan."""
    from .scenario import scenario_from_dict

    problem = build_problem(scenario_from_dict(bundle["scenario"]))
    plan = plan_from_dict(bundle["solution"]["plan"])
    return plan_value(problem, plan)


def simulate_scenario(scenario: Scenario, attack: bool = True) -> tuple[list[tuple], dict, SimReport]:
    """Monte Carlo run of the scenario's optimal plan (or no attack)."""
    problem = build_problem(scenario)
    plan = None
    if attack:
        sigma, _, _, _ = optimal_sigma(problem)
        plan = build_plan(problem, sigma)
    config = SimConfig(problem.model, problem.suite, runs=scenario.sim["runs"], horizon=scenario.sim_horizon,
                       seed=scenario.sim["seed"], attack=plan, p0=scenario.p0, gamma=scenario.sim["gamma"])
    rep = run_monte_carlo(config)
    rows = [
        (int(k), float(qn), float(qt), float(tr), float(dt), float(v))
        for k, qn, qt, tr, dt, v in zip(rep.times, rep.q_norm, rep.predicted, rep.trace_total,
                                        rep.det_total, rep.volumes)
    ]
    summary = {
        "attack": plan_to_dict(plan) if plan is not None else None,
        "runs": rep.runs,
        "horizon_k": int(rep.q.size),
        "within_band_fraction": float(np.mean(rep.within_band())),
        "band": rep.band.tolist(),
    }
    if plan is not None:
        k = min(plan.end, rep.q.size)
        emp = rep.emse_empirical[k - 1]
        theory = rep.emse_theory[k - 1]
        se = covariance_standard_errors(theory, rep.runs)
        z = np.divide(np.abs(emp - theory), se, out=np.zeros_like(se), where=se > 0)
        summary["emse_check"] = {
            "time_k": int(k),
            "theory": theory.tolist(),
            "empirical": emp.tolist(),
            "max_standard_errors": float(np.max(z)),
        }
    return rows, {"simulation": summary, "scenario": scenario.to_dict(), "provenance": provenance(scenario)}, rep


def sweep_scenario(scenario: Scenario) -> tuple[list[tuple], dict]:
    """Ellipse volume over correlation and kappa for a single position/velocity sensor."""
    if scenario.sensor_type != "pv" or len(scenario.sensors) != 1:
        raise DimensionError("sweep needs exactly one position/velocity sensor")
    problem = build_problem(scenario)
    sw = scenario.sweep
    rho = np.linspace(-1.0, 1.0, sw["rho_points"])
    kappa = np.linspace(sw["kappa_min"], sw["kappa_max"], sw["kappa_points"])
    surf = kappa_sweep(problem.gain, problem.p, problem.budget, problem.t, rho, kappa, scenario.sim["gamma"])
    rows = [(float(r), float(k), float(surf.volume[i, j]))
            for i, r in enumerate(rho) for j, k in enumerate(kappa)]
    r_star, k_star = surf.argmax
    summary = {
        "argmax": {"rho": r_star, "kappa": k_star, "volume": float(np.max(surf.volume))},
        "rho_points": int(rho.size),
        "kappa_points": int(kappa.size),
    }
    return rows, {"sweep": summary, "scenario": scenario.to_dict(), "provenance": provenance(scenario)}

