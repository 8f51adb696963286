"""Scenario files: TOML with explicit units in key names.

A scenario describes one tracking model, one sensor suite, one attack
problem and the simulation/solver settings. Unknown keys are rejected,
missing optional keys are filled from defaults and reported in
``Scenario.defaults_applied``.

Example::

    name = "pv-1sensor-trace"

    [model]
    sampling_t_s = 1.0
    accel_noise_var_m2s4 = 0.25

    [[sensors]]
    type = "pv"
    pos_noise_var_m2 = 3.0
    vel_noise_var_m2s2 = 4.0

    [attack]
    objective = "trace"
    power_a2 = 3000.0
"""

from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ValidationError
from .model import Sensor, SensorSuite, TrackingParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OBJECTIVES = ("trace", "det")
MODES = ("single", "continuous", "multitime")
SENSOR_TYPES = ("position", "pv")

_DEFAULTS: dict[str, dict[str, Any]] = {
    "model": {
        "sampling_t_s": 1.0,
        "accel_noise_var_m2s4": 0.25,
        "p0_pos_var_m2": 100.0,
        "p0_vel_var_m2s2": 100.0,
    },
    "attack": {
        "mode": "single",
        "start_k": 50,
        "horizon_n": 0,
    },
    "sim": {
        "runs": 10_000,
        "seed": 20160101,
        "gamma": 9.21,
    },
    "solver": {
        "grid_step_a2": None,
        "rho_step": 0.25,
        "refine_iters": 200,
        "refine_starts": 4,
        "refine_rtol": 1e-10,
        "riccati_tol": 1e-10,
        "riccati_max_iter": 10_000,
    },
    "sweep": {
        "rho_points": 41,
        "kappa_min": 0.1,
        "kappa_max": 3.0,
        "kappa_points": 291,
    },
}
_REQUIRED = {"attack": ("objective", "power_a2")}
_OPTIONAL_NO_DEFAULT = {"attack": ("time_weights", "reference"), "sim": ("horizon_k",)}
_SENSOR_KEYS = {"position": ("pos_noise_var_m2",), "pv": ("pos_noise_var_m2", "vel_noise_var_m2s2")}
_REFERENCE_KEYS = ("variances", "rho_upper")


@dataclass(frozen=True)
class Scenario:
    """Validated scenario with every default resolved."""

    name: str
    model: dict
    sensors: tuple[dict, ...]
    attack: dict
    sim: dict
    solver: dict
    sweep: dict
    defaults_applied: tuple[str, ...] = field(default=(), compare=False)

    @property
    def params(self) -> TrackingParams:
        return TrackingParams(t=self.model["sampling_t_s"], sigma_v2=self.model["accel_noise_var_m2s4"])

    @property
    def p0(self) -> np.ndarray:
        return np.diag([self.model["p0_pos_var_m2"], self.model["p0_vel_var_m2s2"]])

    @property
    def sensor_type(self) -> str:
        return self.sensors[0]["type"]

    def suite(self) -> SensorSuite:
        out = []
        for s in self.sensors:
            if s["type"] == "position":
                out.append(Sensor.position(s["pos_noise_var_m2"]))
            else:
                out.append(Sensor.position_velocity(s["pos_noise_var_m2"], s["vel_noise_var_m2s2"]))
        return SensorSuite(tuple(out))

    @property
    def time_weights(self) -> np.ndarray:
        w = self.attack.get("time_weights")
        n = self.attack["horizon_n"] + 1
        return np.full(n, 1.0 / n) if w is None else np.asarray(w, dtype=float)

    @property
    def sim_horizon(self) -> int:
        h = self.sim.get("horizon_k")
        return self.attack["start_k"] + self.attack["horizon_n"] + 50 if h is None else h

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "model": dict(self.model),
            "sensors": [dict(s) for s in self.sensors],
            "attack": copy.deepcopy(self.attack),
            "sim": dict(self.sim),
            "solver": dict(self.solver),
            "sweep": dict(self.sweep),
        }
        return out

    def sha256(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, seed=None, runs=None, grid_step=None) -> "Scenario":
        d = self.to_dict()
        if seed is not None:
            d["sim"]["seed"] = seed
        if runs is not None:
            d["sim"]["runs"] = runs
        if grid_step is not None:
            d["solver"]["grid_step_a2"] = grid_step
        sc = scenario_from_dict(d)
        return Scenario(sc.name, sc.model, sc.sensors, sc.attack, sc.sim, sc.solver, sc.sweep,
                        self.defaults_applied)


def _fail(path: str, msg: str):
    raise ValidationError(f"{path}: {msg}")


def _number(path, value, *, positive=False, nonneg=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {type(value).__name__}")
    if integer and not isinstance(value, int):
        _fail(path, "expected an integer")
    if not np.isfinite(value):
        _fail(path, "must be finite")
    if positive and value <= 0:
        _fail(path, f"must be > 0 (got {value})")
    if nonneg and value < 0:
        _fail(path, f"must be >= 0 (got {value})")
    return value if integer else float(value)


def _section(raw: dict, name: str, applied: list) -> dict:
    given = raw.get(name, {})
    if not isinstance(given, dict):
        _fail(name, "expected a table")
    allowed = set(_DEFAULTS.get(name, {})) | set(_REQUIRED.get(name, ())) | set(_OPTIONAL_NO_DEFAULT.get(name, ()))
    for key in given:
        if key not in allowed:
            _fail(f"{name}.{key}", "unknown key")
    for key in _REQUIRED.get(name, ()):
        if key not in given:
            _fail(f"{name}.{key}", "required key is missing")
    out = {}
    for key, default in _DEFAULTS.get(name, {}).items():
        if key in given:
            out[key] = given[key]
        else:
            out[key] = default
            applied.append(f"{name}.{key} = {default!r}")
    for key in _REQUIRED.get(name, ()) + _OPTIONAL_NO_DEFAULT.get(name, ()):
        if key in given:
            out[key] = given[key]
    return out


def _sensors(raw: dict) -> tuple[dict, ...]:
    items = raw.get("sensors")
    if not isinstance(items, list) or not items:
        _fail("sensors", "at least one [[sensors]] entry is required")
    out = []
    for i, s in enumerate(items):
        path = f"sensors[{i}]"
        if not isinstance(s, dict):
            _fail(path, "expected a table")
        kind = s.get("type")
        if kind not in SENSOR_TYPES:
            _fail(f"{path}.type", f"must be one of {SENSOR_TYPES} (got {kind!r})")
        keys = _SENSOR_KEYS[kind]
        for key in s:
            if key != "type" and key not in keys:
                _fail(f"{path}.{key}", f"unknown key for a {kind} sensor")
        entry = {"type": kind}
        for key in keys:
            if key not in s:
                _fail(f"{path}.{key}", "required key is missing")
            entry[key] = _number(f"{path}.{key}", s[key], positive=True)
        out.append(entry)
    kinds = {s["type"] for s in out}
    if len(kinds) > 1:
        _fail("sensors", "all sensors must have the same type")
    return tuple(out)


def _float_list(path, value, n=None) -> list[float]:
    if not isinstance(value, list):
        _fail(path, "expected an array")
    out = [_number(f"{path}[{i}]", v) for i, v in enumerate(value)]
    if n is not None and len(out) != n:
        _fail(path, f"expected {n} entries, got {len(out)}")
    return out


def scenario_from_dict(raw: dict) -> Scenario:
    """Validate a parsed scenario mapping and fill defaults."""
    if not isinstance(raw, dict):
        raise ValidationError("scenario must be a table")
    for key in raw:
        if key not in ("name", "sensors") and key not in _DEFAULTS and key not in _REQUIRED:
            _fail(key, "unknown section")
    applied: list[str] = []
    name = raw.get("name", "unnamed")
    if not isinstance(name, str):
        _fail("name", "expected a string")
    model = _section(raw, "model", applied)
    sensors = _sensors(raw)
    attack = _section(raw, "attack", applied)
    sim = _section(raw, "sim", applied)
    solver = _section(raw, "solver", applied)
    sweep = _section(raw, "sweep", applied)

    _number("model.sampling_t_s", model["sampling_t_s"], positive=True)
    model["sampling_t_s"] = float(model["sampling_t_s"])
    model["accel_noise_var_m2s4"] = _number("model.accel_noise_var_m2s4", model["accel_noise_var_m2s4"], nonneg=True)
    model["p0_pos_var_m2"] = _number("model.p0_pos_var_m2", model["p0_pos_var_m2"], nonneg=True)
    model["p0_vel_var_m2s2"] = _number("model.p0_vel_var_m2s2", model["p0_vel_var_m2s2"], nonneg=True)

    if attack["objective"] not in OBJECTIVES:
        _fail("attack.objective", f"must be one of {OBJECTIVES} (got {attack['objective']!r})")
    if attack["mode"] not in MODES:
        _fail("attack.mode", f"must be one of {MODES} (got {attack['mode']!r})")
    attack["power_a2"] = _number("attack.power_a2", attack["power_a2"], positive=True)
    attack["start_k"] = _number("attack.start_k", attack["start_k"], integer=True, positive=True)
    attack["horizon_n"] = _number("attack.horizon_n", attack["horizon_n"], integer=True, nonneg=True)
    if attack["mode"] == "single" and attack["horizon_n"] != 0:
        _fail("attack.horizon_n", "must be 0 in single mode")
    if attack["mode"] == "multitime" and attack["objective"] != "trace":
        _fail("attack.objective", "multitime mode supports the trace objective only")
    if "time_weights" in attack:
        if attack["mode"] != "multitime":
            _fail("attack.time_weights", "only used in multitime mode")
        w = _float_list("attack.time_weights", attack["time_weights"], attack["horizon_n"] + 1)
        if any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-12:
            _fail("attack.time_weights", "must be non-negative and sum to 1")
        attack["time_weights"] = w
    dim_b = sum(2 if s["type"] == "pv" else 1 for s in sensors)
    if "reference" in attack:
        ref = attack["reference"]
        if not isinstance(ref, dict):
            _fail("attack.reference", "expected a table")
        for key in ref:
            if key not in _REFERENCE_KEYS:
                _fail(f"attack.reference.{key}", "unknown key")
        if "variances" not in ref:
            _fail("attack.reference.variances", "required key is missing")
        var = _float_list("attack.reference.variances", ref["variances"], dim_b)
        if any(v < 0 for v in var):
            _fail("attack.reference.variances", "must be non-negative")
        out = {"variances": var}
        if "rho_upper" in ref:
            rho = _float_list("attack.reference.rho_upper", ref["rho_upper"], dim_b * (dim_b - 1) // 2)
            if any(abs(r) > 1 for r in rho):
                _fail("attack.reference.rho_upper", "entries must lie in [-1, 1]")
            out["rho_upper"] = rho
        attack["reference"] = out

    sim["runs"] = _number("sim.runs", sim["runs"], integer=True, positive=True)
    sim["seed"] = _number("sim.seed", sim["seed"], integer=True, nonneg=True)
    sim["gamma"] = _number("sim.gamma", sim["gamma"], positive=True)
    if "horizon_k" in sim:
        sim["horizon_k"] = _number("sim.horizon_k", sim["horizon_k"], integer=True, positive=True)
        if sim["horizon_k"] < attack["start_k"]:
            _fail("sim.horizon_k", f"must be >= attack.start_k ({attack['start_k']})")

    if solver["grid_step_a2"] is not None:
        solver["grid_step_a2"] = _number("solver.grid_step_a2", solver["grid_step_a2"], positive=True)
    solver["rho_step"] = _number("solver.rho_step", solver["rho_step"], positive=True)
    solver["refine_iters"] = _number("solver.refine_iters", solver["refine_iters"], integer=True, nonneg=True)
    solver["refine_starts"] = _number("solver.refine_starts", solver["refine_starts"], integer=True, positive=True)
    solver["refine_rtol"] = _number("solver.refine_rtol", solver["refine_rtol"], positive=True)
    solver["riccati_tol"] = _number("solver.riccati_tol", solver["riccati_tol"], positive=True)
    solver["riccati_max_iter"] = _number("solver.riccati_max_iter", solver["riccati_max_iter"], integer=True, positive=True)

    sweep["rho_points"] = _number("sweep.rho_points", sweep["rho_points"], integer=True, positive=True)
    sweep["kappa_points"] = _number("sweep.kappa_points", sweep["kappa_points"], integer=True, positive=True)
    sweep["kappa_min"] = _number("sweep.kappa_min", sweep["kappa_min"], positive=True)
    sweep["kappa_max"] = _number("sweep.kappa_max", sweep["kappa_max"], positive=True)
    if sweep["kappa_max"] < sweep["kappa_min"]:
        _fail("sweep.kappa_max", "must be >= sweep.kappa_min")

    return Scenario(name, model, sensors, attack, sim, solver, sweep, tuple(applied))


def shipped_scenarios() -> list[str]:
    root = resources.files("kfattack") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def load_scenario(source: str | Path) -> Scenario:
    """Load a scenario from a file path or the name of a shipped scenario."""
    path = Path(source)
    if path.is_file():
        text = path.read_text(encoding="utf-8")
    else:
        name = str(source)
        if name not in shipped_scenarios():
            raise ValidationError(f"no scenario file or shipped scenario named {name!r}")
        text = (resources.files("kfattack") / "scenarios" / f"{name}.toml").read_text(encoding="utf-8")
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"{source}: parse error: {exc}") from exc
    return scenario_from_dict(raw)
