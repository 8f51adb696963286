"""Command-line entry point: ``kfattack solve|simulate|sweep|verify``.

Exit codes: 0 success, 1 invalid input, 2 numerical failure, 3 verify failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .model import TrackingParams
from .pipeline import CSV_COLUMNS, simulate_scenario, solve_scenario, sweep_scenario
from .scenario import load_scenario, shipped_scenarios
from .verify import run_checks

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_VERIFY = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _pos_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _pos_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kfattack", description="Optimal random-bias attacks on Kalman filters.")
    parser.add_argument("--version", action="version", version=f"kfattack {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (
        ("solve", "compute the optimal attack for a scenario"),
        ("simulate", "Monte Carlo run of the optimal attack"),
        ("sweep", "ellipse volume over correlation and kappa"),
        ("verify", "run the built-in oracle suite"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--scenario", required=name != "verify",
                       help=f"scenario file or shipped name ({', '.join(shipped_scenarios())})")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--seed", type=_nonneg_int, default=None, help="override sim.seed")
        p.add_argument("--runs", type=_pos_int, default=None, help="override sim.runs")
        p.add_argument("--grid-step", type=_pos_float, default=None, help="override solver.grid_step_a2")
        if name == "simulate":
            p.add_argument("--no-attack", action="store_true", help="simulate the unattacked filter")
    return parser


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def _dump_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _load(args):
    sc = load_scenario(args.scenario)
    sc = sc.with_overrides(seed=args.seed, runs=args.runs, grid_step=args.grid_step)
    for line in sc.defaults_applied:
        print(f"default: {line}", file=sys.stderr)
    return sc


def _out_dir(args) -> Path:
    out = Path(".") if args.out is None else args.out
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt(x) -> str:
    return np.array2string(np.asarray(x), precision=6, suppress_small=True)


def cmd_solve(args) -> int:
    sc = _load(args)
    bundle = solve_scenario(sc)
    out = _out_dir(args)
    _dump_json(out / "solution.json", bundle)
    sol = bundle["solution"]
    print(f"scenario   {sc.name}  ({sol['objective_kind']}, {sol['mode']})")
    print(f"objective  {sol['objective']:.6f}")
    print(f"std devs   {_fmt(sol['std_devs'])}")
    print(f"variances  {_fmt(sol['variances'])}")
    print(f"correlation\n{_fmt(sol['correlation'])}")
    for name, b in sorted(sol["baselines"].items()):
        print(f"baseline   {name}: {b['objective']:.6f}{'' if b['psd'] else '  (not PSD)'}")
    print(f"wrote {out / 'solution.json'}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = _load(args)
    rows, summary, _ = simulate_scenario(sc, attack=not args.no_attack)
    out = _out_dir(args)
    _dump_csv(out / "simulation.csv", CSV_COLUMNS, rows)
    _dump_json(out / "simulation.json", summary)
    s = summary["simulation"]
    print(f"scenario   {sc.name}  runs={s['runs']} horizon={s['horizon_k']} attack={'no' if args.no_attack else 'yes'}")
    print(f"steps within 3-sigma band of theory: {100 * s['within_band_fraction']:.1f}%")
    if "emse_check" in s:
        print(f"EMSE at k={s['emse_check']['time_k']}: max gap {s['emse_check']['max_standard_errors']:.2f} standard errors")
    print(f"wrote {out / 'simulation.csv'}, {out / 'simulation.json'}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc = _load(args)
    rows, summary = sweep_scenario(sc)
    out = _out_dir(args)
    _dump_csv(out / "sweep.csv", ("rho", "kappa", "volume"), rows)
    _dump_json(out / "sweep.json", summary)
    best = summary["sweep"]["argmax"]
    print(f"max volume {best['volume']:.6f} at rho={best['rho']:.4f}, kappa={best['kappa']:.4f}")
    print(f"wrote {out / 'sweep.csv'}, {out / 'sweep.json'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    kwargs = {}
    if args.scenario is not None:
        sc = _load(args)
        kwargs = {"params": TrackingParams(sc.model["sampling_t_s"], sc.model["accel_noise_var_m2s4"]),
                  "p0": sc.p0, "budget": sc.attack["power_a2"]}
        if sc.sensor_type == "pv":
            kwargs["pv_noise"] = tuple((s["pos_noise_var_m2"], s["vel_noise_var_m2s2"]) for s in sc.sensors)
        elif len(sc.sensors) >= 2:
            kwargs["position_noise"] = tuple(s["pos_noise_var_m2"] for s in sc.sensors[:2])
    checks = run_checks(**kwargs)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    if args.out is not None:
        out = _out_dir(args)
        _dump_json(out / "verify.json", {
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in checks],
            "version": __version__,
        })
    return EXIT_OK if all(c.passed for c in checks) else EXIT_VERIFY


COMMANDS = {"solve": cmd_solve, "simulate": cmd_simulate, "sweep": cmd_sweep, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        # LinAlgError subclasses ValueError, so it is caught first
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
