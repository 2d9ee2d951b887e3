"""Command-line front end.

Subcommands: simulate, map1d, sweep, attractor, trap, return-map.  All
computation is deterministic: identical config and arguments produce
byte-identical CSV output, and every run writes a JSON manifest carrying the
full parameter set, tolerances, and wall-clock time.

Exit codes: 0 success, 1 usage error, 2 computation failure.  The default
output directory can be set with the BEBLAB_OUTPUT_DIR environment variable.
"""
from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__, backend_info
from ._backend.pack import KernelTolerances, tolerances_dict
from .analysis import (
    SweepConfig,
    empirical_trap_region,
    sweep_gamma_L,
    sweep_mu,
    trap_check,
    write_sweep_csv,
)
from .hybrid import SimulationError, simulate, write_trajectory_csv
from .onedmap import write_profile_csv
from .retmap import MapEvaluationError, iterate_x, return_map
from .system import ConfigurationError, SystemParams, line_g

__all__ = ["main", "load_config", "RunManifest"]

USAGE_EXIT = 1
COMPUTE_EXIT = 2

PARAM_KEYS = ("alpha_L", "beta_L", "gamma_L", "alpha_R", "beta_R", "gamma_R", "mu")
SWEEP_KEYS = ("n_transient", "n_keep", "period_tol", "max_period", "steps")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


def load_config(path: str | None) -> tuple[SystemParams, SweepConfig, dict]:
    """Read the INI-style config; every key optional, defaults are the
    reference configuration."""
    params = SystemParams()
    sweep = SweepConfig()
    extras: dict = {"steps": 600}
    if path is None:
        return params, sweep, extras
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        if cp.has_section("params"):
            kwargs = {}
            for key in PARAM_KEYS:
                if cp.has_option("params", key):
                    kwargs[key] = cp.getfloat("params", key)
            if cp.has_option("params", "nonlinear"):
                kwargs["nonlinear"] = cp.getboolean("params", "nonlinear")
            params = replace(params, **kwargs)
        if cp.has_section("sweep"):
            skw = {}
            for key, conv in (
                ("n_transient", cp.getint),
                ("n_keep", cp.getint),
                ("period_tol", cp.getfloat),
                ("max_period", cp.getint),
                ("x0", cp.getfloat),
                ("workers", cp.getint),
            ):
                if cp.has_option("sweep", key):
                    skw[key] = conv("sweep", key)
            sweep = replace(sweep, **skw)
            if cp.has_option("sweep", "steps"):
                extras["steps"] = cp.getint("sweep", "steps")
        if cp.has_section("tolerances"):
            tol_kwargs = {}
            for key in KernelTolerances.__dataclass_fields__:
                if cp.has_option("tolerances", key):
                    tol_kwargs[key] = cp.getfloat("tolerances", key)
            extras["tolerances"] = tol_kwargs
    except (ValueError, configparser.Error) as exc:
        raise ConfigurationError(f"config parse error in {path}: {exc}") from exc
    return params, sweep, extras


class RunManifest:
    """Everything needed to reproduce a run bit-identically."""

    def __init__(self, command: str, args: dict, params: SystemParams, sweep: SweepConfig):
        self.data = {
            "tool": "beblab",
            "version": __version__,
            "backend": backend_info()["backend"],
            "command": command,
            "arguments": {k: (v if not isinstance(v, Path) else str(v)) for k, v in args.items()},
            "params": {k: getattr(params, k) for k in PARAM_KEYS},
            "nonlinear": params.nonlinear,
            "sweep_config": {
                "n_transient": sweep.n_transient,
                "n_keep": sweep.n_keep,
                "period_tol": sweep.period_tol,
                "max_period": sweep.max_period,
                "x0": sweep.x0,
                "workers": sweep.workers,
            },
            "tolerances": tolerances_dict(KernelTolerances()),
        }
        self._t0 = time.time()

    def write(self, out_path: Path, extra: dict | None = None) -> Path:
        self.data["wall_seconds"] = round(time.time() - self._t0, 3)
        if extra:
            self.data.update(extra)
        mpath = out_path.with_suffix(out_path.suffix + ".manifest.json")
        mpath.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")
        return mpath


def _out_path(args, default_name: str) -> Path:
    if args.out:
        return Path(args.out)
    base = os.environ.get("BEBLAB_OUTPUT_DIR", ".")
    return Path(base) / default_name


def _parse_range(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"range must be 'lo,hi', got {text!r}")
    lo, hi = float(parts[0]), float(parts[1])
    if not lo < hi:
        raise ValueError(f"range must satisfy lo < hi, got {text!r}")
    return lo, hi


def build_parser() -> _Parser:
    parser = _Parser(prog="beblab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"beblab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None, help="INI config file")
        sp.add_argument("--out", default=None, help="output path")
        sp.add_argument("--workers", type=int, default=None, help="parallel workers for sweeps")
        sp.add_argument("--seed-point", type=float, default=None,
                        help="starting first-component on the unstable line")

    sp = sub.add_parser("simulate", help="trajectory CSV from the hybrid flow")
    common(sp)
    sp.add_argument("--duration", type=float, default=500.0)
    sp.add_argument("--sample-dt", type=float, default=0.02)

    sp = sub.add_parser("map1d", help="1D map profile CSV (x, f, iterates)")
    common(sp)
    sp.add_argument("--interval", type=str, default="-0.15,0.05")
    sp.add_argument("--grid", type=int, default=400)
    sp.add_argument("--powers", type=str, default="1,5")

    sp = sub.add_parser("sweep", help="bifurcation sweep CSV + manifest")
    common(sp)
    sp.add_argument("which", choices=["gammaL", "mu"])
    sp.add_argument("--range", type=str, default=None)
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--plot-script", action="store_true",
                    help="also emit a python plotting script next to the CSV")

    sp = sub.add_parser("attractor", help="section-map iterate samples CSV")
    common(sp)
    sp.add_argument("--transient", type=int, default=2000)
    sp.add_argument("--keep", type=int, default=500)

    sp = sub.add_parser("trap", help="trapping-rectangle verification report")
    common(sp)
    sp.add_argument("--boundary", type=int, default=2000)
    sp.add_argument("--inflate", type=float, default=0.2)

    sp = sub.add_parser("return-map", help="single evaluation with full trace JSON")
    common(sp)
    return parser


def cmd_simulate(args, params, sweep) -> int:
    man = RunManifest("simulate", vars(args), params, sweep)
    x0 = args.seed_point if args.seed_point is not None else -0.001
    out = _out_path(args, "trajectory.csv")
    try:
        segs = simulate(params, line_g(params, x0), args.duration, sample_dt=args.sample_dt)
    except SimulationError as exc:
        print(f"simulation failed: {exc}; state={exc.state}", file=sys.stderr)
        return COMPUTE_EXIT
    rows = write_trajectory_csv(out, segs)
    man.write(out, {"rows": rows, "segments": len(segs)})
    print(f"wrote {out} ({rows} rows, {len(segs)} segments)")
    return 0


def cmd_map1d(args, params, sweep) -> int:
    man = RunManifest("map1d", vars(args), params, sweep)
    interval = _parse_range(args.interval)
    if args.grid < 2:
        raise ValueError("grid must be >= 2")
    powers = tuple(int(s) for s in args.powers.split(","))
    out = _out_path(args, "map1d.csv")
    rows = write_profile_csv(out, params, interval, args.grid, powers)
    man.write(out, {"rows": rows})
    print(f"wrote {out} ({rows} rows)")
    return 0


_PLOT_SCRIPT = """\
#!/usr/bin/env python3
'''Scatter plot of a sweep CSV (param on x, samples on y).'''
import csv, sys
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else {csv_name!r}
xs, ys = [], []
with open(path) as fh:
    for row in csv.DictReader(fh):
        if row["x"] != "nan":
            xs.append(float(row["param"]))
            ys.append(float(row["x"]))
plt.plot(xs, ys, ",k", markersize=0.2)
plt.xlabel({xlabel!r})
plt.ylabel("x")
plt.tight_layout()
plt.savefig(path.replace(".csv", ".png"), dpi=200)
print("saved", path.replace(".csv", ".png"))
"""


def cmd_sweep(args, params, sweep) -> int:
    man = RunManifest("sweep", vars(args), params, sweep)
    steps = args.steps if args.steps is not None else getattr(args, "_config_steps", 600)
    if args.workers is not None:
        sweep = replace(sweep, workers=args.workers)
    if args.seed_point is not None:
        sweep = replace(sweep, x0=args.seed_point)
    if args.which == "gammaL":
        rng = _parse_range(args.range) if args.range else (0.05, 0.35)
        records = sweep_gamma_L(params, rng, steps, sweep)
        out = _out_path(args, "sweep_gammaL.csv")
        xlabel = "gamma_L"
    else:
        rng = _parse_range(args.range) if args.range else (-1.0, 1.5)
        records = sweep_mu(params, rng, steps, sweep)
        out = _out_path(args, "sweep_mu.csv")
        xlabel = "mu"
    rows = write_sweep_csv(out, records)
    failures = sum(1 for r in records if r.error is not None)
    man.write(out, {"rows": rows, "points": len(records), "failures": failures})
    if args.plot_script:
        script = Path(str(out).replace(".csv", "_plot.py"))
        script.write_text(_PLOT_SCRIPT.format(csv_name=out.name, xlabel=xlabel))
        print(f"wrote {script}")
    print(f"wrote {out} ({len(records)} parameter points, {failures} failures)")
    if failures == len(records):
        print("all sweep points failed", file=sys.stderr)
        return COMPUTE_EXIT
    return 0


def cmd_attractor(args, params, sweep) -> int:
    man = RunManifest("attractor", vars(args), params, sweep)
    x0 = args.seed_point if args.seed_point is not None else -0.001
    out = _out_path(args, "attractor.csv")
    try:
        xs = iterate_x(params, line_g(params, x0), args.transient, args.keep)
    except MapEvaluationError as exc:
        print(f"attractor sampling failed: {exc}", file=sys.stderr)
        return COMPUTE_EXIT
    with open(out, "w", newline="") as fh:
        fh.write("index,x\n")
        for i, x in enumerate(xs):
            fh.write(f"{i},{x:.17g}\n")
    man.write(out, {"rows": len(xs)})
    print(f"wrote {out} ({len(xs)} samples, range [{xs.min():.6g}, {xs.max():.6g}])")
    return 0


def cmd_trap(args, params, sweep) -> int:
    man = RunManifest("trap", vars(args), params, sweep)
    region = empirical_trap_region(params, inflate=args.inflate)
    report = trap_check(params, region, args.boundary)
    out = _out_path(args, "trap_report.json")
    payload = {
        "region": {
            "x_min": region.x_min,
            "x_max": region.x_max,
            "d_min": region.d_min,
            "d_max": region.d_max,
        },
        "contained": report.contained,
        "margin_x": report.margin_x,
        "margin_d": report.margin_d,
        "n_boundary": report.n_boundary,
        "failures": report.failures,
    }
    Path(out).write_text(json.dumps(payload, indent=2) + "\n")
    man.write(Path(out))
    print(f"wrote {out} (contained={report.contained}, "
          f"margins x={report.margin_x:.3g} d={report.margin_d:.3g})")
    return 0 if report.contained else COMPUTE_EXIT


def cmd_return_map(args, params, sweep) -> int:
    man = RunManifest("return-map", vars(args), params, sweep)
    x0 = args.seed_point if args.seed_point is not None else -0.001
    try:
        X5, trace = return_map(params, line_g(params, x0))
    except MapEvaluationError as exc:
        print(f"map evaluation failed: {exc}", file=sys.stderr)
        return COMPUTE_EXIT
    out = _out_path(args, "return_map.json")
    doc = trace.as_dict()
    doc["image"] = [float(v) for v in X5]
    Path(out).write_text(json.dumps(doc, indent=2) + "\n")
    man.write(Path(out))
    print(f"wrote {out} (identity={trace.identity}, image x={X5[0]:.8g})")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 0
    try:
        params, sweep, extras = load_config(args.config)
    except (FileNotFoundError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    if args.workers is not None:
        sweep = replace(sweep, workers=args.workers)
    args._config_steps = extras.get("steps", 600)
    handlers = {
        "simulate": cmd_simulate,
        "map1d": cmd_map1d,
        "sweep": cmd_sweep,
        "attractor": cmd_attractor,
        "trap": cmd_trap,
        "return-map": cmd_return_map,
    }
    try:
        return handlers[args.command](args, params, sweep)
    except (ValueError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (MapEvaluationError, SimulationError) as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return COMPUTE_EXIT


if __name__ == "__main__":
    sys.exit(main())
