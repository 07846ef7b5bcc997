"""
Command line interface.

    lowrank-vlasov run <config> [--out DIR] [--set key=value ...]
    lowrank-vlasov validate <config>
    lowrank-vlasov mesh-info <meshfile>
    lowrank-vlasov convergence <config> --levels L

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..exceptions import (
    ConfigError,
    GaugeError,
    MeshValidationError,
    NotPositiveDefiniteError,
    NumericalBlowupError,
    RankDeficientError,
)
from ..mesh import describe, load_polygon_mesh
from .config import PRESETS, Scenario, load_config, resolve
from .output import write_outputs
from .run import DiagnosticsRecord, L2Error, diagnostics, fit_decay_rate, l2_error, run_scenario

__all__ = [
    "DiagnosticsRecord",
    "L2Error",
    "PRESETS",
    "Scenario",
    "diagnostics",
    "fit_decay_rate",
    "l2_error",
    "load_config",
    "main",
    "resolve",
    "run_scenario",
    "write_outputs",
]

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _overrides(pairs):
    out = {}
    for p in pairs or ():
        if "=" not in p:
            raise ConfigError(f"--set expects key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _scenario(args, **extra):
    raw = load_config(args.config)
    raw.update(_overrides(getattr(args, "set", None)))
    raw.update(extra)
    return resolve(raw)


def _progress(every):
    def report(i, n, state):
        if i % every == 0 or i == n:
            print(f"  step {i}/{n}  t = {state.t:.4f}  rank = {state.rank}", file=sys.stderr)
    return report


def cmd_run(args):
    sc = _scenario(args)
    out = args.out or sc.out_dir
    res = run_scenario(sc, progress=_progress(max(1, int(round(sc.t_end / sc.dt)) // 20)))
    write_outputs(res.records, res.snapshots, out, sc, res.ops)
    last = res.records[-1]
    print(f"{sc.name}: t = {last.t:.6g}, rank = {last.rank}, records = {len(res.records)}, output in {out}")
    return 0


def cmd_validate(args):
    sc = _scenario(args)
    print("\n".join(sc.resolved_lines()))
    return 0


def cmd_mesh_info(args):
    try:
        mesh = load_polygon_mesh(Path(args.meshfile).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {args.meshfile}: {exc}") from exc
    print(describe(mesh))
    return 0


def cmd_convergence(args):
    rows = []
    for level in range(args.levels + 1):
        sc = _scenario(args, level=str(level))
        res = run_scenario(sc)
        errs = [(r.t, r.l2_error) for r in res.records if r.l2_error is not None]
        if not errs:
            raise ConfigError("convergence needs a scenario with an exact solution (inflow.type)")
        t_star, e_max = max(errs, key=lambda p: p[1])
        rows.append((level, sc.dt, sc.eps, e_max, t_star, max(r.rank for r in res.records)))
        if args.out:
            write_outputs(res.records, res.snapshots, Path(args.out) / f"level{level}", sc, res.ops)
    print(f"{'level':>5} {'dt':>10} {'eps':>10} {'max_l2':>12} {'t_at_max':>9} {'max_rank':>8}")
    for level, dt, eps, e, t, r in rows:
        print(f"{level:>5d} {dt:>10.3e} {eps:>10.3e} {e:>12.5e} {t:>9.4f} {r:>8d}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="lowrank-vlasov", description="Low-rank finite element Vlasov solver")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and write results")
    r.add_argument("config", help="config file or builtin preset name (" + ", ".join(PRESETS) + ")")
    r.add_argument("--out", help="output directory (overrides out_dir)")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="check a config and print the resolved parameters")
    v.add_argument("config")
    v.add_argument("--set", action="append", metavar="KEY=VALUE")
    v.set_defaults(func=cmd_validate)

    m = sub.add_parser("mesh-info", help="validate a mesh file and print a summary")
    m.add_argument("meshfile")
    m.set_defaults(func=cmd_mesh_info)

    c = sub.add_parser("convergence", help="run levels 0..L and print the maximal L2 errors")
    c.add_argument("config")
    c.add_argument("--levels", type=int, default=1)
    c.add_argument("--out", help="write per-level results below this directory")
    c.add_argument("--set", action="append", metavar="KEY=VALUE")
    c.set_defaults(func=cmd_convergence)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MeshValidationError, GaugeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalBlowupError, RankDeficientError, NotPositiveDefiniteError) as exc:
        t = getattr(exc, "last_good_t", None)
        where = f" (last good time {t:.6g})" if t is not None else ""
        print(f"numerical failure: {exc}{where}", file=sys.stderr)
        return EXIT_NUMERICAL
