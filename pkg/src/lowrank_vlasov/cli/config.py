"""
Flat ``key = value`` scenario files and the builtin presets.

A file selects a preset with ``scenario = <name>``; every other key
overrides the preset value. ``#`` starts a comment.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

from ..exceptions import ConfigError

PRESETS = {
    "landau_1d1v": {
        "x_mesh": "builtin:interval:64",
        "x_mesh.box": "0, 4pi",
        "v_mesh.box": "-6, 6",
        "v_mesh.n": "256",
        "field.mode": "self_consistent",
        "rho_b": "1",
        "init.type": "landau",
        "init.alpha": "0.01",
        "init.k": "0.5",
        "inflow.type": "none",
        "dt": "0.005",
        "t_end": "25",
        "rank": "5",
        "integrator": "psi",
        "eps": "0",
        "delta": "0",
        "output.every": "1",
    },
    "landau_2d2v_small": {
        "x_mesh": "builtin:box:32",
        "x_mesh.box": "0, 4pi",
        "v_mesh.box": "-6, 6",
        "v_mesh.n": "64",
        "field.mode": "self_consistent",
        "rho_b": "1",
        "init.type": "landau",
        "init.alpha": "0.01",
        "init.k": "0.5",
        "inflow.type": "none",
        "dt": "0.01",
        "t_end": "20",
        "rank": "10",
        "integrator": "psi",
        "eps": "0",
        "delta": "0",
        "output.every": "1",
    },
    "inflow_triangle": {
        "x_mesh": "builtin:triangle:25",
        "v_mesh.box": "-4, 4",
        "v_mesh.n": "64",
        "field.mode": "constant",
        "field.E": "0, 4",
        "init.type": "characteristics",
        "inflow.type": "characteristics",
        "inflow.terms": "25",
        "dt": "0.005",
        "t_end": "0.5",
        "rank": "1",
        "integrator": "rauc",
        "eps": "1e-3",
        "delta": "1e-2",
        "output.every": "2",
    },
}

DEFAULTS = {
    "x_mesh.box": "0, 1",
    "field.E": "",
    "rho_b": "1",
    "init.alpha": "0.01",
    "init.k": "0.5",
    "inflow.terms": "25",
    "inflow.max_total": "",
    "inflow.refresh": "stage",
    "inflow.error_terms": "100",
    "substeps": "1",
    "r_max": "40",
    "level": "0",
    "snapshot.times": "",
    "out_dir": "out",
    "seed": "0",
}

KEYS = sorted(set(DEFAULTS) | {k for p in PRESETS.values() for k in p} | {"scenario"})

_PI = re.compile(r"^([-+]?(?:\d+\.?\d*(?:[eE][-+]?\d+)?)?)\s*\*?\s*pi$")


def parse_float(text, key=None):
    s = text.strip()
    m = _PI.match(s)
    try:
        if m:
            c = m.group(1)
            factor = 1.0 if c in ("", "+") else -1.0 if c == "-" else float(c)
            return factor * math.pi
        return float(s)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as a number", key=key) from None


def parse_floats(text, key=None):
    return [parse_float(p, key) for p in text.replace(",", " ").split()]


def parse_text(text):
    """Parse ``key = value`` lines into a dict (last assignment wins)."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {raw.strip()!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in KEYS:
            raise ConfigError(f"line {n}: unknown key {k!r}", key=k)
        out[k] = v
    return out


def load_config(source):
    """Read a config file; a bare preset name is accepted as well."""
    if source in PRESETS and not Path(source).exists():
        return {"scenario": source}
    try:
        text = Path(source).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {source}: {exc}") from exc
    return parse_text(text)


@dataclass(frozen=True)
class Scenario:
    name: str
    x_mesh: str
    x_box: tuple
    v_box: tuple
    v_n: int
    field_mode: str
    field_E: tuple
    rho_b: float
    init_type: str
    init_alpha: float
    init_k: float
    inflow_type: str
    inflow_terms: int
    inflow_max_total: int | None
    inflow_refresh: str
    inflow_error_terms: int
    dt: float
    t_end: float
    rank: int
    integrator: str
    eps: float
    delta: float
    r_max: int
    substeps: int
    level: int
    output_every: int
    snapshot_times: tuple
    out_dir: str
    seed: int
    raw: dict

    @property
    def scale(self):
        return 4.0 ** (-self.level)

    def resolved_lines(self):
        """Every effective parameter after level scaling, one ``key = value`` per line."""
        r = dict(self.raw)
        r["dt"] = repr(self.dt)
        r["eps"] = repr(self.eps)
        return [f"{k} = {r[k]}" for k in sorted(r)]


def _int(raw, key, lo=None):
    try:
        v = int(raw[key])
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw[key]!r}", key=key) from None
    if lo is not None and v < lo:
        raise ConfigError(f"{key}: must be >= {lo}, got {v}", key=key)
    return v


def _choice(raw, key, options):
    v = raw[key]
    if v not in options:
        raise ConfigError(f"{key}: expected one of {', '.join(options)}, got {v!r}", key=key)
    return v


def resolve(overrides):
    """Merge preset, defaults and overrides into a validated Scenario."""
    name = overrides.get("scenario")
    if name is None:
        raise ConfigError("missing required key 'scenario'", key="scenario")
    if name not in PRESETS:
        raise ConfigError(f"scenario: unknown preset {name!r}", key="scenario")
    unknown = sorted(set(overrides) - set(KEYS))
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r}", key=unknown[0])
    raw = dict(DEFAULTS)
    raw.update(PRESETS[name])
    raw.update(overrides)
    missing = [k for k in KEYS if k not in raw]
    if missing:
        raise ConfigError(f"missing keys: {', '.join(missing)}", key=missing[0])

    level = _int(raw, "level", 0)
    dt0 = parse_float(raw["dt"], "dt")
    eps0 = parse_float(raw["eps"], "eps")
    t_end = parse_float(raw["t_end"], "t_end")
    if not dt0 > 0:
        raise ConfigError("dt: must be positive", key="dt")
    if not t_end > 0:
        raise ConfigError("t_end: must be positive", key="t_end")
    if eps0 < 0:
        raise ConfigError("eps: must be nonnegative", key="eps")
    delta = parse_float(raw["delta"], "delta")
    if delta < 0:
        raise ConfigError("delta: must be nonnegative", key="delta")
    x_box = tuple(parse_floats(raw["x_mesh.box"], "x_mesh.box"))
    v_box = tuple(parse_floats(raw["v_mesh.box"], "v_mesh.box"))
    for key, box in (("x_mesh.box", x_box), ("v_mesh.box", v_box)):
        if len(box) != 2 or not box[1] > box[0]:
            raise ConfigError(f"{key}: expected 'lo, hi' with lo < hi", key=key)
    field_mode = _choice(raw, "field.mode", ("self_consistent", "constant", "zero"))
    field_E = tuple(parse_floats(raw["field.E"], "field.E"))
    if field_mode == "constant" and not field_E:
        raise ConfigError("field.E: required for field.mode = constant", key="field.E")
    max_total = _int(raw, "inflow.max_total", 1) if raw["inflow.max_total"].strip() else None
    snaps = tuple(sorted(parse_floats(raw["snapshot.times"], "snapshot.times")))
    scale = 4.0 ** (-level)
    return Scenario(
        name=name,
        x_mesh=raw["x_mesh"],
        x_box=x_box,
        v_box=v_box,
        v_n=_int(raw, "v_mesh.n", 1),
        field_mode=field_mode,
        field_E=field_E,
        rho_b=parse_float(raw["rho_b"], "rho_b"),
        init_type=_choice(raw, "init.type", ("landau", "characteristics", "zero")),
        init_alpha=parse_float(raw["init.alpha"], "init.alpha"),
        init_k=parse_float(raw["init.k"], "init.k"),
        inflow_type=_choice(raw, "inflow.type", ("none", "characteristics")),
        inflow_terms=_int(raw, "inflow.terms", 1),
        inflow_max_total=max_total,
        inflow_refresh=_choice(raw, "inflow.refresh", ("stage", "step", "midpoint")),
        inflow_error_terms=_int(raw, "inflow.error_terms", 1),
        dt=dt0 * scale,
        t_end=t_end,
        rank=_int(raw, "rank", 1),
        integrator=_choice(raw, "integrator", ("psi", "rauc")),
        eps=eps0 * scale,
        delta=delta,
        r_max=_int(raw, "r_max", 1),
        substeps=_int(raw, "substeps", 1),
        level=level,
        output_every=_int(raw, "output.every", 1),
        snapshot_times=snaps,
        out_dir=raw["out_dir"],
        seed=_int(raw, "seed"),
        raw=raw,
    )
