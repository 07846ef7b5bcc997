"""Scenario orchestration and diagnostics."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import dlra
from ..exceptions import ConfigError, LowRankVlasovError, MeshValidationError
from ..fem import assemble_mass, assemble_operator_set
from ..field import ElectricField, electric_energy, self_consistent_field, update_field_mass
from ..inflow import InflowProvider, SeparableFunction, sample_separable
from ..mesh import (
    build_interval_mesh,
    build_rect_tri_mesh,
    build_triangle_mesh,
    load_polygon_mesh,
    prolongation,
    refine_uniform,
)
from ..oracle import CharacteristicsSolution, landau_terms

MAX_DENSE_REFERENCE = 20_000_000


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    electric_energy: float
    mass: float
    total_energy: float
    entropy: float
    rank: int
    l2_error: float | None = None
    wall_ms: float = 0.0


def kinetic_energy(state, ops):
    """``1/2 int |v|^2 f`` for the low-rank state."""
    wx = np.ones(ops.Mx.shape[0]) @ (ops.Mx @ state.X)
    wv = state.V.T @ (ops.Mv_v2 @ np.ones(ops.Mv.shape[0]))
    return 0.5 * float(wx @ state.S @ wv)


def diagnostics(state, ops, E, l2=None, wall_ms=0.0):
    ee = electric_energy(E, ops.x_mesh) if E is not None else 0.0
    return DiagnosticsRecord(
        t=float(state.t),
        electric_energy=ee,
        mass=dlra.mass(state, ops),
        total_energy=kinetic_energy(state, ops) + ee,
        entropy=float(np.sum(state.S ** 2)),
        rank=state.rank,
        l2_error=l2,
        wall_ms=wall_ms,
    )


class L2Error:
    """Mass-weighted L2 distance to a separable reference on once-refined meshes.

    Both functions are represented on the refined mesh pair (the state by
    exact P1 interpolation). With ``A = [P X, gx]``, ``B = [P V, gv]`` and
    ``C = diag(S, -I)`` the squared error is ``tr(C (B^T Mv B) C^T (A^T Mx A))``.
    """

    def __init__(self, ops, factors, terms=100):
        self.ops = ops
        self.factors = factors
        self.terms = terms
        self.x_fine = refine_uniform(ops.x_mesh)
        self.v_fine = refine_uniform(ops.v_mesh)
        self.Px = prolongation(ops.x_mesh, self.x_fine)
        self.Pv = prolongation(ops.v_mesh, self.v_fine)
        self.Mx = assemble_mass(self.x_fine)
        self.Mv = assemble_mass(self.v_fine)

    def reference(self, t):
        return sample_separable(self.factors, t, self.x_fine, self.v_fine, self.terms)

    def __call__(self, state, t=None):
        g = self.reference(state.t if t is None else t)
        A = np.hstack([self.Px @ state.X, g.gx])
        B = np.hstack([self.Pv @ state.V, g.gv])
        r, m = state.rank, g.n_terms
        C = np.zeros((r + m, r + m))
        C[:r, :r] = state.S
        C[r:, r:] = -np.eye(m)
        Ga = A.T @ (self.Mx @ A)
        Gb = B.T @ (self.Mv @ B)
        return float(np.sqrt(max(np.sum((C @ Gb @ C.T) * Ga), 0.0)))


def l2_error(state, reference, ops, terms=100):
    """L2 distance between the state and ``reference`` on once-refined meshes.

    ``reference`` is either an object with separable ``factors`` (such as
    CharacteristicsSolution) or a pointwise map ``(x, v) -> f`` evaluated
    densely on the refined nodes.
    """
    if hasattr(reference, "factors"):
        return L2Error(ops, reference.factors, terms)(state)
    xf, vf = refine_uniform(ops.x_mesh), refine_uniform(ops.v_mesh)
    if xf.n_dof * vf.n_dof > MAX_DENSE_REFERENCE:
        raise ValueError("dense reference evaluation is limited to small meshes")
    F = prolongation(ops.x_mesh, xf) @ state.dense() @ prolongation(ops.v_mesh, vf).T
    G = reference(xf.dof_coords[:, None, :], vf.dof_coords[None, :, :])
    D = F - G
    Mx, Mv = assemble_mass(xf), assemble_mass(vf)
    return float(np.sqrt(max(np.sum(D * (Mx @ (Mv @ D.T).T)), 0.0)))


def build_x_mesh(sc):
    source = sc.x_mesh
    if source.startswith("builtin:"):
        parts = source.split(":")
        if len(parts) != 3:
            raise ConfigError(f"x_mesh: expected builtin:<kind>:<n>, got {source!r}", key="x_mesh")
        kind, n = parts[1], parts[2]
        try:
            n = int(n)
        except ValueError:
            raise ConfigError(f"x_mesh: bad resolution {n!r}", key="x_mesh") from None
        lo, hi = sc.x_box
        if kind == "interval":
            mesh = build_interval_mesh(lo, hi, n, periodic=True)
        elif kind == "box":
            mesh = build_rect_tri_mesh((lo, hi), (lo, hi), n, n, (True, True))
        elif kind == "triangle":
            mesh = build_triangle_mesh(n)
        else:
            raise ConfigError(f"x_mesh: unknown builtin mesh {kind!r}", key="x_mesh")
    else:
        try:
            mesh = load_polygon_mesh(Path(source).read_text())
        except OSError as exc:
            raise ConfigError(f"x_mesh: cannot read {source}: {exc}", key="x_mesh") from exc
        except MeshValidationError as exc:
            raise ConfigError(f"x_mesh: {source}: {exc}", key="x_mesh") from exc
    for _ in range(sc.level):
        mesh = refine_uniform(mesh)
    return mesh


def build_v_mesh(sc, dim):
    n = sc.v_n * 2 ** sc.level
    lo, hi = sc.v_box
    if dim == 1:
        return build_interval_mesh(lo, hi, n, periodic=True)
    return build_rect_tri_mesh((lo, hi), (lo, hi), n, n, (True, True))


def characteristics_solution(sc):
    if sc.field_mode == "constant":
        return CharacteristicsSolution(E=tuple(sc.field_E))
    return CharacteristicsSolution()


@dataclass
class Setup:
    scenario: object
    ops: object
    state: object
    cfg: object
    provider: object = None
    field_update: object = None
    constant_E: object = None
    error: object = None


def setup(sc):
    x_mesh = build_x_mesh(sc)
    v_mesh = build_v_mesh(sc, x_mesh.dim)
    ops = assemble_operator_set(x_mesh, v_mesh)
    nx, nv = x_mesh.n_dof, v_mesh.n_dof
    s = Setup(sc, ops, None, dlra.StepConfig(sc.dt, sc.delta, sc.eps, sc.r_max, sc.substeps, sc.integrator))

    if sc.field_mode == "self_consistent":
        if not all(x_mesh.periodic):
            raise ConfigError("field.mode: self_consistent needs a fully periodic x_mesh", key="field.mode")
        s.field_update = lambda st: self_consistent_field(st, ops, sc.rho_b)
    elif sc.field_mode == "constant":
        if len(sc.field_E) != x_mesh.dim:
            raise ConfigError(f"field.E: expected {x_mesh.dim} components", key="field.E")
        s.constant_E = ElectricField.from_constant(x_mesh, sc.field_E)
        update_field_mass(ops, s.constant_E)
    else:
        s.constant_E = ElectricField.zero(x_mesh)

    sol = characteristics_solution(sc)
    if sc.init_type == "landau":
        gx, gv = landau_terms(x_mesh, v_mesh, sc.init_alpha, sc.init_k)
        f0 = SeparableFunction(gx, gv)
    elif sc.init_type == "characteristics":
        if x_mesh.dim != len(sol.factors):
            raise ConfigError("init.type: characteristics data needs a 2D mesh", key="init.type")
        f0 = sample_separable(sol.factors, 0.0, x_mesh, v_mesh, sc.inflow_error_terms)
    else:
        f0 = SeparableFunction.zero(nx, nv)
    state = dlra.compress_initial(f0, sc.rank, ops)
    if sc.integrator == "psi":
        state = dlra.pad_rank(state, sc.rank, ops, seed=sc.seed)
    s.state = state

    if sc.inflow_type == "characteristics":
        if x_mesh.dim != len(sol.factors):
            raise ConfigError("inflow.type: characteristics data needs a 2D mesh", key="inflow.type")
        s.provider = InflowProvider(sol.factors, ops, sc.inflow_terms, sc.inflow_refresh,
                                    sc.inflow_max_total)
        s.error = L2Error(ops, sol.factors, sc.inflow_error_terms)
    return s


@dataclass
class RunResult:
    state: object
    records: list
    snapshots: list
    ops: object
    scenario: object
    max_ortho: float = 0.0
    ranks: list = field(default_factory=list)
    reports: list = field(default_factory=list)


def _current_field(s, state):
    if s.field_update is not None:
        return s.field_update(state)
    return s.constant_E


def run_scenario(sc, progress=None, check_orthonormality=True):
    """Run ``sc`` to ``t_end``; returns the final state, records and snapshots."""
    s = setup(sc)
    ops, state, cfg = s.ops, s.state, s.cfg
    n_steps = max(1, int(round(sc.t_end / sc.dt)))
    start = time.perf_counter()
    result = RunResult(state, [], [], ops, sc)
    pending = list(sc.snapshot_times)

    def record(st):
        l2 = s.error(st) if s.error is not None else None
        wall = 1e3 * (time.perf_counter() - start)
        result.records.append(diagnostics(st, ops, _current_field(s, st), l2, wall))

    def snap(st):
        while pending and st.t >= pending[0] - 1e-12:
            pending.pop(0)
            result.snapshots.append(st)

    record(state)
    snap(state)
    for i in range(n_steps):
        rep = {}
        try:
            new = dlra.step(state, ops, s.provider, cfg, s.field_update, rep)
        except LowRankVlasovError as exc:
            exc.last_good_t = state.t
            raise
        state = replace(new, t=(i + 1) * sc.dt)
        result.ranks.append(state.rank)
        result.reports.append(rep)
        if check_orthonormality:
            result.max_ortho = max(
                result.max_ortho,
                dlra.orthonormality_error(state.X, ops.Mx),
                dlra.orthonormality_error(state.V, ops.Mv),
            )
        if (i + 1) % sc.output_every == 0 or i + 1 == n_steps:
            record(state)
        snap(state)
        if progress is not None:
            progress(i + 1, n_steps, state)
    result.state = state
    return result


def local_maxima(t, w, t_min=-np.inf, t_max=np.inf):
    t, w = np.asarray(t, dtype=float), np.asarray(w, dtype=float)
    i = np.flatnonzero((w[1:-1] > w[:-2]) & (w[1:-1] >= w[2:])) + 1
    i = i[(t[i] >= t_min) & (t[i] <= t_max)]
    return t[i], w[i]


def fit_decay_rate(t, w, t_min=-np.inf, t_max=np.inf):
    """Least-squares slope of ``log w`` over the local maxima of ``w``."""
    tm, wm = local_maxima(t, w, t_min, t_max)
    if len(tm) < 2:
        raise ValueError("fewer than two local maxima in the fit window")
    return float(np.polyfit(tm, np.log(wm), 1)[0])
