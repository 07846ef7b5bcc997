"""
Separable inflow data and the boundary load terms of the K-, S- and
L-equations.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

DROP_REL = 1e-14


@dataclass(frozen=True, eq=False)
class SeparableFunction:
    """``g(x, v) = sum_m gx[:, m](x) gv[:, m](v)`` as nodal coefficients."""

    gx: np.ndarray
    gv: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if self.gx.ndim != 2 or self.gv.ndim != 2 or self.gx.shape[1] != self.gv.shape[1]:
            raise ValueError(f"term shapes do not match: {self.gx.shape}, {self.gv.shape}")

    @property
    def n_terms(self):
        return self.gx.shape[1]

    @classmethod
    def zero(cls, n_x, n_v, t=0.0):
        return cls(np.zeros((n_x, 0)), np.zeros((n_v, 0)), t)

    def dense(self):
        return self.gx @ self.gv.T

    def __add__(self, other):
        return SeparableFunction(
            np.hstack([self.gx, other.gx]), np.hstack([self.gv, other.gv]), self.t
        )


def _unique_coords(values):
    u, inv = np.unique(np.round(values, 12), return_inverse=True)
    return u, inv.ravel()


def _factor_svd(g, t, xs, vs, max_terms):
    ux, ix = _unique_coords(xs)
    uv, iv = _unique_coords(vs)
    G = g(t, ux[:, None], uv[None, :])
    G = np.broadcast_to(np.asarray(G, dtype=float), (len(ux), len(uv)))
    U, s, VT = np.linalg.svd(G, full_matrices=False)
    keep = s > DROP_REL * s[0] if s.size and s[0] > 0 else np.zeros(len(s), bool)
    k = min(int(keep.sum()), max_terms)
    return U[ix, :k], s[:k], VT[:k, iv].T


def sample_separable(factors, t, x_mesh, v_mesh, max_terms, x_dofs=None, max_total=None):
    """Sample ``g = prod_k g_k(t, x_k, v_k)`` at mesh nodes in separable form.

    Every two-variable factor is evaluated on the distinct coordinate values
    of the nodes and compressed by an SVD truncated to ``max_terms``. The
    factor expansions are combined by Kronecker product, ordered by the
    product of singular values; ``max_total`` optionally caps the number of
    combined terms. ``x_dofs`` restricts the x sampling to a subset of dofs
    (e.g. the boundary); the other x coefficients are zero.
    """
    if max_terms < 1:
        raise ValueError(f"max_terms must be >= 1, got {max_terms}")
    if len(factors) != x_mesh.dim:
        raise ValueError("need one factor per coordinate direction")
    xc = x_mesh.dof_coords
    vc = v_mesh.dof_coords
    dofs = np.arange(x_mesh.n_dof) if x_dofs is None else np.asarray(x_dofs)
    parts = [_factor_svd(g, t, xc[dofs, k], vc[:, k], max_terms) for k, g in enumerate(factors)]

    idx = np.indices([len(s) for _, s, _ in parts]).reshape(len(parts), -1)
    weights = np.prod([s[i] for (_, s, _), i in zip(parts, idx)], axis=0)
    if weights.size == 0 or weights.max() == 0.0:
        return SeparableFunction.zero(x_mesh.n_dof, v_mesh.n_dof, t)
    order = np.argsort(-weights, kind="stable")
    order = order[weights[order] > DROP_REL * weights[order[0]]][:max_total]

    gx_sub = np.ones((len(dofs), len(order)))
    gv = np.ones((v_mesh.n_dof, len(order)))
    for k, (U, s, W) in enumerate(parts):
        sel = idx[k][order]
        gx_sub *= U[:, sel] * s[sel]
        gv *= W[:, sel]
    gx = np.zeros((x_mesh.n_dof, len(order)))
    gx[dofs] = gx_sub
    return SeparableFunction(gx, gv, t)


def boundary_dofs(x_mesh):
    dofs = set()
    for p in x_mesh.boundary_pieces:
        for e, j in p.facets:
            verts = [x_mesh.elements[e, i] for i in range(x_mesh.dim + 1) if i != j]
            dofs.update(int(x_mesh.dof_map[v]) for v in verts)
    return np.array(sorted(dofs), dtype=int)


@dataclass(frozen=True, eq=False)
class InflowAssembly:
    """Per piece: ``bx[nu] = Mx_bnd[nu] gx`` and ``bv[nu] = Mv_half[nu] gv`` (terms as columns)."""

    bx: tuple
    bv: tuple
    t: float = 0.0

    @property
    def empty(self):
        return all(b.shape[1] == 0 for b in self.bx)


def assemble_inflow(g, ops):
    bx = tuple(np.asarray(B @ g.gx) for B in ops.Mx_bnd)
    bv = tuple(np.asarray(B @ g.gv) for B in ops.Mv_half)
    return InflowAssembly(bx, bv, g.t)


def _check(a, Y, which):
    ref = a.bx if which == "x" else a.bv
    if ref and Y.shape[0] != ref[0].shape[0]:
        raise ValueError(f"basis has {Y.shape[0]} rows, inflow data has {ref[0].shape[0]}")


def gx_matrix(a, V):
    """``sum_nu bx[nu] (bv[nu]^T V)``."""
    V = np.asarray(V)
    _check(a, V, "v")
    out = np.zeros((a.bx[0].shape[0] if a.bx else 0, V.shape[1]))
    for bx, bv in zip(a.bx, a.bv):
        out += bx @ (bv.T @ V)
    return out


def gv_matrix(a, X):
    """``sum_nu bv[nu] (bx[nu]^T X)``."""
    X = np.asarray(X)
    _check(a, X, "x")
    out = np.zeros((a.bv[0].shape[0] if a.bv else 0, X.shape[1]))
    for bx, bv in zip(a.bx, a.bv):
        out += bv @ (bx.T @ X)
    return out


def gs_matrix(a, X, V):
    """``sum_nu (X^T bx[nu]) (V^T bv[nu])^T``."""
    X, V = np.asarray(X), np.asarray(V)
    _check(a, X, "x")
    _check(a, V, "v")
    out = np.zeros((X.shape[1], V.shape[1]))
    for bx, bv in zip(a.bx, a.bv):
        out += (X.T @ bx) @ (bv.T @ V)
    return out


class InflowProvider:
    """Inflow assemblies on demand, cached by evaluation time.

    refresh
        ``"stage"``: data sampled at every requested (stage) time.
        ``"step"``: frozen at the start of the current step.
        ``"midpoint"``: frozen at the midpoint of the current step.
    """

    def __init__(self, factors, ops, max_terms=25, refresh="stage", max_total=None, cache_size=8):
        if refresh not in ("stage", "step", "midpoint"):
            raise ValueError(f"unknown refresh mode {refresh!r}")
        self.factors = factors
        self.ops = ops
        self.max_terms = max_terms
        self.max_total = max_total
        self.refresh = refresh
        self._dofs = boundary_dofs(ops.x_mesh)
        self._cache = OrderedDict()
        self._cache_size = cache_size
        self._frozen = None

    def begin_step(self, t0, dt):
        if self.refresh == "step":
            self._frozen = t0
        elif self.refresh == "midpoint":
            self._frozen = t0 + 0.5 * dt

    def sample(self, t):
        return sample_separable(
            self.factors, t, self.ops.x_mesh, self.ops.v_mesh, self.max_terms, self._dofs,
            self.max_total,
        )

    def __call__(self, t):
        if self._frozen is not None:
            t = self._frozen
        key = round(float(t), 14)
        a = self._cache.get(key)
        if a is None:
            a = assemble_inflow(self.sample(t), self.ops)
            self._cache[key] = a
            if len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        return a


def no_inflow(t):
    return None
