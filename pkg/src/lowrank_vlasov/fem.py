"""
Assembly of the P1 finite element matrices used by the low-rank integrators.

All matrices are returned as CSR matrices indexed by degrees of freedom
(periodic vertex pairs share one dof).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .linalg import cholesky

# Gauss-Legendre, 3 points on [0, 1] (exact to degree 5)
_G3 = np.array([0.5 - np.sqrt(0.15), 0.5, 0.5 + np.sqrt(0.15)])
_W3 = np.array([5.0, 8.0, 5.0]) / 18.0
QUAD_INTERVAL = (np.column_stack([1.0 - _G3, _G3]), _W3)

# 6-point symmetric rule on the triangle, exact to degree 4 (weights sum to 1)
_a, _b = 0.445948490915965, 0.091576213509771
QUAD_TRIANGLE = (
    np.array(
        [
            [1 - 2 * _a, _a, _a],
            [_a, 1 - 2 * _a, _a],
            [_a, _a, 1 - 2 * _a],
            [1 - 2 * _b, _b, _b],
            [_b, 1 - 2 * _b, _b],
            [_b, _b, 1 - 2 * _b],
        ]
    ),
    np.array([0.223381589678011] * 3 + [0.109951743655322] * 3),
)


def quadrature(dim):
    """Barycentric points and weights (summing to 1) for the reference simplex."""
    return QUAD_INTERVAL if dim == 1 else QUAD_TRIANGLE


def coordinate(k):
    """Weight function ``w(p) = p_k``."""
    return lambda p: p[..., k]


def _scatter(mesh, local):
    dofs = mesh.element_dofs
    nl = dofs.shape[1]
    rows = np.repeat(dofs, nl, axis=1).ravel()
    cols = np.tile(dofs, (1, nl)).ravel()
    A = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_dof, mesh.n_dof))
    A.sum_duplicates()
    return A


def _mass_local(mesh):
    d = mesh.dim
    base = (np.ones((d + 1, d + 1)) + np.eye(d + 1)) / ((d + 1) * (d + 2))
    return mesh.element_measures()[:, None, None] * base


def _quad_local(mesh, weight):
    lam, w = quadrature(mesh.dim)
    p = mesh.vertices[mesh.elements]  # (ne, d+1, d)
    pts = np.einsum("qi,eid->eqd", lam, p)
    vals = np.asarray(weight(pts), dtype=float)
    meas = mesh.element_measures()
    return np.einsum("e,q,eq,qi,qj->eij", meas, w, vals, lam, lam)


def assemble_mass(mesh, weight=None):
    """Mass matrix ``[int phi_i w phi_j]``.

    ``weight`` may be None, a scalar, an array of per-element constants or a
    callable evaluated at physical points (shape ``(..., dim)``). Callables
    are integrated with a rule exact for quadratic weights.
    """
    if weight is None:
        local = _mass_local(mesh)
    elif callable(weight):
        local = _quad_local(mesh, weight)
    else:
        c = np.broadcast_to(np.asarray(weight, dtype=float), (mesh.n_elem,))
        local = c[:, None, None] * _mass_local(mesh)
    return _scatter(mesh, local)


def assemble_transport(mesh, k):
    """``[int phi_i d_k phi_j]``."""
    if not 0 <= k < mesh.dim:
        raise ValueError(f"direction {k} out of range for a {mesh.dim}D mesh")
    g = mesh.element_gradients()[:, :, k]  # (ne, d+1)
    meas = mesh.element_measures() / (mesh.dim + 1)
    local = meas[:, None, None] * np.broadcast_to(g[:, None, :], (mesh.n_elem, mesh.dim + 1, mesh.dim + 1))
    return _scatter(mesh, local)


def assemble_stiffness(mesh):
    g = mesh.element_gradients()
    local = mesh.element_measures()[:, None, None] * np.einsum("eid,ejd->eij", g, g)
    return _scatter(mesh, local)


def assemble_boundary_mass(mesh, piece):
    """P1 mass on the facets of one boundary piece."""
    rows, cols, vals = [], [], []
    for e, j in piece.facets:
        fv = mesh.facet_vertices(e, j)
        dofs = mesh.dof_map[list(fv)]
        if mesh.dim == 1:
            rows.append(dofs[0])
            cols.append(dofs[0])
            vals.append(1.0)
        else:
            h = mesh.facet_measure(e, j)
            for a in range(2):
                for b in range(2):
                    rows.append(dofs[a])
                    cols.append(dofs[b])
                    vals.append(h / 3.0 if a == b else h / 6.0)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(mesh.n_dof, mesh.n_dof))
    A.sum_duplicates()
    return A


def _clip_simplex(s):
    """Sub-simplices (barycentric vertex rows) of the reference simplex where s < 0.

    ``s`` holds the values of an affine function at the simplex vertices.
    """
    n = len(s)
    E = np.eye(n)
    if n == 2:
        inside = 0 if s[0] < 0 else 1
        cross = (s[1] * E[0] - s[0] * E[1]) / (s[1] - s[0])
        return [np.array([E[inside], cross])]
    poly = []
    for i in range(3):
        j = (i + 1) % 3
        if s[i] <= 0:
            poly.append(E[i])
        if (s[i] < 0 < s[j]) or (s[j] < 0 < s[i]):
            poly.append((s[j] * E[i] - s[i] * E[j]) / (s[j] - s[i]))
    return [np.array([poly[0], poly[k], poly[k + 1]]) for k in range(1, len(poly) - 1)]


def assemble_halfspace_mass(v_mesh, normal):
    """``[int_{n.v < 0} phi_i (n.v) phi_j dv]``, by exact clipping of elements."""
    normal = np.asarray(normal, dtype=float).reshape(-1)
    nrm = np.linalg.norm(normal)
    if nrm == 0 or not np.isfinite(nrm):
        raise ValueError("normal must be a nonzero finite vector")
    normal = normal / nrm
    d = v_mesh.dim
    s_all = v_mesh.vertices[v_mesh.elements] @ normal  # (ne, d+1)
    lam, w = quadrature(d)
    meas = v_mesh.element_measures()
    inside = np.all(s_all <= 0, axis=1)
    straddle = ~inside & np.any(s_all < 0, axis=1)

    local = np.zeros((v_mesh.n_elem, d + 1, d + 1))
    wq = lam @ s_all[inside].T  # (q, n_in)
    local[inside] = np.einsum("e,q,qe,qi,qj->eij", meas[inside], w, wq, lam, lam)
    for e in np.flatnonzero(straddle):
        s = s_all[e]
        acc = np.zeros((d + 1, d + 1))
        for sub in _clip_simplex(s):
            if d == 1:
                ratio = abs(sub[1, 1] - sub[0, 1])
            else:
                ratio = abs(np.linalg.det(sub))
            bq = lam @ sub  # barycentric coords of quadrature points in the parent
            acc += ratio * np.einsum("q,q,qi,qj->ij", w, bq @ s, bq, bq)
        local[e] = meas[e] * acc
    return _scatter(v_mesh, local)


def interior_facets(mesh):
    """Pairs of element-facets glued together, including periodic ones.

    Returns arrays ``(e1, j1, e2, j2)``.
    """
    d = mesh.dim
    ne = mesh.n_elem
    lo, hi = mesh.box
    size = float(np.max(hi - lo))
    tol = 1e-9 * size
    el = mesh.elements
    mids = np.empty((ne * (d + 1), d))
    for j in range(d + 1):
        others = [i for i in range(d + 1) if i != j]
        mids[j::d + 1] = mesh.vertices[el[:, others]].mean(axis=1)
    for c, per in enumerate(mesh.periodic):
        if per:
            L = hi[c] - lo[c]
            m = np.mod(mids[:, c] - lo[c], L)
            m[np.abs(m - L) < tol] = 0.0
            mids[:, c] = lo[c] + m
    pairs = cKDTree(mids).query_pairs(tol, output_type="ndarray")
    a, b = pairs[:, 0], pairs[:, 1]
    return a // (d + 1), a % (d + 1), b // (d + 1), b % (d + 1)


def assemble_cip(mesh):
    """Continuous interior penalty matrix ``sum_F h_F^2 ([grad u], [grad w])_F``.

    In 1D the facet is a point (measure 1) and ``h_F`` is the mean length of
    the two neighbouring elements.
    """
    e1, j1, e2, j2 = interior_facets(mesh)
    if len(e1) == 0:
        return sp.csr_matrix((mesh.n_dof, mesh.n_dof))
    g = mesh.element_gradients()
    if mesh.dim == 1:
        meas = mesh.element_measures()
        hF = 0.5 * (meas[e1] + meas[e2])
        area = np.ones_like(hF)
    else:
        hF = np.array([mesh.facet_measure(e, j) for e, j in zip(e1, j1)])
        area = hF
    coef = np.concatenate([g[e1], -g[e2]], axis=1)  # (nf, 2(d+1), d)
    dofs = np.concatenate([mesh.element_dofs[e1], mesh.element_dofs[e2]], axis=1)
    local = (hF ** 2 * area)[:, None, None] * np.einsum("fad,fbd->fab", coef, coef)
    nl = dofs.shape[1]
    rows = np.repeat(dofs, nl, axis=1).ravel()
    cols = np.tile(dofs, (1, nl)).ravel()
    C = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_dof, mesh.n_dof))
    C.sum_duplicates()
    return C


class ElementWeightedMass:
    """Fast rebuild of ``assemble_mass(mesh, c)`` for per-element constants ``c``."""

    def __init__(self, mesh):
        self.mesh = mesh
        dofs = mesh.element_dofs
        nl = dofs.shape[1]
        rows = np.repeat(dofs, nl, axis=1).ravel()
        cols = np.tile(dofs, (1, nl)).ravel()
        keys = rows.astype(np.int64) * mesh.n_dof + cols
        ukeys, self._pos = np.unique(keys, return_inverse=True)
        self._indices = (ukeys % mesh.n_dof).astype(np.int32)
        self._indptr = np.searchsorted(ukeys // mesh.n_dof, np.arange(mesh.n_dof + 1)).astype(np.int32)
        self._local = _mass_local(mesh).reshape(mesh.n_elem, -1)
        self._nnz = len(ukeys)

    def __call__(self, values):
        values = np.broadcast_to(np.asarray(values, dtype=float), (self.mesh.n_elem,))
        data = np.bincount(self._pos, weights=(self._local * values[:, None]).ravel(), minlength=self._nnz)
        n = self.mesh.n_dof
        return sp.csr_matrix((data, self._indices.copy(), self._indptr.copy()), shape=(n, n))


@dataclass(eq=False)
class OperatorSet:
    """All assembled matrices for one spatial/velocity mesh pair."""

    x_mesh: object
    v_mesh: object
    Mx: sp.csr_matrix
    Mv: sp.csr_matrix
    Tx: list
    Tv: list
    Mv_k: list
    Mx_E: list
    Mx_bnd: list
    Mv_half: list
    Cx: sp.csr_matrix
    Cv: sp.csr_matrix
    Mv_v2: sp.csr_matrix
    Mx_chol: object
    Mv_chol: object
    normals: list = field(default_factory=list)
    field_mass: ElementWeightedMass | None = None

    @property
    def dim(self):
        return self.x_mesh.dim

    @property
    def n_pieces(self):
        return len(self.Mx_bnd)

    def set_field_values(self, E_elem):
        """Replace the field-weighted masses from per-element field vectors."""
        self.Mx_E = [self.field_mass(E_elem[:, k]) for k in range(self.dim)]


def assemble_operator_set(x_mesh, v_mesh):
    if x_mesh.dim != v_mesh.dim:
        raise ValueError("spatial and velocity meshes must have the same dimension")
    d = x_mesh.dim
    Mx = assemble_mass(x_mesh)
    Mv = assemble_mass(v_mesh)
    pieces = x_mesh.boundary_pieces
    zero = sp.csr_matrix((x_mesh.n_dof, x_mesh.n_dof))
    ops = OperatorSet(
        x_mesh=x_mesh,
        v_mesh=v_mesh,
        Mx=Mx,
        Mv=Mv,
        Tx=[assemble_transport(x_mesh, k) for k in range(d)],
        Tv=[assemble_transport(v_mesh, k) for k in range(d)],
        Mv_k=[assemble_mass(v_mesh, coordinate(k)) for k in range(d)],
        Mx_E=[zero.copy() for _ in range(d)],
        Mx_bnd=[assemble_boundary_mass(x_mesh, p) for p in pieces],
        Mv_half=[assemble_halfspace_mass(v_mesh, p.normal) for p in pieces],
        Cx=assemble_cip(x_mesh),
        Cv=assemble_cip(v_mesh),
        Mv_v2=assemble_mass(v_mesh, lambda p: np.sum(p ** 2, axis=-1)),
        Mx_chol=cholesky(Mx),
        Mv_chol=cholesky(Mv),
        normals=[p.normal for p in pieces],
        field_mass=ElementWeightedMass(x_mesh),
    )
    return ops


def simplex_moment(alpha):
    """``int_K prod lambda_i^alpha_i / |K|`` (exact closed form)."""
    d = len(alpha) - 1
    num = factorial(d)
    for a in alpha:
        num *= factorial(a)
    return num / factorial(d + sum(alpha))
