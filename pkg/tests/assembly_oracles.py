"""
Reference matrices by direct quadrature on each element.

Hat functions come from solving the barycentric system of each element;
integrals use collapsed tensor Gauss rules (triangles), plain Gauss rules
(segments) and shapely for half-plane clipping.
"""

import numpy as np
from shapely.geometry import Polygon

_G, _W = np.polynomial.legendre.leggauss(10)
_G, _W = 0.5 * (_G + 1), 0.5 * _W
_U, _V = np.meshgrid(_G, _G, indexing="ij")
_TRI_PTS = np.column_stack([_U.ravel(), (_V * (1 - _U)).ravel()])
_TRI_W = (np.outer(_W, _W) * (1 - _U)).ravel()


def triangle_rule(a, b, c):
    J = np.column_stack([b - a, c - a])
    return a + _TRI_PTS @ J.T, _TRI_W * abs(np.linalg.det(J))


def segment_rule(a, b):
    a, b = np.atleast_1d(a).astype(float), np.atleast_1d(b).astype(float)
    return a + np.outer(_G, b - a), _W * np.linalg.norm(b - a)


def hat_coefficients(simplex):
    """Rows ``[c_0, grad]`` with ``phi_i(p) = c_0 + grad . p`` for every vertex ``i``."""
    d = simplex.shape[1]
    A = np.hstack([np.ones((d + 1, 1)), simplex])
    return np.linalg.inv(A).T


def hats(simplex, pts):
    C = hat_coefficients(simplex)
    return C[:, 0][None, :] + pts @ C[:, 1:].T


def _rule(simplex):
    return triangle_rule(*simplex) if len(simplex) == 3 else segment_rule(*simplex)


def _scatter(mesh, M, e, local):
    dofs = mesh.dof_map[mesh.elements[e]]
    M[np.ix_(dofs, dofs)] += local


def mass(mesh, weight=lambda p: np.ones(len(p))):
    M = np.zeros((mesh.n_dof, mesh.n_dof))
    for e, el in enumerate(mesh.elements):
        simplex = mesh.vertices[el]
        pts, w = _rule(simplex)
        phi = hats(simplex, pts)
        _scatter(mesh, M, e, np.einsum("q,q,qi,qj->ij", w, weight(pts), phi, phi))
    return M


def transport(mesh, k):
    M = np.zeros((mesh.n_dof, mesh.n_dof))
    for e, el in enumerate(mesh.elements):
        simplex = mesh.vertices[el]
        pts, w = _rule(simplex)
        phi = hats(simplex, pts)
        grad_k = hat_coefficients(simplex)[:, 1 + k]
        _scatter(mesh, M, e, np.einsum("q,qi,j->ij", w, phi, grad_k))
    return M


def boundary(mesh, piece):
    M = np.zeros((mesh.n_dof, mesh.n_dof))
    for e, j in piece.facets:
        el = mesh.elements[e]
        simplex = mesh.vertices[el]
        face = np.delete(simplex, j, axis=0)
        if mesh.dim == 1:
            pts, w = face, np.ones(1)
        else:
            pts, w = segment_rule(*face)
        phi = hats(simplex, pts)
        _scatter(mesh, M, e, np.einsum("q,qi,qj->ij", w, phi, phi))
    return M


def halfspace(mesh, normal, weight=None):
    """``int_{n.v < 0} phi_i w(v) phi_j``; ``w`` defaults to ``n.v``."""
    n = np.asarray(normal, dtype=float) / np.linalg.norm(normal)
    weight = weight or (lambda p: p @ n)
    M = np.zeros((mesh.n_dof, mesh.n_dof))
    for e, el in enumerate(mesh.elements):
        simplex = mesh.vertices[el]
        pieces = []
        if mesh.dim == 1:
            lo, hi = sorted(simplex[:, 0])
            if n[0] > 0:
                hi = min(hi, 0.0)
            else:
                lo = max(lo, 0.0)
            if hi > lo:
                pieces.append(segment_rule(lo, hi))
        else:
            R = 1e3
            t = np.array([-n[1], n[0]])
            half = Polygon([R * t, R * t - R * n, -R * t - R * n, -R * t])
            clip = Polygon(simplex).intersection(half)
            if not clip.is_empty and clip.area > 0:
                ring = np.asarray(clip.exterior.coords)[:-1]
                for k in range(1, len(ring) - 1):
                    pieces.append(triangle_rule(ring[0], ring[k], ring[k + 1]))
        for pts, w in pieces:
            phi = hats(simplex, pts)
            _scatter(mesh, M, e, np.einsum("q,q,qi,qj->ij", w, weight(pts), phi, phi))
    return M


def cip(mesh):
    """``sum_F h_F^2 [grad u].[grad w] |F|`` over shared facets of a nonperiodic mesh.

    For intervals the facet is a point (measure 1) and ``h_F`` is the mean of
    the two neighbouring element lengths.
    """
    faces = {}
    for e, el in enumerate(mesh.elements):
        for j in range(len(el)):
            faces.setdefault(tuple(sorted(np.delete(el, j))), []).append(e)
    M = np.zeros((mesh.n_dof, mesh.n_dof))
    for key, els in faces.items():
        if len(els) != 2:
            continue
        if mesh.dim == 1:
            lengths = [np.ptp(mesh.vertices[mesh.elements[e], 0]) for e in els]
            h, area = 0.5 * sum(lengths), 1.0
        else:
            h = area = np.linalg.norm(mesh.vertices[key[0]] - mesh.vertices[key[1]])
        jump = np.zeros((mesh.n_dof, mesh.dim))
        for sgn, e in zip((1.0, -1.0), els):
            C = hat_coefficients(mesh.vertices[mesh.elements[e]])
            for i, v in enumerate(mesh.elements[e]):
                jump[mesh.dof_map[v]] += sgn * C[i, 1:]
        M += h ** 2 * area * jump @ jump.T
    return M
