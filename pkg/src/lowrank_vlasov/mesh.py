"""
Simplicial meshes (intervals and triangles) for the spatial and velocity
domains.

Conventions
-----------
* Elements are positively oriented: ``x1 > x0`` for intervals, counter
  clockwise vertex order for triangles.
* Local facet ``j`` of an element is the facet opposite local vertex ``j``.
  For an interval ``(v0, v1)`` facet 0 is the point ``v1`` (normal +1) and
  facet 1 is the point ``v0`` (normal -1).
* Periodic directions identify the degrees of freedom of vertices on the
  upper face with those on the lower face, matched by coordinates.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components
import scipy.sparse as sp
from scipy.sparse import coo_matrix
from scipy.spatial import cKDTree

from .exceptions import MeshValidationError

NORMAL_TOL = 1e-12
PERIODIC_REL_TOL = 1e-9


@dataclass(frozen=True)
class BoundaryPiece:
    """Flat part of the boundary with a constant outward unit normal."""

    id: int
    normal: np.ndarray
    facets: tuple  # of (element index, local facet index)


@dataclass(frozen=True, eq=False)
class Mesh:
    dim: int
    vertices: np.ndarray
    elements: np.ndarray
    dof_map: np.ndarray
    n_dof: int
    boundary_pieces: tuple
    periodic: tuple
    # (n_vert, 2) parent vertex pairs when produced by refine_uniform
    vertex_parents: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_vert(self):
        return len(self.vertices)

    @property
    def n_elem(self):
        return len(self.elements)

    @property
    def box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def element_dofs(self):
        return self.dof_map[self.elements]

    @property
    def dof_coords(self):
        """Coordinates of one representative vertex per dof (the first one)."""
        rep = np.full(self.n_dof, -1)
        order = np.arange(self.n_vert)[::-1]
        rep[self.dof_map[order]] = order
        return self.vertices[rep]

    def element_measures(self):
        return _measures(self.vertices, self.elements)

    def element_gradients(self):
        """Gradients of barycentric coordinates, shape (n_elem, dim+1, dim)."""
        p = self.vertices[self.elements]
        jac = np.transpose(p[:, 1:, :] - p[:, :1, :], (0, 2, 1))
        inv = np.linalg.inv(jac)  # rows are grad lambda_1..d
        grads = np.empty((self.n_elem, self.dim + 1, self.dim))
        grads[:, 1:, :] = inv
        grads[:, 0, :] = -inv.sum(axis=1)
        return grads

    def facet_vertices(self, element, local_facet):
        """Global vertex indices of a facet, in orientation order."""
        e = self.elements[element]
        if self.dim == 1:
            return (e[1 - local_facet],)
        return (e[(local_facet + 1) % 3], e[(local_facet + 2) % 3])

    def facet_normal(self, element, local_facet):
        if self.dim == 1:
            return np.array([1.0 if local_facet == 0 else -1.0])
        a, b = self.facet_vertices(element, local_facet)
        d = self.vertices[b] - self.vertices[a]
        return np.array([d[1], -d[0]]) / math.hypot(d[0], d[1])

    def facet_measure(self, element, local_facet):
        if self.dim == 1:
            return 1.0
        a, b = self.facet_vertices(element, local_facet)
        return float(np.linalg.norm(self.vertices[b] - self.vertices[a]))

    def fingerprint(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices, dtype=float).tobytes())
        h.update(np.ascontiguousarray(self.elements, dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(self.dof_map, dtype=np.int64).tobytes())
        return h.hexdigest()[:16]


def _measures(vertices, elements):
    p = vertices[elements]
    if p.shape[2] == 1:
        return p[:, 1, 0] - p[:, 0, 0]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _periodic_dof_map(vertices, periodic):
    lo = vertices.min(axis=0)
    hi = vertices.max(axis=0)
    size = float(np.max(hi - lo))
    tol = PERIODIC_REL_TOL * size
    canon = vertices.copy()
    for c, per in enumerate(periodic):
        if per:
            on_hi = np.abs(vertices[:, c] - hi[c]) < tol
            canon[on_hi, c] = lo[c]
    n = len(vertices)
    pairs = cKDTree(canon).query_pairs(tol, output_type="ndarray")
    if len(pairs) == 0:
        return np.arange(n), n
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    # number dofs by first vertex of each class
    first = np.full(labels.max() + 1, n)
    np.minimum.at(first, labels, np.arange(n))
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return rank[labels], len(order)


def _validate(dim, vertices, elements, pieces):
    meas = _measures(vertices, elements)
    bad = np.flatnonzero(~(meas > 0))
    if len(bad):
        raise MeshValidationError(
            f"element {bad[0]} has non-positive measure {meas[bad[0]]:.3e}",
            element=int(bad[0]),
        )
    for piece in pieces:
        if abs(np.linalg.norm(piece.normal) - 1.0) > 1e-14:
            raise MeshValidationError(f"boundary piece {piece.id}: normal not unit length")


def _make_mesh(dim, vertices, elements, pieces, periodic, vertex_parents=None):
    vertices = np.asarray(vertices, dtype=float).reshape(-1, dim)
    elements = np.asarray(elements, dtype=np.int64).reshape(-1, dim + 1)
    periodic = tuple(bool(p) for p in periodic)
    _validate(dim, vertices, elements, pieces)
    if any(periodic):
        dof_map, n_dof = _periodic_dof_map(vertices, periodic)
    else:
        dof_map, n_dof = np.arange(len(vertices)), len(vertices)
    for arr in (vertices, elements, dof_map):
        arr.flags.writeable = False
    mesh = Mesh(dim, vertices, elements, dof_map, n_dof, tuple(pieces), periodic, vertex_parents)
    _check_piece_normals(mesh)
    return mesh


def _check_piece_normals(mesh):
    for piece in mesh.boundary_pieces:
        for e, j in piece.facets:
            n = mesh.facet_normal(e, j)
            if np.max(np.abs(n - piece.normal)) > NORMAL_TOL:
                raise MeshValidationError(
                    f"facet ({e}, {j}) of boundary piece {piece.id} has normal {n}, "
                    f"piece normal is {piece.normal}",
                    element=e,
                    facet=j,
                )


def _group_pieces(mesh_like_normal, facets_by_id):
    pieces = []
    for pid in sorted(facets_by_id):
        facets = tuple(facets_by_id[pid])
        pieces.append(BoundaryPiece(pid, mesh_like_normal(*facets[0]), facets))
    return pieces


def build_interval_mesh(a, b, n, periodic=False):
    """Uniform mesh of ``[a, b]`` with ``n`` elements."""
    if not (math.isfinite(a) and math.isfinite(b)) or not a < b:
        raise ValueError(f"invalid interval [{a}, {b}]")
    if int(n) != n or n < 1:
        raise ValueError(f"number of elements must be a positive integer, got {n}")
    n = int(n)
    x = np.linspace(a, b, n + 1)
    elements = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    pieces = []
    if not periodic:
        pieces = [
            BoundaryPiece(0, np.array([-1.0]), ((0, 1),)),
            BoundaryPiece(1, np.array([1.0]), ((n - 1, 0),)),
        ]
    return _make_mesh(1, x[:, None], elements, pieces, (periodic,))


def build_rect_tri_mesh(x_range, y_range, nx, ny, periodic=(False, False)):
    """Structured triangulation of a rectangle, diagonals lower-left to upper-right.

    Non-periodic sides become boundary pieces 0 (bottom), 1 (right), 2 (top)
    and 3 (left).
    """
    (x0, x1), (y0, y1) = x_range, y_range
    if not (x0 < x1 and y0 < y1) or not all(map(math.isfinite, (x0, x1, y0, y1))):
        raise ValueError(f"degenerate rectangle {x_range} x {y_range}")
    if nx < 1 or ny < 1 or int(nx) != nx or int(ny) != ny:
        raise ValueError("nx and ny must be positive integers")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)  # index [j, i]
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    I, J = np.meshgrid(np.arange(nx), np.arange(ny))
    I, J = I.ravel(), J.ravel()
    a, b, c, d = vid(I, J), vid(I + 1, J), vid(I + 1, J + 1), vid(I, J + 1)
    lower = np.column_stack([a, b, c])
    upper = np.column_stack([a, c, d])
    elements = np.empty((2 * len(a), 3), dtype=np.int64)
    elements[0::2] = lower
    elements[1::2] = upper
    cell = np.arange(len(a))

    facets = {}
    if not periodic[1]:
        facets[0] = [(int(2 * k), 2) for k in cell[J == 0]]
        facets[2] = [(int(2 * k + 1), 0) for k in cell[J == ny - 1]]
    if not periodic[0]:
        facets[1] = [(int(2 * k), 0) for k in cell[I == nx - 1]]
        facets[3] = [(int(2 * k + 1), 1) for k in cell[I == 0]]
    normals = {0: (0.0, -1.0), 1: (1.0, 0.0), 2: (0.0, 1.0), 3: (-1.0, 0.0)}
    pieces = [BoundaryPiece(k, np.array(normals[k]), tuple(facets[k])) for k in sorted(facets)]
    return _make_mesh(2, vertices, elements, pieces, periodic)


def build_triangle_mesh(n, corners=((-0.5, -0.5), (0.5, 0.0), (-0.5, 0.5))):
    """Structured subdivision of a triangle into ``n**2`` congruent triangles.

    Corners must be counter clockwise. Boundary pieces: 0 is the edge from
    corner 0 to corner 1, 1 from corner 1 to corner 2, 2 from corner 2 back
    to corner 0. The default corners give the inflow test domain.
    """
    if n < 1:
        raise ValueError("n must be positive")
    A, B, C = (np.asarray(p, dtype=float) for p in corners)
    index = {}
    verts = []
    for j in range(n + 1):
        for i in range(n + 1 - j):
            index[i, j] = len(verts)
            verts.append(A + i / n * (B - A) + j / n * (C - A))
    elements = []
    facets = {0: [], 1: [], 2: []}
    for j in range(n):
        for i in range(n - j):
            e = len(elements)
            elements.append((index[i, j], index[i + 1, j], index[i, j + 1]))
            if j == 0:
                facets[0].append((e, 2))
            if i + j == n - 1:
                facets[1].append((e, 0))
            if i == 0:
                facets[2].append((e, 1))
            if i + j < n - 1:
                elements.append((index[i + 1, j], index[i + 1, j + 1], index[i, j + 1]))
    verts = np.array(verts)
    elements = np.array(elements)
    proto = Mesh(2, verts, elements, None, 0, (), (False, False))
    pieces = _group_pieces(proto.facet_normal, facets)
    return _make_mesh(2, verts, elements, pieces, (False, False))


def _strip(line):
    return line.split("#", 1)[0].strip()


def load_polygon_mesh(text):
    """Parse the line oriented mesh format.

    ::

        dim n_vert n_elem n_bfacet
        <n_vert lines of coordinates>
        <n_elem lines of 0-based vertex indices>
        <n_bfacet lines: elem local_facet piece_id>

    Blank lines and ``#`` comments are ignored.
    """
    lines = [s for s in (_strip(l) for l in text.splitlines()) if s]
    if not lines:
        raise MeshValidationError("empty mesh file")
    try:
        dim, n_vert, n_elem, n_bf = (int(t) for t in lines[0].split())
    except ValueError as exc:
        raise MeshValidationError(f"bad header line {lines[0]!r}") from exc
    if dim not in (1, 2):
        raise MeshValidationError(f"unsupported dimension {dim}")
    if len(lines) != 1 + n_vert + n_elem + n_bf:
        raise MeshValidationError(
            f"expected {1 + n_vert + n_elem + n_bf} data lines, found {len(lines)}"
        )
    body = lines[1:]
    try:
        vertices = np.array([[float(t) for t in l.split()] for l in body[:n_vert]])
        elements = np.array([[int(t) for t in l.split()] for l in body[n_vert:n_vert + n_elem]])
        bfacets = [tuple(int(t) for t in l.split()) for l in body[n_vert + n_elem:]]
    except ValueError as exc:
        raise MeshValidationError(f"malformed number in mesh file: {exc}") from exc
    if vertices.shape != (n_vert, dim) or elements.shape != (n_elem, dim + 1):
        raise MeshValidationError("wrong number of columns in vertex or element block")
    if elements.min() < 0 or elements.max() >= n_vert:
        raise MeshValidationError("element references a vertex index out of range")

    meas = _measures(vertices, elements)
    bad = np.flatnonzero(~(meas > 0))
    if len(bad):
        raise MeshValidationError(
            f"element {bad[0]} is inverted or degenerate (measure {meas[bad[0]]:.3e})",
            element=int(bad[0]),
        )
    _check_conforming(dim, elements, bfacets)

    proto = Mesh(dim, vertices, elements, None, 0, (), (False,) * dim)
    facets = {}
    for k, bf in enumerate(bfacets):
        if len(bf) != 3:
            raise MeshValidationError(f"boundary facet line {k} needs 3 integers", facet=k)
        e, j, pid = bf
        if not (0 <= e < n_elem and 0 <= j <= dim):
            raise MeshValidationError(f"boundary facet {k} references invalid facet ({e}, {j})", facet=k)
        facets.setdefault(pid, []).append((e, j))
    for pid, lst in facets.items():
        ref = proto.facet_normal(*lst[0])
        for k, f in enumerate(lst):
            if np.max(np.abs(proto.facet_normal(*f) - ref)) > NORMAL_TOL:
                raise MeshValidationError(
                    f"boundary piece {pid}: facet {f} normal differs from the piece normal",
                    element=f[0],
                    facet=f[1],
                )
    pieces = _group_pieces(proto.facet_normal, facets)
    return _make_mesh(dim, vertices, elements, pieces, (False,) * dim)


def _facet_keys(dim, elements):
    """Map facet vertex sets to lists of (element, local facet)."""
    keys = {}
    for e, el in enumerate(elements):
        for j in range(dim + 1):
            key = tuple(sorted(int(el[i]) for i in range(dim + 1) if i != j))
            keys.setdefault(key, []).append((e, j))
    return keys


def _check_conforming(dim, elements, bfacets):
    keys = _facet_keys(dim, elements)
    for key, owners in keys.items():
        if len(owners) > 2:
            raise MeshValidationError(
                f"non-conforming mesh: facet {key} shared by {len(owners)} elements",
                element=owners[2][0],
            )
    exterior = {owners[0] for owners in keys.values() if len(owners) == 1}
    listed = set()
    for k, bf in enumerate(bfacets):
        f = (bf[0], bf[1])
        if f not in exterior:
            raise MeshValidationError(f"boundary facet {k} {f} is not on the boundary", element=bf[0], facet=k)
        if f in listed:
            raise MeshValidationError(f"boundary facet {f} listed twice", element=bf[0], facet=k)
        listed.add(f)
    missing = exterior - listed
    if missing:
        f = min(missing)
        raise MeshValidationError(f"boundary facet {f} has no piece assignment", element=f[0], facet=f[1])


def write_mesh(mesh):
    """Serialize a non-periodic mesh in the text format read by load_polygon_mesh."""
    bf = [(e, j, p.id) for p in mesh.boundary_pieces for e, j in p.facets]
    out = [f"{mesh.dim} {mesh.n_vert} {mesh.n_elem} {len(bf)}"]
    out += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    out += [" ".join(str(int(i)) for i in el) for el in mesh.elements]
    out += [f"{e} {j} {p}" for e, j, p in bf]
    return "\n".join(out) + "\n"


def refine_uniform(mesh):
    """Split intervals in two and triangles in four (edge midpoints)."""
    if mesh.dim == 1:
        return _refine_1d(mesh)
    return _refine_2d(mesh)


def _refine_1d(mesh):
    nv, ne = mesh.n_vert, mesh.n_elem
    mids = 0.5 * (mesh.vertices[mesh.elements[:, 0]] + mesh.vertices[mesh.elements[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])
    m = nv + np.arange(ne)
    elements = np.empty((2 * ne, 2), dtype=np.int64)
    elements[0::2] = np.column_stack([mesh.elements[:, 0], m])
    elements[1::2] = np.column_stack([m, mesh.elements[:, 1]])
    parents = np.vstack([np.column_stack([np.arange(nv)] * 2), mesh.elements])
    pieces = []
    for p in mesh.boundary_pieces:
        facets = tuple((2 * e + 1, 0) if j == 0 else (2 * e, 1) for e, j in p.facets)
        pieces.append(BoundaryPiece(p.id, p.normal, facets))
    return _make_mesh(1, vertices, elements, pieces, mesh.periodic, parents)


# children of facet j of the parent: list of (child offset, child local facet)
_TRI_FACET_CHILDREN = {0: ((1, 0), (2, 0)), 1: ((0, 1), (2, 1)), 2: ((0, 2), (1, 2))}


def _refine_2d(mesh):
    nv = mesh.n_vert
    el = mesh.elements
    edge_pairs = np.vstack([el[:, [0, 1]], el[:, [1, 2]], el[:, [2, 0]]])
    edge_pairs.sort(axis=1)
    uniq, inv = np.unique(edge_pairs, axis=0, return_inverse=True)
    inv = inv.ravel()
    ne = len(el)
    m01, m12, m20 = (nv + inv[k * ne:(k + 1) * ne] for k in range(3))
    mids = 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])
    v0, v1, v2 = el[:, 0], el[:, 1], el[:, 2]
    children = np.stack(
        [
            np.column_stack([v0, m01, m20]),
            np.column_stack([m01, v1, m12]),
            np.column_stack([m20, m12, v2]),
            np.column_stack([m01, m12, m20]),
        ],
        axis=1,
    )
    elements = children.reshape(-1, 3)
    parents = np.vstack([np.column_stack([np.arange(nv)] * 2), uniq])
    pieces = []
    for p in mesh.boundary_pieces:
        facets = tuple((4 * e + c, cj) for e, j in p.facets for c, cj in _TRI_FACET_CHILDREN[j])
        pieces.append(BoundaryPiece(p.id, p.normal, facets))
    return _make_mesh(2, vertices, elements, pieces, mesh.periodic, parents)


def domain_measure(mesh):
    return float(mesh.element_measures().sum())


def describe(mesh):
    """Short human readable summary (used by the ``mesh-info`` command)."""
    lines = [
        f"dim            {mesh.dim}",
        f"vertices       {mesh.n_vert}",
        f"elements       {mesh.n_elem}",
        f"dofs           {mesh.n_dof}",
        f"periodic       {mesh.periodic}",
        f"measure        {domain_measure(mesh):.12g}",
        f"pieces         {len(mesh.boundary_pieces)}",
    ]
    for p in mesh.boundary_pieces:
        n = ", ".join(f"{c:.6g}" for c in p.normal)
        lines.append(f"  piece {p.id}: {len(p.facets)} facets, normal ({n})")
    return "\n".join(lines)


def prolongation(coarse, fine):
    """Sparse P1 interpolation matrix from ``coarse`` dofs to ``fine = refine_uniform(coarse)`` dofs."""
    if fine.vertex_parents is None or fine.vertex_parents.max() >= coarse.n_vert:
        raise ValueError("fine mesh was not produced by refining the coarse mesh")
    rep = np.full(fine.n_dof, -1)
    order = np.arange(fine.n_vert)[::-1]
    rep[fine.dof_map[order]] = order
    par = coarse.dof_map[fine.vertex_parents[rep]]
    rows = np.repeat(np.arange(fine.n_dof), 2)
    P = sp.csr_matrix((np.full(2 * fine.n_dof, 0.5), (rows, par.ravel())),
                      shape=(fine.n_dof, coarse.n_dof))
    return P
