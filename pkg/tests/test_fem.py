import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from shapely.geometry import Polygon, box

from lowrank_vlasov.fem import (
    assemble_boundary_mass,
    assemble_cip,
    assemble_halfspace_mass,
    assemble_mass,
    assemble_operator_set,
    assemble_stiffness,
    assemble_transport,
    ElementWeightedMass,
    simplex_moment,
)
from lowrank_vlasov.mesh import build_interval_mesh, build_rect_tri_mesh, build_triangle_mesh

# tensor Gauss rule collapsed onto the reference triangle (independent of the package rules)
_g, _w = np.polynomial.legendre.leggauss(8)
_g, _w = 0.5 * (_g + 1), 0.5 * _w
_U, _V = np.meshgrid(_g, _g, indexing="ij")
_REF_PTS = np.column_stack([_U.ravel(), (_V * (1 - _U)).ravel()])
_REF_W = (np.outer(_w, _w) * (1 - _U)).ravel()


def _triangle_rule(a, b, c):
    J = np.column_stack([b - a, c - a])
    return a + _REF_PTS @ J.T, _REF_W * abs(np.linalg.det(J))


def _hat_values(tri, pts):
    """Barycentric coordinates of ``pts`` with respect to ``tri`` (3, 2)."""
    A = np.vstack([tri.T, np.ones(3)])
    return np.linalg.solve(A, np.vstack([pts.T, np.ones(len(pts))])).T


def _halfspace_oracle_2d(mesh, n):
    n = np.asarray(n, dtype=float) / np.linalg.norm(n)
    lo, hi = mesh.box
    R = 10 * float(np.max(hi - lo))
    t = np.array([-n[1], n[0]])
    half = Polygon([R * t, R * t - R * n, -R * t - R * n, -R * t])
    M = np.zeros((mesh.n_dof, mesh.n_dof))
    for e, el in enumerate(mesh.elements):
        tri = mesh.vertices[el]
        clip = Polygon(tri).intersection(half)
        if clip.is_empty or clip.area == 0:
            continue
        ring = np.asarray(clip.exterior.coords)[:-1]
        for k in range(1, len(ring) - 1):
            pts, w = _triangle_rule(ring[0], ring[k], ring[k + 1])
            phi = _hat_values(tri, pts)
            local = np.einsum("q,q,qi,qj->ij", w, pts @ n, phi, phi)
            dofs = mesh.dof_map[el]
            M[np.ix_(dofs, dofs)] += local
    return M


def test_mass_moments():
    m = build_triangle_mesh(6)
    M = assemble_mass(m)
    x = m.dof_coords
    one = np.ones(m.n_dof)
    assert one @ M @ one == pytest.approx(0.5, rel=1e-13)
    # int x dx over the triangle with corners (-1/2,-1/2), (1/2,0), (-1/2,1/2) is -1/12
    assert one @ M @ x[:, 0] == pytest.approx(-1 / 12, abs=1e-14)
    np.testing.assert_allclose(M.toarray(), M.toarray().T)


def test_weighted_mass_quadratic_weight_exact():
    m = build_rect_tri_mesh((-1, 2), (0, 1), 3, 2)
    M = assemble_mass(m, lambda p: p[..., 0] ** 2)
    one = np.ones(m.n_dof)
    assert one @ M @ one == pytest.approx(3.0, rel=1e-13)  # int_{-1}^{2} x^2 dx
    c = np.arange(m.n_elem, dtype=float)
    np.testing.assert_allclose(ElementWeightedMass(m)(c).toarray(), assemble_mass(m, c).toarray(), atol=1e-15)


def test_simplex_moment():
    assert simplex_moment((1, 0, 0)) == pytest.approx(1 / 3)
    assert simplex_moment((1, 1, 0)) == pytest.approx(1 / 12)
    assert simplex_moment((2, 0)) == pytest.approx(1 / 3)


def test_transport_and_stiffness_on_affine_functions():
    m = build_rect_tri_mesh((0, 2), (0, 1), 5, 4)
    x, y = m.dof_coords.T
    one = np.ones(m.n_dof)
    T0, T1 = assemble_transport(m, 0), assemble_transport(m, 1)
    np.testing.assert_allclose(T0 @ one, 0.0, atol=1e-14)
    assert one @ T0 @ x == pytest.approx(2.0)
    assert x @ T1 @ y == pytest.approx(2.0)  # int x dxdy over [0,2]x[0,1]
    K = assemble_stiffness(m)
    u = 2 * x - 3 * y
    assert u @ K @ u == pytest.approx(13 * 2.0)
    with pytest.raises(ValueError):
        assemble_transport(m, 2)


def test_periodic_transport_is_skew():
    m = build_rect_tri_mesh((0, 1), (0, 1), 4, 4, (True, True))
    T = assemble_transport(m, 1).toarray()
    np.testing.assert_allclose(T, -T.T, atol=1e-15)


def test_boundary_mass_piece_lengths():
    m = build_triangle_mesh(8)
    expected = [np.sqrt(1.25), np.sqrt(1.25), 1.0]
    for p, L in zip(m.boundary_pieces, expected):
        B = assemble_boundary_mass(m, p)
        one = np.ones(m.n_dof)
        assert one @ B @ one == pytest.approx(L, rel=1e-13)
    m1 = build_interval_mesh(0, 1, 4)
    B = assemble_boundary_mass(m1, m1.boundary_pieces[1])
    assert B.nnz == 1 and B[m1.n_dof - 1, m1.n_dof - 1] == 1.0


@pytest.mark.parametrize("normal", [(1.0, 0.0), (0.0, -1.0), (0.5, -1.0), (0.447, 0.894), (-1.0, 0.3)])
def test_halfspace_mass_matches_clipping_oracle(normal):
    m = build_rect_tri_mesh((-2, 2), (-2, 2), 5, 5, (True, True))
    got = assemble_halfspace_mass(m, normal).toarray()
    np.testing.assert_allclose(got, _halfspace_oracle_2d(m, normal), atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 2 * np.pi), st.integers(3, 6))
def test_halfspace_mass_property(theta, n):
    m = build_rect_tri_mesh((-1, 1), (-1, 1), n, n, (True, True))
    nrm = np.array([np.cos(theta), np.sin(theta)])
    Mh = assemble_halfspace_mass(m, nrm).toarray()
    np.testing.assert_allclose(Mh, _halfspace_oracle_2d(m, nrm), atol=1e-13)
    # the two half spaces add up to the full n.v weighted mass
    Mo = assemble_halfspace_mass(m, -nrm).toarray()
    full = assemble_mass(m, lambda p: p @ nrm).toarray()
    np.testing.assert_allclose(Mh - Mo, full, atol=1e-13)
    assert np.all(np.linalg.eigvalsh(Mh) <= 1e-14)


def test_halfspace_mass_1d():
    m = build_interval_mesh(-1.0, 1.0, 5, periodic=True)  # node at 0 is not a mesh vertex
    M = assemble_halfspace_mass(m, [1.0]).toarray()
    one = np.ones(m.n_dof)
    assert one @ M @ one == pytest.approx(-0.5)  # int_{-1}^0 v dv
    M = assemble_halfspace_mass(m, [-2.0]).toarray()
    assert one @ M @ one == pytest.approx(-0.5)


def _cip_oracle_nonperiodic(mesh):
    edges = {}
    for e, el in enumerate(mesh.elements):
        for j in range(3):
            key = tuple(sorted(np.delete(el, j)))
            edges.setdefault(key, []).append(e)
    grads = mesh.element_gradients()
    C = np.zeros((mesh.n_dof, mesh.n_dof))
    for (a, b), els in edges.items():
        if len(els) != 2:
            continue
        h = np.linalg.norm(mesh.vertices[a] - mesh.vertices[b])
        jump = np.zeros((mesh.n_dof, 2))
        for sgn, e in zip((1.0, -1.0), els):
            for i, v in enumerate(mesh.elements[e]):
                jump[mesh.dof_map[v]] += sgn * grads[e, i]
        C += h ** 3 * jump @ jump.T
    return C


def test_cip_matches_edge_loop():
    m = build_triangle_mesh(5)
    np.testing.assert_allclose(assemble_cip(m).toarray(), _cip_oracle_nonperiodic(m), atol=1e-14)


def test_cip_kernel_and_periodic_1d():
    m = build_rect_tri_mesh((0, 1), (0, 1), 4, 4, (True, True))
    C = assemble_cip(m)
    np.testing.assert_allclose(C @ np.ones(m.n_dof), 0.0, atol=1e-13)
    assert np.all(np.linalg.eigvalsh(C.toarray()) > -1e-12)
    # uniform periodic 1D: h^2 * sum over nodes of jump products, jump of hat i at node i is -2/h
    n, L = 6, 3.0
    h = L / n
    C1 = assemble_cip(build_interval_mesh(0, L, n, periodic=True)).toarray()
    assert C1[0, 0] == pytest.approx(h ** 2 * ((2 / h) ** 2 + 2 * (1 / h) ** 2))
    assert C1[0, 1] == pytest.approx(h ** 2 * (-2 * (2 / h) * (1 / h)))
    assert C1[0, 2] == pytest.approx(h ** 2 * (1 / h) ** 2)


def test_operator_set_velocity_moments():
    x = build_triangle_mesh(4)
    v = build_rect_tri_mesh((-2, 2), (-2, 2), 6, 6, (True, True))
    ops = assemble_operator_set(x, v)
    one = np.ones(v.n_dof)
    assert one @ ops.Mv_v2 @ one == pytest.approx(2 * 4 * 16 / 3)  # int |v|^2 over [-2,2]^2
    assert one @ ops.Mv_k[0] @ one == pytest.approx(0.0, abs=1e-13)
    assert ops.n_pieces == 3 and len(ops.Mv_half) == 3
    with pytest.raises(ValueError):
        assemble_operator_set(x, build_interval_mesh(0, 1, 3))
