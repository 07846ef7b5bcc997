import numpy as np
import pytest

from lowrank_vlasov.fem import assemble_operator_set, assemble_mass
from lowrank_vlasov.field import ElectricField, update_field_mass
from lowrank_vlasov.mesh import build_interval_mesh
from lowrank_vlasov.oracle import (
    CharacteristicsSolution,
    FullGalerkin,
    fbar,
    full_galerkin_step,
    landau_f0,
    landau_terms,
    phi,
)


def test_phi_values_and_smoothness():
    assert phi(0.0) == 1.0
    assert phi(1.0) == 0.0 and phi(-1.0) == 0.0
    assert phi(0.5) == 0.5
    assert phi(1.5) == 0.0
    h = 1e-7
    for z in (-1.0, 1.0):
        assert abs(phi(z + h) - phi(z - h)) / (2 * h) < 1e-6


def test_fbar_center_tracking():
    sol = CharacteristicsSolution()
    xc, vc, E = np.array(sol.x_center), np.array(sol.v_center), np.array(sol.E)
    assert fbar(0.0, xc, vc) == 1.0
    assert fbar(0.0, xc, vc + [0.6, 0.0]) == 0.0
    t = 0.25
    x = xc + vc * t - 0.5 * E * t * t
    v = vc - E * t
    assert fbar(t, x, v, sol) == pytest.approx(1.0, abs=1e-14)
    # the bump placed to the right of the domain, written out as a product of bumps
    right = CharacteristicsSolution(x_center=(0.5 + 0.2, 0.1))
    assert right(0.0, np.array([0.7, 0.1]), np.array([2.0, 0.0])) == 1.0
    rng = np.random.default_rng(0)
    for _ in range(20):
        t = rng.uniform(0, 0.5)
        x, v = rng.uniform(-1, 1, 2), rng.uniform(-3, 3, 2)
        expect = (phi((x[0] - v[0] * t - 0.7) / 0.2) * phi((x[1] - v[1] * t - 2 * t * t - 0.1) / 0.2)
                  * phi((v[0] - 2) / 0.5) * phi((v[1] + 4 * t) / 0.5))
        assert right(t, x, v) == pytest.approx(expect, abs=1e-15)


def _pde_residual(sol, t, x, v, h=1e-5):
    E = np.array(sol.E)
    dt = (sol(t + h, x, v) - sol(t - h, x, v)) / (2 * h)
    res = dt
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        res = res + v[k] * (sol(t, x + e, v) - sol(t, x - e, v)) / (2 * h)
        res = res - E[k] * (sol(t, x, v + e) - sol(t, x, v - e)) / (2 * h)
    return res


def test_fbar_solves_transport_equation():
    sol = CharacteristicsSolution()
    rng = np.random.default_rng(3)
    n = 1000
    E = np.array(sol.E)
    # points pushed forward from inside the initial support, away from the kinks at |z| = 1
    x0 = np.array(sol.x_center) + sol.sigma_x * rng.uniform(-0.95, 0.95, (n, 2))
    v0 = np.array(sol.v_center) + sol.sigma_v * rng.uniform(-0.95, 0.95, (n, 2))
    t = rng.uniform(0.0, 0.5, n)[:, None]
    x = x0 + v0 * t - 0.5 * E * t ** 2
    v = v0 - E * t
    t = t[:, 0]
    res = np.array([_pde_residual(sol, *a) for a in zip(t, x, v)])
    assert np.max(np.abs(res)) < 1e-6
    assert np.all(sol(t, x, v) > 0)


def test_fbar_is_separable():
    sol = CharacteristicsSolution()
    g1, g2 = sol.factors
    rng = np.random.default_rng(4)
    t = 0.2
    x = rng.uniform(-0.9, -0.3, (50, 2))
    v = rng.uniform(1.2, 2.8, (50, 2)) * [1, 0] + rng.uniform(-1.2, 0.0, (50, 2)) * [0, 1]
    np.testing.assert_allclose(sol(t, x, v), g1(t, x[:, 0], v[:, 0]) * g2(t, x[:, 1], v[:, 1]), atol=0)
    # cross ratio f(a1,b1) f(a2,b2) = f(a1,b2) f(a2,b1) for separable f
    a, b = (x[:, 0], v[:, 0]), (x[:, 1], v[:, 1])
    f = lambda i, j: g1(t, a[0][i], a[1][i]) * g2(t, b[0][j], b[1][j])  # noqa: E731
    i, j = np.arange(25), np.arange(25, 50)
    np.testing.assert_allclose(f(i, i) * f(j, j), f(i, j) * f(j, i), atol=1e-15)


def test_landau_initial_data():
    assert landau_f0(np.array([0.0, 0.0]), np.array([0.0, 0.0])) == pytest.approx(1.02 / (2 * np.pi))
    assert landau_f0(np.array([0.0]), np.array([0.0])) == pytest.approx(1.01 / np.sqrt(2 * np.pi))
    x = build_interval_mesh(0, 4 * np.pi, 64, periodic=True)
    v = build_interval_mesh(-8, 8, 256, periodic=True)
    gx, gv = landau_terms(x, v)
    Mx, Mv = assemble_mass(x), assemble_mass(v)
    total = (np.ones(x.n_dof) @ Mx @ gx) @ (np.ones(v.n_dof) @ Mv @ gv)
    assert float(total) == pytest.approx(4 * np.pi, rel=1e-5)


@pytest.fixture(scope="module")
def small_ops():
    ops = assemble_operator_set(build_interval_mesh(0, 4 * np.pi, 10, periodic=True),
                                build_interval_mesh(-3, 3, 10, periodic=True))
    update_field_mass(ops, ElectricField.from_constant(ops.x_mesh, [0.7]))
    return ops


def test_full_galerkin_zero_and_mass(small_ops):
    F0 = np.zeros((10, 10))
    np.testing.assert_array_equal(full_galerkin_step(F0, small_ops, None, 0.01), 0.0)
    x, v = small_ops.x_mesh.dof_coords[:, 0], small_ops.v_mesh.dof_coords[:, 0]
    F = np.outer(1 + 0.3 * np.cos(x / 2), np.exp(-v ** 2))
    one = np.ones(10)
    mass = lambda F: one @ small_ops.Mx @ F @ small_ops.Mv @ one  # noqa: E731
    m0 = mass(F)
    G = FullGalerkin(small_ops)
    for i in range(20):
        F2 = G.step(F, 0.01 * i, 0.01)
        assert abs(mass(F2) - mass(F)) < 1e-12 * abs(m0)
        F = F2


def test_full_galerkin_size_guard():
    ops = assemble_operator_set(build_interval_mesh(0, 1, 80, periodic=True),
                                build_interval_mesh(0, 1, 80, periodic=True))
    with pytest.raises(ValueError):
        FullGalerkin(ops)
