"""
Self-consistent electric field: density from a low-rank state, periodic
Poisson solve, elementwise gradient, and the field-weighted masses.
"""

from __future__ import annotations

from dataclasses import dataclass
import weakref

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .exceptions import GaugeError
from .fem import assemble_mass, assemble_stiffness


@dataclass(frozen=True, eq=False)
class ElectricField:
    """Per-element constant field vectors, shape ``(n_elem, dim)``."""

    values: np.ndarray
    constant: np.ndarray | None = None

    @classmethod
    def from_constant(cls, mesh, E):
        E = np.asarray(E, dtype=float).reshape(mesh.dim)
        return cls(np.tile(E, (mesh.n_elem, 1)), E)

    @classmethod
    def zero(cls, mesh):
        return cls(np.zeros((mesh.n_elem, mesh.dim)))


def compute_density(state, Mv, rho_b):
    """P1 coefficients of ``rho = rho_b - int f dv``.

    Returns ``(rho, n)`` where ``n`` holds the coefficients of ``int f dv``.
    """
    w = state.V.T @ (Mv @ np.ones(Mv.shape[0]))
    nf = state.X @ (state.S @ w)
    return rho_b - nf, nf


def density_mean(x_mesh, Mx, rho):
    return float(np.ones(Mx.shape[0]) @ (Mx @ rho)) / float(x_mesh.element_measures().sum())


class PoissonSolver:
    """P1 Poisson solver on a fully periodic mesh with mean-zero potential.

    The stiffness system is bordered by one Lagrange multiplier row
    ``1^T M`` and factorized once.
    """

    def __init__(self, x_mesh):
        if not all(x_mesh.periodic):
            raise GaugeError(
                "Poisson coupling is only available on fully periodic spatial meshes"
            )
        self.mesh = x_mesh
        self.M = assemble_mass(x_mesh)
        K = assemble_stiffness(x_mesh)
        c = self.M @ np.ones(x_mesh.n_dof)
        A = sp.bmat([[K, c[:, None]], [c[None, :], None]], format="csc")
        self._lu = splu(A)
        self._measure = float(c.sum())
        self._c = c

    def solve(self, rho):
        rho = np.asarray(rho, dtype=float)
        rho = rho - (self._c @ rho) / self._measure
        b = np.append(self.M @ rho, 0.0)
        return self._lu.solve(b)[:-1]


_solvers = weakref.WeakKeyDictionary()


def poisson_solver(x_mesh):
    solver = _solvers.get(x_mesh)
    if solver is None:
        solver = _solvers[x_mesh] = PoissonSolver(x_mesh)
    return solver


def solve_poisson(x_mesh, rho):
    """Solve ``-Laplace(phi) = rho`` (periodic, mean-free phi)."""
    return poisson_solver(x_mesh).solve(rho)


def compute_e_field(x_mesh, phi):
    """``E = -grad(phi)`` elementwise."""
    g = x_mesh.element_gradients()
    vals = -np.einsum("eid,ei->ed", g, np.asarray(phi)[x_mesh.element_dofs])
    return ElectricField(vals)


def electric_energy(E, x_mesh):
    return 0.5 * float(np.sum(np.sum(E.values ** 2, axis=1) * x_mesh.element_measures()))


def update_field_mass(ops, E):
    """Replace ``ops.Mx_E`` with the masses weighted by ``E_k``."""
    ops.set_field_values(E.values)


def self_consistent_field(state, ops, rho_b):
    rho, _ = compute_density(state, ops.Mv, rho_b)
    phi = solve_poisson(ops.x_mesh, rho)
    return compute_e_field(ops.x_mesh, phi)
