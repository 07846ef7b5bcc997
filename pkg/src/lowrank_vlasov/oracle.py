"""
Reference solutions: the bump profile, the free-streaming solution under a
constant field, Landau initial data, and a dense Galerkin integrator for
tiny meshes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import rk3_step

MAX_DENSE_DOFS = 5000


def phi(z):
    """C^1 bump ``z^2 (2|z| - 3) + 1`` on ``[-1, 1]``, zero outside."""
    z = np.asarray(z, dtype=float)
    out = z * z * (2.0 * np.abs(z) - 3.0) + 1.0
    return np.where(np.abs(z) <= 1.0, out, 0.0)


@dataclass(frozen=True)
class CharacteristicsSolution:
    """Bump transported along the characteristics of a constant field.

    ``f(t, x, v) = f0(x - v t - E t^2 / 2, v + E t)`` with ``f0`` a product
    of bumps centred at ``x_center`` / ``v_center``.
    """

    E: tuple = (0.0, 4.0)
    sigma_x: float = 0.2
    sigma_v: float = 0.5
    x_center: tuple = (-0.7, 0.1)
    v_center: tuple = (2.0, 0.0)

    def factor(self, k):
        """Two-variable factor ``g_k(t, x_k, v_k)``; the solution is their product."""
        E, c, cv = self.E[k], self.x_center[k], self.v_center[k]
        sx, sv = self.sigma_x, self.sigma_v

        def g(t, xk, vk):
            x0 = xk - vk * t - 0.5 * E * t * t
            v0 = vk + E * t
            return phi((x0 - c) / sx) * phi((v0 - cv) / sv)

        return g

    @property
    def factors(self):
        return [self.factor(k) for k in range(len(self.E))]

    def __call__(self, t, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        out = 1.0
        for k, g in enumerate(self.factors):
            out = out * g(t, x[..., k], v[..., k])
        return out


def fbar(t, x, v, sol=None):
    return (sol or CharacteristicsSolution())(t, x, v)


def landau_f0(x, v, alpha=1e-2, k=0.5):
    """Perturbed Maxwellian; the dimension is taken from the last axis."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    d = v.shape[-1]
    maxw = np.exp(-0.5 * np.sum(v * v, axis=-1)) / (2.0 * np.pi) ** (d / 2)
    return maxw * (1.0 + alpha * np.sum(np.cos(k * x), axis=-1))


def landau_terms(x_mesh, v_mesh, alpha=1e-2, k=0.5):
    """Separable nodal representation (columns of gx, gv) of the Landau data."""
    xc = x_mesh.dof_coords
    vc = v_mesh.dof_coords
    d = x_mesh.dim
    gv = np.exp(-0.5 * np.sum(vc ** 2, axis=1)) / (2.0 * np.pi) ** (d / 2)
    gx = 1.0 + alpha * np.sum(np.cos(k * xc), axis=1)
    return gx[:, None], gv[:, None]


@dataclass(eq=False)
class FullGalerkin:
    """Dense full tensor Galerkin dynamics for tiny meshes."""

    ops: object
    delta: float = 0.0
    _dense: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        n = self.ops.Mx.shape[0] * self.ops.Mv.shape[0]
        if n > MAX_DENSE_DOFS:
            raise ValueError(f"dense oracle refuses {n} > {MAX_DENSE_DOFS} unknowns")
        o = self.ops
        D = lambda A: np.asarray(A.todense())  # noqa: E731
        self.Mx_inv = np.linalg.inv(D(o.Mx))
        self.Mv_inv = np.linalg.inv(D(o.Mv))
        self.Mx, self.Mv = D(o.Mx), D(o.Mv)
        self.Tx = [D(A) for A in o.Tx]
        self.Tv = [D(A) for A in o.Tv]
        self.Mv_k = [D(A) for A in o.Mv_k]
        self.Mx_E = [D(A) for A in o.Mx_E]
        self.Mx_bnd = [D(A) for A in o.Mx_bnd]
        self.Mv_half = [D(A) for A in o.Mv_half]
        self.Cx, self.Cv = D(o.Cx), D(o.Cv)

    def rhs(self, t, F, inflow=None):
        R = np.zeros_like(F)
        for k in range(len(self.Tx)):
            R -= self.Tx[k] @ F @ self.Mv_k[k].T - self.Mx_E[k] @ F @ self.Tv[k].T
        if self.delta:
            R -= self.delta * (self.Cx @ F @ self.Mv + self.Mx @ F @ self.Cv.T)
        for Bx, Bv in zip(self.Mx_bnd, self.Mv_half):
            R += Bx @ F @ Bv.T
        if inflow is not None:
            a = inflow(t) if callable(inflow) else inflow
            if a is not None:
                for bx, bv in zip(a.bx, a.bv):
                    R -= bx @ bv.T
        return self.Mx_inv @ R @ self.Mv_inv

    def step(self, F, t, dt, inflow=None):
        return rk3_step(lambda s, Y: self.rhs(s, Y, inflow), F, t, dt)


def full_galerkin_step(F, ops, inflow, dt, delta=0.0, t=0.0):
    """One RK3 step of the unprojected Galerkin system."""
    return FullGalerkin(ops, delta).step(F, t, dt, inflow)
