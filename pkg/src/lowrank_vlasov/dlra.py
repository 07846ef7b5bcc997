"""
Dynamical low-rank time stepping for the Vlasov equation.

The distribution is kept as ``F = X S V^T`` with ``X^T Mx X = I`` and
``V^T Mv V = I``. Two integrators are provided: the projector-splitting
step (fixed rank, K -> S backward -> L) and the rank-adaptive
unconventional step (independent K and L, augmented bases, forward S,
truncation).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import RankDeficientError
from .inflow import gs_matrix, gv_matrix, gx_matrix
from .linalg import integrate, m_orthonormalize, svd_truncate
from .field import update_field_mass

ORTHO_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class LowRankState:
    X: np.ndarray
    S: np.ndarray
    V: np.ndarray
    t: float = 0.0

    @property
    def rank(self):
        return self.S.shape[0]

    def dense(self):
        return self.X @ self.S @ self.V.T


@dataclass(frozen=True)
class StepConfig:
    dt: float
    delta: float = 0.0
    eps: float = 0.0
    r_max: int = 40
    substeps: int = 1
    integrator: str = "psi"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.eps < 0:
            raise ValueError(f"eps must be nonnegative, got {self.eps}")
        if self.integrator not in ("psi", "rauc"):
            raise ValueError(f"unknown integrator {self.integrator!r}")


def _proj(A, Y):
    return Y.T @ (A @ Y)


@dataclass(eq=False)
class ProjectedX:
    """``X^T A X`` for the spatial operators."""

    Tx: list
    Mx_E: list
    Mx_bnd: list

    @classmethod
    def build(cls, ops, X):
        return cls(
            [_proj(A, X) for A in ops.Tx],
            [_proj(A, X) for A in ops.Mx_E],
            [_proj(A, X) for A in ops.Mx_bnd],
        )


@dataclass(eq=False)
class ProjectedV:
    """``V^T A V`` for the velocity operators."""

    Mv_k: list
    Tv: list
    Mv_half: list

    @classmethod
    def build(cls, ops, V):
        return cls(
            [_proj(A, V) for A in ops.Mv_k],
            [_proj(A, V) for A in ops.Tv],
            [_proj(A, V) for A in ops.Mv_half],
        )


def _check_rows(A, n, what):
    if A.shape[0] != n:
        raise ValueError(f"{what} has {A.shape[0]} rows, expected {n}")


def k_rhs(K, V, ops, inflow, delta, pv=None):
    """Time derivative of ``K = X S`` with ``V`` frozen."""
    _check_rows(K, ops.Mx.shape[0], "K")
    _check_rows(V, ops.Mv.shape[0], "V")
    pv = pv or ProjectedV.build(ops, V)
    R = np.zeros_like(K, dtype=float)
    for k in range(ops.dim):
        R -= ops.Tx[k] @ K @ pv.Mv_k[k].T - ops.Mx_E[k] @ K @ pv.Tv[k].T
    if delta:
        R -= delta * (ops.Cx @ K)
    for Bx, Hv in zip(ops.Mx_bnd, pv.Mv_half):
        R += Bx @ K @ Hv.T
    if inflow is not None:
        R -= gx_matrix(inflow, V)
    return ops.Mx_chol.solve(R)


def l_rhs(L, X, ops, inflow, delta, px=None):
    """Time derivative of ``L = V S^T`` with ``X`` frozen."""
    _check_rows(L, ops.Mv.shape[0], "L")
    _check_rows(X, ops.Mx.shape[0], "X")
    px = px or ProjectedX.build(ops, X)
    R = np.zeros_like(L, dtype=float)
    for k in range(ops.dim):
        R -= ops.Mv_k[k] @ L @ px.Tx[k].T - ops.Tv[k] @ L @ px.Mx_E[k].T
    if delta:
        R -= delta * (ops.Cv @ L)
    for Hv, Bx in zip(ops.Mv_half, px.Mx_bnd):
        R += Hv @ L @ Bx.T
    if inflow is not None:
        R -= gv_matrix(inflow, X)
    return ops.Mv_chol.solve(R)


def s_rhs(S, X, V, ops, inflow, direction="backward", px=None, pv=None):
    """Core equation; ``forward`` is the exact negation of ``backward``."""
    if direction not in ("backward", "forward"):
        raise ValueError(f"direction must be 'backward' or 'forward', got {direction!r}")
    if S.shape != (X.shape[1], V.shape[1]):
        raise ValueError(f"S has shape {S.shape}, bases have ranks {X.shape[1]}, {V.shape[1]}")
    px = px or ProjectedX.build(ops, X)
    pv = pv or ProjectedV.build(ops, V)
    R = np.zeros_like(S, dtype=float)
    for k in range(ops.dim):
        R += px.Tx[k] @ S @ pv.Mv_k[k].T - px.Mx_E[k] @ S @ pv.Tv[k].T
    for Bx, Hv in zip(px.Mx_bnd, pv.Mv_half):
        R -= Bx @ S @ Hv.T
    if inflow is not None:
        R += gs_matrix(inflow, X, V)
    return R if direction == "backward" else -R


def _inflow_at(provider, t):
    return provider(t) if provider is not None else None


def _begin(provider, field_update, state, ops, dt):
    if field_update is not None:
        update_field_mass(ops, field_update(state))
    if provider is not None and hasattr(provider, "begin_step"):
        provider.begin_step(state.t, dt)


def _orth(A, factor, mode, substep):
    try:
        return m_orthonormalize(A, factor, mode=mode)
    except RankDeficientError as exc:
        raise RankDeficientError(str(exc), column=exc.column, substep=substep) from exc


def k_substep(state, ops, provider, cfg):
    pv = ProjectedV.build(ops, state.V)
    rhs = lambda s, K: k_rhs(K, state.V, ops, _inflow_at(provider, s), cfg.delta, pv)  # noqa: E731
    return integrate(rhs, state.X @ state.S, state.t, state.t + cfg.dt, cfg.substeps)


def l_substep(X, V, S, t, ops, provider, cfg):
    px = ProjectedX.build(ops, X)
    rhs = lambda s, L: l_rhs(L, X, ops, _inflow_at(provider, s), cfg.delta, px)  # noqa: E731
    return integrate(rhs, V @ S.T, t, t + cfg.dt, cfg.substeps)


def s_substep(S, X, V, t, ops, provider, cfg, direction):
    px = ProjectedX.build(ops, X)
    pv = ProjectedV.build(ops, V)

    def rhs(s, Y):
        return s_rhs(Y, X, V, ops, _inflow_at(provider, s), direction, px, pv)

    return integrate(rhs, S, t, t + cfg.dt, cfg.substeps)


def psi_step(state, ops, provider, cfg, field_update=None, report=None):
    """One projector-splitting step; the rank is unchanged."""
    t0, t1 = state.t, state.t + cfg.dt
    _begin(provider, field_update, state, ops, cfg.dt)
    K1 = k_substep(state, ops, provider, cfg)
    X1, S_hat = _orth(K1, ops.Mx_chol, "complete", "K")
    S_tilde = s_substep(S_hat, X1, state.V, t0, ops, provider, cfg, "backward")
    L1 = l_substep(X1, state.V, S_tilde, t0, ops, provider, cfg)
    V1, S1T = _orth(L1, ops.Mv_chol, "complete", "L")
    new = LowRankState(X1, S1T.T, V1, t1)
    if report is not None:
        report.update(rank=new.rank, dropped=0)
    return ensure_orthonormal(new, ops)


def _augment(B0, B1, factor, substep, report):
    A = np.hstack([B0, B1])
    try:
        Q, R = m_orthonormalize(A, factor, mode="strict")
    except RankDeficientError:
        Q, R = m_orthonormalize(A, factor, mode="drop")
        if report is not None:
            report["dropped"] = report.get("dropped", 0) + A.shape[1] - Q.shape[1]
            report.setdefault("dropped_in", []).append(substep)
    return Q, R[:, : B0.shape[1]]


def rauc_step(state, ops, provider, cfg, field_update=None, report=None):
    """One rank-adaptive unconventional step."""
    t0, t1 = state.t, state.t + cfg.dt
    _begin(provider, field_update, state, ops, cfg.dt)
    if report is not None:
        report["dropped"] = 0
    K1 = k_substep(state, ops, provider, cfg)
    L1 = l_substep(state.X, state.V, state.S, t0, ops, provider, cfg)
    X_hat, Rx = _augment(state.X, K1, ops.Mx_chol, "K", report)
    V_hat, Rv = _augment(state.V, L1, ops.Mv_chol, "L", report)
    S_hat = Rx @ state.S @ Rv.T
    S_hat = s_substep(S_hat, X_hat, V_hat, t0, ops, provider, cfg, "forward")
    Qx, sigma, Qv, r1 = svd_truncate(S_hat, cfg.eps, cfg.r_max)
    new = LowRankState(X_hat @ Qx, np.diag(sigma), V_hat @ Qv, t1)
    if report is not None:
        report.update(rank=r1, augmented=S_hat.shape)
    return ensure_orthonormal(new, ops)


def step(state, ops, provider, cfg, field_update=None, report=None):
    fn = psi_step if cfg.integrator == "psi" else rauc_step
    return fn(state, ops, provider, cfg, field_update, report)


def orthonormality_error(Y, M):
    return float(np.max(np.abs(Y.T @ (M @ Y) - np.eye(Y.shape[1])))) if Y.size else 0.0


def ensure_orthonormal(state, ops, tol=ORTHO_TOL):
    """Re-orthonormalize the factors if their drift exceeds ``tol``."""
    if orthonormality_error(state.X, ops.Mx) <= tol and orthonormality_error(state.V, ops.Mv) <= tol:
        return state
    X, Rx = m_orthonormalize(state.X, ops.Mx_chol, mode="complete")
    V, Rv = m_orthonormalize(state.V, ops.Mv_chol, mode="complete")
    return replace(state, X=X, S=Rx @ state.S @ Rv.T, V=V)


def _unit_constant(M):
    one = np.ones((M.shape[0], 1))
    return one / np.sqrt(float(one[:, 0] @ (M @ one[:, 0])))


def compress_initial(f0, r, ops, t=0.0):
    """Best rank-``r`` approximation of a separable function in the mass-weighted norm.

    Returns a state of rank ``min(r, available rank)``; a zero ``f0`` gives a
    rank-1 zero state.
    """
    if r < 1:
        raise ValueError(f"rank must be >= 1, got {r}")
    zero = LowRankState(_unit_constant(ops.Mx), np.zeros((1, 1)), _unit_constant(ops.Mv), t)
    if f0.n_terms == 0 or not np.any(f0.gx) or not np.any(f0.gv):
        return zero
    Qx, Rx = m_orthonormalize(f0.gx, ops.Mx_chol, mode="drop")
    Qv, Rv = m_orthonormalize(f0.gv, ops.Mv_chol, mode="drop")
    core = Rx @ Rv.T
    U, sigma, W, _ = svd_truncate(core, 0.0, min(core.shape))
    avail = int(np.sum(sigma > 1e-14 * sigma[0])) if sigma[0] > 0 else 0
    if avail == 0:
        return zero
    k = min(r, avail)
    return LowRankState(Qx @ U[:, :k], np.diag(sigma[:k]), Qv @ W[:, :k], t)


def pad_rank(state, r, ops, seed=0):
    """Extend the bases with random orthonormal directions and zero core entries."""
    extra = r - state.rank
    if extra <= 0:
        return state
    rng = np.random.default_rng(seed)
    X = _extend(state.X, extra, ops.Mx, ops.Mx_chol, rng)
    V = _extend(state.V, extra, ops.Mv, ops.Mv_chol, rng)
    S = np.zeros((r, r))
    S[: state.rank, : state.rank] = state.S
    return LowRankState(X, S, V, state.t)


def _extend(Y, extra, M, factor, rng):
    Z = rng.standard_normal((Y.shape[0], extra))
    Z -= Y @ (Y.T @ (M @ Z))
    Z -= Y @ (Y.T @ (M @ Z))
    Q, _ = m_orthonormalize(Z, factor, mode="strict")
    return np.hstack([Y, Q])


def mass(state, ops):
    wx = np.ones(ops.Mx.shape[0]) @ (ops.Mx @ state.X)
    wv = np.ones(ops.Mv.shape[0]) @ (ops.Mv @ state.V)
    return float(wx @ state.S @ wv)
