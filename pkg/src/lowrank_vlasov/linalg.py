"""
Linear algebra kernels: sparse products, sparse Cholesky, mass-weighted
orthonormalization, truncated SVD and the SSP-RK3 stepper.

Sparse matrices are ``scipy.sparse`` CSR matrices, dense matrices are 2D
``numpy`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .exceptions import NotPositiveDefiniteError, NumericalBlowupError, RankDeficientError

RANK_TOL = 1e-12


def spmm(A, B):
    """Sparse times dense product with a dimension check."""
    B = np.asarray(B)
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {B.shape}")
    return np.asarray(A @ B)


@dataclass(frozen=True, eq=False)
class CholeskyFactor:
    """``M = P L L^T P^T`` with ``perm`` such that ``M[perm][:, perm] = L L^T``."""

    L: sp.csc_matrix
    perm: np.ndarray
    _lu: object

    @property
    def n(self):
        return self.L.shape[0]

    def solve(self, b):
        return self._lu.solve(np.asarray(b, dtype=float))

    def mul_lt(self, A):
        """``L^T P^T A``."""
        return np.asarray(self.L.T @ np.asarray(A)[self.perm])

    def mul_pl(self, Y):
        """``P L Y``."""
        out = np.empty_like(Y, dtype=float)
        out[self.perm] = self.L @ Y
        return out

    def dense(self):
        Ld = self.L.toarray()
        full = np.empty_like(Ld)
        full[self.perm] = Ld
        return full  # P L


def cholesky(M, spd_check=True):
    """Sparse Cholesky factorization.

    SuperLU in symmetric mode without row pivoting computes
    ``M[p][:, p] = L_u U`` with ``U = D L_u^T``; the Cholesky factor is
    ``L_u D^{1/2}``.
    """
    M = sp.csc_matrix(M, dtype=float)
    if M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    if spd_check and abs(M - M.T).max() > 1e-12 * max(abs(M).max(), 1e-300):
        raise NotPositiveDefiniteError("matrix is not symmetric")
    try:
        lu = splu(
            M,
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options=dict(SymmetricMode=True),
        )
    except RuntimeError as exc:
        raise NotPositiveDefiniteError(f"factorization failed: {exc}") from exc
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise NotPositiveDefiniteError("symmetric factorization required row pivoting")
    d = lu.U.diagonal()
    if np.any(~(d > 0)):
        k = int(np.flatnonzero(~(d > 0))[0])
        raise NotPositiveDefiniteError(f"non-positive pivot {d[k]:.3e} at position {k}")
    L = sp.csc_matrix(lu.L @ sp.diags(np.sqrt(d)))
    return CholeskyFactor(L, np.argsort(lu.perm_c), lu)


def _fix_signs(Q, R):
    s = np.sign(np.diag(R))
    s[s == 0] = 1.0
    return Q * s, R * s[:, None]


def m_orthonormalize(A, M_factor, mode="strict"):
    """Orthonormalize the columns of ``A`` in the inner product of ``M``.

    Returns ``Q, R`` with ``Q R = A`` and ``Q^T M Q = I``. The QR is taken of
    ``L^T P^T A`` and transformed back with ``Q = M^{-1} P L Q_B``.

    mode
        ``"strict"``: raise RankDeficientError when a diagonal entry of R
        drops below ``1e-12 ||A||``.
        ``"complete"``: accept deficiency; the Householder Q still has
        orthonormal columns, so the factorization stays valid.
        ``"drop"``: pivoted QR, dependent directions are removed. Q then has
        ``k <= r`` columns and R is ``k x r`` (not triangular in general).
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != M_factor.n:
        raise ValueError(f"shape {A.shape} does not match mass matrix of size {M_factor.n}")
    B = M_factor.mul_lt(A)
    norm = np.linalg.norm(B, 2) if B.size else 0.0
    if mode == "drop":
        QB, R, piv = la.qr(B, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        k = int(np.sum(diag > RANK_TOL * norm)) if norm > 0 else 0
        k = max(k, 1)
        QB, R = QB[:, :k], R[:k]
        Rfull = np.empty_like(R)
        Rfull[:, piv] = R
        Q = M_factor.solve(M_factor.mul_pl(QB))
        return Q, Rfull
    QB, R = np.linalg.qr(B)
    QB, R = _fix_signs(QB, R)
    if mode == "strict":
        small = np.flatnonzero(np.diag(R) <= RANK_TOL * norm) if norm > 0 else np.arange(R.shape[0])
        if len(small):
            raise RankDeficientError(
                f"column {small[0]} is numerically dependent (|R_jj| <= {RANK_TOL} ||A||)",
                column=int(small[0]),
            )
    Q = M_factor.solve(M_factor.mul_pl(QB))
    return Q, R


def svd_truncate(S, eps, r_max):
    """SVD of ``S`` truncated to the smallest rank with tail energy below eps**2.

    The rank is clamped to ``[1, r_max]``.
    """
    S = np.asarray(S, dtype=float)
    Qx, sigma, QvT = np.linalg.svd(S, full_matrices=False)
    r1 = truncation_rank(sigma, eps)
    r1 = max(1, min(r1, int(r_max)))
    Qx, QvT = _svd_signs(Qx, QvT)
    return Qx[:, :r1], sigma[:r1], QvT[:r1].T, r1


def truncation_rank(sigma, eps):
    """Smallest r with ``sum(sigma[r:]**2) < eps**2`` (strict inequality)."""
    sigma = np.asarray(sigma, dtype=float)
    # tail[r] = sum_{i >= r} sigma_i^2, tail[len] = 0
    tail = np.concatenate([np.cumsum((sigma ** 2)[::-1])[::-1], [0.0]])
    ok = np.flatnonzero(tail < eps ** 2)
    return int(ok[0]) if len(ok) else len(sigma)


def _svd_signs(U, VT):
    # first nonzero entry of each left singular vector made nonnegative
    idx = np.argmax(np.abs(U) > 1e-14 * np.abs(U).max(axis=0, initial=0), axis=0)
    s = np.sign(U[idx, np.arange(U.shape[1])])
    s[s == 0] = 1.0
    return U * s, VT * s[:, None]


def rk3_step(rhs, Y, t, dt):
    """One Shu-Osher SSP-RK3 step of ``Y' = rhs(t, Y)``."""
    Y1 = Y + dt * rhs(t, Y)
    Y2 = 0.75 * Y + 0.25 * (Y1 + dt * rhs(t + dt, Y1))
    Yn = Y / 3.0 + 2.0 / 3.0 * (Y2 + dt * rhs(t + 0.5 * dt, Y2))
    if not np.all(np.isfinite(Yn)):
        raise NumericalBlowupError(f"non-finite values in RK3 step at t = {t:.6g}", t=t)
    return Yn


def integrate(rhs, Y, t0, t1, substeps=1):
    """Integrate over ``[t0, t1]`` with ``substeps`` RK3 steps."""
    h = (t1 - t0) / substeps
    for i in range(substeps):
        Y = rk3_step(rhs, Y, t0 + i * h, h)
    return Y
