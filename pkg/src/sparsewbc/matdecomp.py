"""Rank-revealing decompositions, orthonormal bases and pseudoinverses.

Every other module goes through :func:`rank_reveal` so that one relative
rank cutoff governs the whole pipeline.  Bases are returned with whatever
sign/ordering LAPACK produces; compare projectors (``Z @ Z.T``), never raw
bases.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, lapack

from .errors import InvalidMatrix, NotPositiveDefinite
from .options import DEFAULT_RANK_TOL

__all__ = [
    "RankRevealing",
    "rank_reveal",
    "null_basis",
    "range_basis",
    "pinv",
    "weighted_pinv",
]


@dataclass(frozen=True)
class RankRevealing:
    """Thin record of an SVD ``A = U diag(s) V^T`` cut at a relative rank.

    ``null_basis`` is ``None`` when the decomposition was requested without
    it (economy mode).
    """

    rank: int
    range_basis: np.ndarray
    null_basis: np.ndarray | None
    singular_values: np.ndarray
    row_basis: np.ndarray  # first `rank` right singular vectors, n x rank
    shape: tuple

    def pinv(self) -> np.ndarray:
        """Moore-Penrose inverse at the stored rank cutoff."""
        r = self.rank
        if r == 0:
            return np.zeros(self.shape[::-1])
        return (self.row_basis / self.singular_values[:r]) @ self.range_basis.T

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Minimum-norm least-squares solution of ``A x = b``."""
        r = self.rank
        if r == 0:
            return np.zeros(self.shape[1:] + np.shape(b)[1:])
        return self.row_basis @ ((self.range_basis.T @ b).T / self.singular_values[:r]).T


def _as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise InvalidMatrix(f"expected a 2-D matrix, got shape {A.shape}")
    if not np.isfinite(A).all():
        raise InvalidMatrix("matrix has non-finite entries")
    return A


def _svd(A: np.ndarray, full: bool):
    # LAPACK is fastest on the tall orientation; a C-ordered wide matrix
    # transposes into Fortran order without a copy.
    m, n = A.shape
    if m >= n:
        u, s, vt, info = lapack.dgesdd(A, compute_uv=1, full_matrices=int(full))
    else:
        ut, s, uT, info = lapack.dgesdd(A.T, compute_uv=1, full_matrices=int(full))
        u, vt = uT.T, ut.T
    if info != 0:
        u, s, vt = np.linalg.svd(A, full_matrices=full)
    return u, s, vt


def rank_reveal(A, tol: float = DEFAULT_RANK_TOL, *, with_null: bool = True, scale: float | None = None) -> RankRevealing:
    """Rank, orthonormal range/nullspace bases and singular values of `A`.

    Parameters
    ----------
    A : (m, n) array_like
        Finite matrix; zero rows or columns are allowed.
    tol : float
        Relative cutoff: ``s_i <= tol * s_max`` is treated as zero.
    with_null : bool
        Compute the full right basis so that ``null_basis`` is available.
        Economy mode is cheaper when only the range is needed.
    scale : float, optional
        Reference magnitude for the cutoff, ``tol * max(s_max, scale)``.
        Use it when `A` is a projection of a larger matrix, so that pure
        round-off is not mistaken for rank.

    Raises
    ------
    InvalidMatrix
        If `A` contains NaN/inf or is not 2-D.
    """
    A = _as_matrix(A)
    if tol <= 0:
        raise ValueError("tol must be positive")
    m, n = A.shape
    if m == 0 or n == 0:
        return RankRevealing(
            rank=0,
            range_basis=np.zeros((m, 0)),
            null_basis=np.eye(n) if with_null else None,
            singular_values=np.zeros(0),
            row_basis=np.zeros((n, 0)),
            shape=(m, n),
        )
    u, s, vt = _svd(A, full=with_null)
    ref = s[0] if scale is None else max(s[0], scale)
    rank = int(np.count_nonzero(s > tol * ref)) if ref > 0 else 0
    return RankRevealing(
        rank=rank,
        range_basis=u[:, :rank],
        null_basis=vt[rank:].T.copy() if with_null else None,
        singular_values=s,
        row_basis=vt[:rank].T,
        shape=(m, n),
    )


def null_basis(A, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    return rank_reveal(A, tol).null_basis


def range_basis(A, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    return rank_reveal(A, tol, with_null=False).range_basis


def pinv(A, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse with a relative rank cutoff."""
    return rank_reveal(A, tol, with_null=False).pinv()


def _spd_factor(W) -> np.ndarray:
    W = _as_matrix(W)
    if W.shape[0] != W.shape[1]:
        raise NotPositiveDefinite(f"weight matrix must be square, got {W.shape}")
    if not np.allclose(W, W.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(W).max(initial=0.0))):
        raise NotPositiveDefinite("weight matrix is not symmetric")
    if W.shape[0] == 0:
        return W
    try:
        c, _ = cho_factor(W, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    return np.tril(c)


def weighted_pinv(A, W, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Weighted pseudoinverse ``W^{1/2} (A W^{1/2})^+``.

    Returns the generalized inverse whose output minimizes ``x^T W^{-1} x``
    among least-squares solutions of ``A x = b``.  Any square-root factor
    of `W` gives the same matrix, so the Cholesky factor is used.

    Raises
    ------
    NotPositiveDefinite
        If `W` is not symmetric positive-definite.
    """
    A = _as_matrix(A)
    L = _spd_factor(W)
    if L.shape[0] != A.shape[1]:
        raise InvalidMatrix(f"weight is {L.shape}, A has {A.shape[1]} columns")
    return L @ pinv(A @ L, tol)
