"""Dense symmetric linear algebra shared by the solver and the verifiers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Default relative rank tolerance for data matrices.
RANK_TOL = 1e-9
# Relative slack for eigenvalue-based definiteness checks.
DEF_TOL = 1e-8


class NumericsError(ValueError):
    """Raised for malformed matrix input (shape, non-finite entries, rank)."""


@dataclass(frozen=True)
class SymEig:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Return `M` as a finite 2-D float array."""
    A = np.asarray(M, dtype=float)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    elif A.ndim == 1:
        A = A.reshape(1, -1)
    if A.ndim != 2:
        raise NumericsError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NumericsError(f"{name} has NaN or Inf entries")
    return A


def sym(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def sym_eig(M) -> SymEig:
    """Eigen-decomposition of a symmetric matrix, eigenvalues ascending.

    The input is symmetrized as ``(M + M.T) / 2`` before decomposition.
    """
    A = as_matrix(M)
    if A.shape[0] != A.shape[1]:
        raise NumericsError(f"sym_eig needs a square matrix, got {A.shape}")
    w, V = np.linalg.eigh(sym(A))
    return SymEig(w, V)


def lambda_min(M) -> float:
    A = as_matrix(M)
    if A.size == 0:
        return np.inf
    return float(np.linalg.eigvalsh(sym(A))[0])


def lambda_max(M) -> float:
    A = as_matrix(M)
    if A.size == 0:
        return -np.inf
    return float(np.linalg.eigvalsh(sym(A))[-1])


def psd_tol(M, rel: float = DEF_TOL) -> float:
    """Default definiteness slack ``rel * (1 + ||M||)``."""
    A = np.asarray(M, dtype=float)
    return rel * (1.0 + (np.linalg.norm(A, 2) if A.size else 0.0))


def is_psd(M, tol: float | None = None) -> bool:
    A = as_matrix(M)
    if A.size == 0:
        return True
    if tol is None:
        tol = psd_tol(A)
    return lambda_min(A) >= -tol


def rank_with_tol(M, rel_tol: float = RANK_TOL) -> int:
    """Numerical rank: singular values above ``rel_tol * s_max * max(rows, cols)``."""
    if rel_tol <= 0:
        raise NumericsError("rel_tol must be positive")
    A = as_matrix(M)
    if A.size == 0:
        raise NumericsError("rank of an empty matrix is undefined")
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rel_tol * s[0] * max(A.shape)))


def row_space_basis(M, rel_tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis (as columns) of the row space of `M`."""
    A = as_matrix(M)
    if A.size == 0:
        return np.zeros((A.shape[1], 0))
    _, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((A.shape[1], 0))
    r = int(np.sum(s > rel_tol * s[0] * max(A.shape)))
    return Vt[:r].T


def right_pinv(M, rel_tol: float = RANK_TOL) -> np.ndarray:
    """Right inverse ``M^T (M M^T)^{-1}`` of a full-row-rank matrix."""
    A = as_matrix(M)
    if rank_with_tol(A, rel_tol) < A.shape[0]:
        raise NumericsError(
            f"right_pinv needs full row rank, matrix is {A.shape} with rank "
            f"{rank_with_tol(A, rel_tol)}")
    # SVD-based pseudo-inverse equals M^T (M M^T)^{-1} under full row rank.
    return np.linalg.pinv(A)


def sym_basis(n: int) -> np.ndarray:
    """Basis of n x n symmetric matrices over the upper triangle.

    Off-diagonal elements are ``e_i e_j^T + e_j e_i^T`` so that
    ``P = sum_k x_k E_k`` has ``P[i, j] = x_k`` for every entry.
    """
    k = n * (n + 1) // 2
    E = np.zeros((k, n, n))
    idx = 0
    for i in range(n):
        for j in range(i, n):
            E[idx, i, j] = 1.0
            E[idx, j, i] = 1.0
            idx += 1
    return E


def svec(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    return P[np.triu_indices(P.shape[0])].copy()


def smat(x, n: int) -> np.ndarray:
    P = np.zeros((n, n))
    P[np.triu_indices(n)] = x
    return P + np.triu(P, 1).T
