"""Dense linear-algebra kernels shared by the rest of the package.

Matrices and vectors are plain float64 numpy arrays.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

PIVOT_TOL = 1e-14


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when an LU pivot falls below :data:`PIVOT_TOL`."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative kernel hits its iteration cap."""


def as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def as_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-d array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def svd_thin(A, k: int):
    """Leading ``k`` singular triplets of ``A``.

    Returns
    -------
    U : (rows, k) array with orthonormal columns
    s : (k,) nonincreasing singular values
    V : (cols, k) array with orthonormal columns
    """
    A = as_matrix(A)
    if not 0 <= k <= min(A.shape):
        raise ValueError(f"k={k} exceeds min{A.shape}")
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"SVD did not converge: {exc}") from exc
    return U[:, :k], s[:k], Vt[:k].T


def lu_factor(A):
    """LU factorization with partial pivoting; rejects tiny pivots."""
    A = as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.size and pivots.min() < PIVOT_TOL:
        raise SingularMatrixError(
            f"pivot {pivots.min():.3e} below tolerance {PIVOT_TOL:g}")
    return lu, piv


def lu_solve(factors, b) -> np.ndarray:
    return scipy.linalg.lu_solve(factors, b, check_finite=False)


def solve_dense(A, b) -> np.ndarray:
    """Solve ``A x = b`` by LU with partial pivoting."""
    b = np.asarray(b, dtype=np.float64)
    factors = lu_factor(A)
    if b.shape[0] != factors[0].shape[0]:
        raise ValueError("right-hand side length does not match matrix")
    return lu_solve(factors, b)


def spectral_norm(A, tol: float = 1e-10, max_iter: int = 20000) -> float:
    """``||A||_2`` from the largest eigenvalue of ``A^T A``.

    Uses Lanczos iteration (ARPACK) on the Gram operator, which copes with
    the tightly clustered top singular values of finite-difference
    operators where plain power iteration stalls. Small matrices fall back
    to a dense symmetric eigensolve of the Gram matrix.
    """
    A = as_matrix(A)
    if not np.any(A):
        raise ValueError("spectral_norm needs a nonzero matrix")
    n = A.shape[1]
    if n <= 8:
        lam = np.linalg.eigvalsh(A.T @ A)[-1]
        return float(np.sqrt(lam))
    gram = scipy.sparse.linalg.LinearOperator(
        (n, n), matvec=lambda v: A.T @ (A @ v), dtype=np.float64)
    v0 = np.random.default_rng(0).standard_normal(n)
    try:
        lam = scipy.sparse.linalg.eigsh(
            gram, k=1, which="LA", tol=tol, maxiter=max_iter, v0=v0,
            return_eigenvectors=False)[0]
    except scipy.sparse.linalg.ArpackNoConvergence as exc:
        raise ConvergenceError(
            f"Lanczos did not reach tol={tol:g} in {max_iter} iterations"
        ) from exc
    return float(np.sqrt(lam))
