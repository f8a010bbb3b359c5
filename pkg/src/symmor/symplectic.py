"""Canonical Poisson matrix and symplecticity checks.

The Poisson matrix ``J_2n = [[0, I_n], [-I_n, 0]]`` is never formed; it is
applied by swapping the ``q`` and ``p`` halves and flipping a sign. All
functions act along the first axis, so matrices are handled column-wise.
"""
from __future__ import annotations

import numpy as np

DEFAULT_TOL = 1e-8


def _check_half(n: int, v: np.ndarray) -> None:
    if v.shape[0] != 2 * n:
        raise ValueError(f"expected leading dimension {2 * n}, got {v.shape[0]}")


def poisson_apply(n: int, v) -> np.ndarray:
    """Return ``J_2n v``, i.e. ``[v_p; -v_q]``."""
    v = np.asarray(v, dtype=np.float64)
    _check_half(n, v)
    return np.concatenate([v[n:], -v[:n]])


def poisson_transpose_apply(n: int, v) -> np.ndarray:
    """Return ``J_2n^T v = -J_2n v``, i.e. ``[-v_p; v_q]``."""
    v = np.asarray(v, dtype=np.float64)
    _check_half(n, v)
    return np.concatenate([-v[n:], v[:n]])


def poisson_matrix(n: int) -> np.ndarray:
    """Dense ``J_2n``. Only meant for tests and small diagnostics."""
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [-eye, zero]])


def _halves(A: np.ndarray) -> tuple[int, int]:
    rows, cols = A.shape
    if rows % 2 or cols % 2:
        raise ValueError(f"symplectic matrices need even dimensions, got {A.shape}")
    return rows // 2, cols // 2


def symplectic_inverse_apply(A, y) -> np.ndarray:
    """Apply ``A^+ = J_2n^T A^T J_2N`` to ``y`` without forming ``A^+``."""
    A = np.asarray(A, dtype=np.float64)
    N, n = _halves(A)
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != 2 * N:
        raise ValueError(f"y has length {y.shape[0]}, expected {2 * N}")
    return poisson_transpose_apply(n, A.T @ poisson_apply(N, y))


def symplectic_gram(A) -> np.ndarray:
    """``A^T J_2N A`` for a ``2N x 2n`` matrix."""
    A = np.asarray(A, dtype=np.float64)
    N, _ = _halves(A)
    return A.T @ poisson_apply(N, A)


def symplecticity_defect(A) -> float:
    """``||A^T J_2N A - J_2n||_F^2 / (2n)^2``."""
    A = np.asarray(A, dtype=np.float64)
    _, n = _halves(A)
    G = symplectic_gram(A)
    # subtract J_2n in place of forming it
    G[:n, n:] -= np.eye(n)
    G[n:, :n] += np.eye(n)
    return float(np.sum(G * G)) / (2 * n) ** 2


def is_symplectic(A, tol: float = DEFAULT_TOL) -> bool:
    """True iff ``||A^T J A - J||_F <= tol``."""
    A = np.asarray(A, dtype=np.float64)
    _, n = _halves(A)
    return bool(np.sqrt(symplecticity_defect(A)) * (2 * n) <= tol)
