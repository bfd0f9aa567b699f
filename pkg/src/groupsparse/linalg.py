"""Small dense linear algebra helpers.

Matrices and vectors are plain ``numpy`` float arrays. The routines here
exist either because the algorithms need a specific, deterministic variant
(power iteration from a fixed start, pivoted elimination with an explicit
rank test) or because inputs must be validated before anything else runs.
"""
from __future__ import annotations

import numpy as np

from .errors import NumericalError

POWER_MAX_ITER = 10_000
RANK_PIVOT_RTOL = 1e-10


def as_matrix(A, name="A") -> np.ndarray:
    """Return ``A`` as a finite 2-D float array or raise ``ValueError``."""
    arr = np.asarray(A, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def as_vector(x, name="x") -> np.ndarray:
    """Return ``x`` as a finite 1-D float array or raise ``ValueError``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def matvec(A, x) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, x has length {x.shape[0]}")
    return A @ x


def transpose_matvec(A, y) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    if A.shape[0] != y.shape[0]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, y has length {y.shape[0]}")
    return A.T @ y


def spectral_norm(A, tol: float = 1e-10, max_iter: int = POWER_MAX_ITER) -> float:
    """Largest singular value of ``A`` by power iteration on ``A^T A``.

    Two fixed start vectors are used (normalized all-ones, then an
    alternating-sign vector) and the larger estimate is kept, so repeated
    calls give bit-identical answers and a start that happens to be
    orthogonal to the top singular vector does not go unnoticed.

    Raises
    ------
    NumericalError
        If the Rayleigh quotient has not settled to ``tol`` (relative) after
        ``max_iter`` iterations.
    """
    A = as_matrix(A)
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = A.shape[1]
    if not np.any(A):
        raise ValueError("spectral_norm needs a nonzero matrix")
    best = 0.0
    for x in (np.ones(n), np.where(np.arange(n) % 2 == 0, 1.0, -0.5)):
        best = max(best, _power(A, x / np.linalg.norm(x), tol, max_iter))
    if best == 0.0:
        raise NumericalError("power iteration start vectors are in the null space of A")
    return float(np.sqrt(best))


def _power(A, x, tol, max_iter) -> float:
    y = A.T @ (A @ x)
    lam = float(x @ y)
    if np.linalg.norm(y) == 0.0:
        return 0.0
    for _ in range(max_iter):
        x = y / np.linalg.norm(y)
        y = A.T @ (A @ x)
        lam_new = float(x @ y)
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return lam_new
        lam = lam_new
    raise NumericalError(f"power iteration did not converge in {max_iter} iterations")


def _gauss_inverse(M: np.ndarray) -> np.ndarray:
    """Invert a small square matrix by Gauss-Jordan elimination with partial pivoting."""
    k = M.shape[0]
    aug = np.hstack([M.astype(float), np.eye(k)])
    pivots = []
    for col in range(k):
        row = col + int(np.argmax(np.abs(aug[col:, col])))
        piv = abs(aug[row, col])
        pivots.append(piv)
        if piv == 0.0 or piv < RANK_PIVOT_RTOL * max(pivots):
            raise NumericalError("matrix is rank deficient (pivot below threshold)")
        if row != col:
            aug[[col, row]] = aug[[row, col]]
        aug[col] /= aug[col, col]
        others = np.arange(k) != col
        aug[others] -= np.outer(aug[others, col], aug[col])
    return aug[:, k:]


def gram_inverse_norm(B) -> float:
    """Spectral norm of ``(B^T B)^{-1}`` for a tall full-column-rank ``B``."""
    B = as_matrix(B, "B")
    G = B.T @ B
    inv = _gauss_inverse(G)
    inv = 0.5 * (inv + inv.T)
    # symmetric positive definite: the spectral norm is the top eigenvalue
    return float(np.max(np.abs(np.linalg.eigvalsh(inv))))


def orthonormalize_rows(A, rtol: float = 1e-10) -> np.ndarray:
    """Return a matrix with orthonormal rows spanning the row space of ``A``.

    Uses a QR factorization of ``A^T``; signs are fixed so the diagonal of R is
    positive, which makes the result a deterministic function of ``A``.
    """
    A = as_matrix(A)
    m, n = A.shape
    if m > n:
        raise ValueError(f"cannot orthonormalize {m} rows in dimension {n}")
    Q, R = np.linalg.qr(A.T, mode="reduced")
    d = np.diag(R)
    scale = np.max(np.abs(d)) if d.size else 0.0
    if scale == 0.0 or np.min(np.abs(d)) < rtol * scale:
        raise NumericalError("rows of A are numerically dependent")
    signs = np.where(d < 0, -1.0, 1.0)
    return (Q * signs).T.copy()
