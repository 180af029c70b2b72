"""Kronecker / Khatri-Rao products, least-squares solves and rank diagnostics."""

from __future__ import annotations

import itertools

import numpy as np
import scipy.linalg

K_RANK_MAX_COLS = 12


def _as_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got an array with {m.ndim} dims")
    return m


def kronecker(a, b) -> np.ndarray:
    """Kronecker product with block ``(i, j)`` equal to ``a[i, j] * b``."""
    return np.kron(_as_matrix(a), _as_matrix(b))


def khatri_rao(a, b) -> np.ndarray:
    """Columnwise Kronecker product.

    Column ``r`` of the result is ``kronecker(a[:, r], b[:, r])``, so the
    row index of `b` varies fastest.
    """
    a = _as_matrix(a)
    b = _as_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(
            f"Khatri-Rao needs equal column counts, got {a.shape[1]} and {b.shape[1]}"
        )
    return (a[:, None, :] * b[None, :, :]).reshape(-1, a.shape[1])


def default_rank_tol(coeff) -> float:
    """Relative singular-value cutoff ``max(rows, cols) * eps``.

    A singular value below ``rank_tol * sigma_max`` counts as zero.
    """
    coeff = np.asarray(coeff)
    return max(coeff.shape) * np.finfo(np.float64).eps


def solve_least_squares(coeff, rhs, rank_tol: float | None = None) -> np.ndarray:
    """Minimize ``||coeff @ X - rhs||_F`` jointly over all columns of `rhs`.

    A QR factorization with column pivoting handles the well-conditioned
    case. When the pivoted triangle shows a condition estimate above
    ``1 / rank_tol`` the system is solved by SVD instead, discarding singular
    values below ``rank_tol * sigma_max``, which yields the minimum-norm
    minimizer.

    Parameters
    ----------
    coeff : (m, n) array_like
    rhs : (m,) or (m, k) array_like
    rank_tol : float, optional
        Relative rank cutoff. Defaults to :func:`default_rank_tol`.

    Returns
    -------
    ndarray, shape (n, k) (or (n,) for a vector `rhs`)
    """
    coeff = _as_matrix(coeff)
    rhs = np.asarray(rhs, dtype=np.float64)
    vector_rhs = rhs.ndim == 1
    rhs2 = rhs[:, None] if vector_rhs else rhs
    if rhs2.ndim != 2 or rhs2.shape[0] != coeff.shape[0]:
        raise ValueError(
            f"row mismatch: coeff has {coeff.shape[0]} rows, rhs shape {rhs.shape}"
        )
    if rank_tol is None:
        rank_tol = default_rank_tol(coeff)
    if rank_tol < 0:
        raise ValueError(f"rank_tol must be nonnegative, got {rank_tol}")

    m, n = coeff.shape
    x = _solve_pivoted_qr(coeff, rhs2, rank_tol) if m >= n else None
    if x is None:
        x = _solve_svd(coeff, rhs2, rank_tol)
    return x[:, 0] if vector_rhs else x


def _solve_pivoted_qr(coeff, rhs, rank_tol):
    n = coeff.shape[1]
    if n == 0:
        return np.zeros((0, rhs.shape[1]))
    q, r, perm = scipy.linalg.qr(coeff, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    # |r_11| >= |r_kk| under pivoting; their ratio is a cheap condition estimate
    if diag[0] == 0.0 or diag[-1] <= rank_tol * diag[0]:
        return None
    y = scipy.linalg.solve_triangular(r, q.T @ rhs)
    x = np.empty_like(y)
    x[perm] = y
    return x


def _solve_svd(coeff, rhs, rank_tol):
    u, s, vt = np.linalg.svd(coeff, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((coeff.shape[1], rhs.shape[1]))
    keep = s > rank_tol * s[0]
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return vt.T @ (inv[:, None] * (u.T @ rhs))


def singular_values(m) -> np.ndarray:
    m = _as_matrix(m)
    if m.size == 0:
        return np.zeros(0)
    return np.linalg.svd(m, compute_uv=False)


def smallest_singular_value(m) -> float:
    """Smallest of the ``min(rows, cols)`` singular values of `m`."""
    s = singular_values(m)
    return float(s[-1]) if s.size else 0.0


def _full_column_rank(m, tol) -> bool:
    s = singular_values(m)
    if s.size < m.shape[1] or s[0] == 0.0:
        return False
    return bool(s[-1] > tol * s[0])


def k_rank(m, rank_tol: float | None = None) -> int:
    """Kruskal rank: largest k such that every k columns are independent.

    Every column subset is tested by its singular values, which costs
    ``2**cols`` SVDs in the worst case; matrices wider than
    ``K_RANK_MAX_COLS`` are rejected. A subset is independent when its
    smallest singular value exceeds ``rank_tol`` times its largest
    (default ``max(rows, cols) * eps``).
    """
    m = _as_matrix(m)
    rows, cols = m.shape
    if cols > K_RANK_MAX_COLS:
        raise ValueError(f"k_rank is capped at {K_RANK_MAX_COLS} columns, got {cols}")
    if rank_tol is None:
        rank_tol = max(rows, cols) * np.finfo(np.float64).eps
    if cols == 0 or np.any(np.all(m == 0.0, axis=0)):
        return 0
    k = 0
    for size in range(1, min(rows, cols) + 1):
        subsets = itertools.combinations(range(cols), size)
        if all(_full_column_rank(m[:, list(idx)], rank_tol) for idx in subsets):
            k = size
        else:
            break
    return k
