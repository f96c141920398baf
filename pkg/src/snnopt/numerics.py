"""Dense linear-algebra helpers used throughout the package.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. Columns of an
m x n matrix ``A`` are addressed either by 0-based position or, for the
polytope walls, by signed 1-based indices ``±j`` where ``-j`` stands for the
negated column ``-A_j``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConvergenceError, DimensionError, RangeError

RANK_CUTOFF = 1e-10


@dataclass(frozen=True)
class SpectralSummary:
    """Extreme eigenvalues of ``A^T A``.

    Attributes
    ----------
    lambda_max : float
        Largest eigenvalue.
    lambda_min : float
        Smallest eigenvalue above ``RANK_CUTOFF * lambda_max``.
    kappa : float
        ``lambda_max / lambda_min`` (``inf`` when ``lambda_min`` is 0).
    rank : int
        Number of eigenvalues above the cutoff.
    """

    lambda_max: float
    lambda_min: float
    kappa: float
    rank: int


def as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DimensionError("matrix has non-finite entries")
    return A


def as_vector(v, size: int | None = None, name: str = "vector") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {v.shape}")
    if size is not None and v.shape[0] != size:
        raise DimensionError(f"{name} has length {v.shape[0]}, expected {size}")
    return v


def signed_columns(A: np.ndarray, walls: Iterable[int]) -> np.ndarray:
    """Stack the signed columns ``A_j`` for 1-based signed indices ``j``.

    Returns an ``m x k`` matrix (``k = 0`` gives an empty ``m x 0`` array).
    """
    walls = list(walls)
    if not walls:
        return np.zeros((A.shape[0], 0))
    idx = np.array([abs(j) - 1 for j in walls])
    sgn = np.array([1.0 if j > 0 else -1.0 for j in walls])
    return A[:, idx] * sgn


def wall_values(A: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Return ``A_j^T v`` for walls ordered ``+1..+n, -1..-n``."""
    w = A.T @ v
    return np.concatenate([w, -w])


def wall_index(pos: int, n: int) -> int:
    """Map a position in :func:`wall_values` output to a signed wall index."""
    return pos + 1 if pos < n else -(pos - n + 1)


def project_onto_span(cols: Sequence[np.ndarray] | np.ndarray, v) -> np.ndarray:
    """Orthogonal projection of ``v`` onto the span of ``cols``.

    Parameters
    ----------
    cols : sequence of vectors or 2-D array
        Spanning vectors. A 2-D array is read column-wise. May be empty.
    v : array_like
        Vector to project.

    Returns
    -------
    numpy.ndarray
        The projection; the zero vector for an empty span.
    """
    v = as_vector(v)
    if isinstance(cols, np.ndarray) and cols.ndim == 2:
        M = cols
    else:
        cols = list(cols)
        if not cols:
            return np.zeros_like(v)
        M = np.column_stack([as_vector(c) for c in cols])
    if M.shape[0] != v.shape[0]:
        raise DimensionError(f"columns have length {M.shape[0]}, vector has {v.shape[0]}")
    if M.shape[1] == 0:
        return np.zeros_like(v)
    # Orthonormal basis of the column space from a thin SVD.
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros_like(v)
    U = U[:, s > RANK_CUTOFF * s[0]]
    return U @ (U.T @ v)


def least_squares_solve(A, b) -> np.ndarray:
    """Minimum-norm minimizer of ``||Ax - b||_2``."""
    A = as_matrix(A)
    b = as_vector(b, A.shape[0], "b")
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    return x


def spectral_summary(A, max_iter: int = 1000) -> SpectralSummary:
    """Eigenvalue summary of ``A^T A``.

    The symmetric eigenproblem is solved by LAPACK's iterative QR-type
    driver; a failure to converge is re-raised as ``ConvergenceError``.
    ``max_iter`` is kept for interface symmetry and is not used by LAPACK.
    """
    A = as_matrix(A)
    # The nonzero spectrum of A^T A equals that of the smaller Gram matrix.
    G = A @ A.T if A.shape[0] <= A.shape[1] else A.T @ A
    try:
        eig = np.linalg.eigvalsh(G)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceError(f"eigenvalue iteration failed: {exc}") from exc
    lam_max = float(max(eig.max(), 0.0))
    if lam_max == 0.0:
        return SpectralSummary(0.0, 0.0, float("inf"), 0)
    nz = eig[eig > RANK_CUTOFF * lam_max]
    lam_min = float(nz.min())
    return SpectralSummary(lam_max, lam_min, lam_max / lam_min, int(nz.size))


def pseudo_inverse_apply(A, u, tol: float = 1e-9) -> np.ndarray:
    """Return the ``v`` in range(A) with ``A^T v = u``.

    Raises
    ------
    RangeError
        If ``u`` is not in the range of ``A^T`` within ``tol * max(1, ||u||)``.
    """
    A = as_matrix(A)
    u = as_vector(u, A.shape[1], "u")
    v = np.linalg.pinv(A.T, rcond=RANK_CUTOFF) @ u
    gap = np.linalg.norm(A.T @ v - u)
    if gap > tol * max(1.0, np.linalg.norm(u)):
        raise RangeError(f"u is outside the range of A^T (residual {gap:.3e})")
    return v


def a_norm(M, x) -> float:
    """``sqrt(x^T M x)`` for a positive semidefinite ``M``.

    Provided for completeness; no solver path depends on it.
    """
    x = as_vector(x)
    return float(np.sqrt(max(x @ (np.asarray(M) @ x), 0.0)))
