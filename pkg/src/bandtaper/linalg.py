"""Dense symmetric linear algebra shared by the estimators.

Matrices are plain ``numpy`` arrays. Symmetric inputs go through
:func:`as_symmetric`, which averages ``A`` with its transpose and warns when
the asymmetry is larger than rounding noise.

Extreme eigenvalues use LAPACK's symmetric solvers. When the input is
banded with a narrow band (tapered and banded covariances always are), the
banded driver is used instead of the dense one; both are deterministic for
a fixed input.
"""

from __future__ import annotations

import warnings

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg as sla

ASYMMETRY_TOL = 1e-10
SPD_TOL = 1e-12


class InputError(ValueError):
    """Raised when an argument violates a documented precondition."""


class SingularityError(np.linalg.LinAlgError):
    """Raised when a matrix that must be positive definite is not."""

    def __init__(self, message: str, lambda_min: float | None = None):
        super().__init__(message)
        self.lambda_min = lambda_min


def as_matrix(A: ArrayLike, name: str = "matrix") -> NDArray[np.float64]:
    """Return ``A`` as a finite 2-d float array with at least one entry."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise InputError(f"{name} must be a non-empty 2-d array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InputError(f"{name} has non-finite entries")
    return A


def as_symmetric(A: ArrayLike, name: str = "matrix") -> NDArray[np.float64]:
    """Validate a square matrix and symmetrize it as ``(A + A.T) / 2``."""
    A = as_matrix(A, name)
    if A.shape[0] != A.shape[1]:
        raise InputError(f"{name} must be square, got shape {A.shape}")
    if A.size == 1 or np.array_equal(A, A.T):
        return A
    asym = np.max(np.abs(A - A.T))
    if asym > ASYMMETRY_TOL:
        warnings.warn(
            f"{name} is not symmetric (max asymmetry {asym:.3g}); symmetrizing",
            RuntimeWarning,
            stacklevel=3,
        )
    return 0.5 * (A + A.T)


def bandwidth(A: NDArray) -> int:
    """Largest ``|i - j|`` with ``A[i, j] != 0`` (0 for diagonal matrices)."""
    nz = A != 0
    p = A.shape[0]
    has = nz.any(axis=1)
    if not has.any():
        return 0
    idx = np.arange(p)[has]
    first = np.argmax(nz[has], axis=1)
    last = A.shape[1] - 1 - np.argmax(nz[has, ::-1], axis=1)
    return int(max(np.max(idx - first), np.max(last - idx)))


def _to_lower_banded(A: NDArray, bw: int) -> NDArray:
    p = A.shape[0]
    ab = np.zeros((bw + 1, p))
    for d in range(bw + 1):
        ab[d, : p - d] = np.diagonal(A, -d)
    return ab


def _use_banded(A: NDArray, band: int | None = None) -> int | None:
    """Bandwidth to use banded drivers with, or None for dense ones.

    ``band`` is a known upper bound on the bandwidth, which saves a scan.
    """
    p = A.shape[0]
    if p < 64:
        return None
    bw = bandwidth(A) if band is None else min(int(band), p - 1)
    return bw if bw <= p // 8 else None


def sym_eigen_min(A: ArrayLike) -> float:
    """Smallest eigenvalue of a symmetric matrix.

    >>> sym_eigen_min([[0.0, 1.0], [1.0, 0.0]])
    -1.0
    """
    return _eigen_min(as_symmetric(A))


def _eigen_min(A: NDArray, band: int | None = None) -> float:
    """:func:`sym_eigen_min` without input validation."""
    if A.shape[0] == 1:
        return float(A[0, 0])
    bw = _use_banded(A, band)
    if bw is not None:
        if bw == 0:
            return float(np.min(np.diagonal(A)))
        ab = _to_lower_banded(A, bw)
        return float(sla.eig_banded(ab, lower=True, eigvals_only=True, select="i", select_range=(0, 0))[0])
    return float(sla.eigh(A, eigvals_only=True, subset_by_index=[0, 0], check_finite=False)[0])


def sym_eigen_max(A: ArrayLike) -> float:
    """Largest eigenvalue of a symmetric matrix."""
    A = as_symmetric(A)
    p = A.shape[0]
    if p == 1:
        return float(A[0, 0])
    return float(sla.eigh(A, eigvals_only=True, subset_by_index=[p - 1, p - 1], check_finite=False)[0])


def spectral_norm(A: ArrayLike) -> float:
    """Largest singular value of a rectangular matrix.

    Computed as the square root of the top eigenvalue of the smaller Gram
    matrix (``A.T @ A`` or ``A @ A.T``).
    """
    A = as_matrix(A)
    if not np.any(A):
        return 0.0
    # Rescaling keeps the Gram matrix well away from overflow/underflow.
    scale = np.max(np.abs(A))
    B = A / scale
    G = B.T @ B if B.shape[1] <= B.shape[0] else B @ B.T
    top = sym_eigen_max(0.5 * (G + G.T))
    return float(scale * np.sqrt(max(top, 0.0)))


def spd_inverse(A: ArrayLike) -> NDArray[np.float64]:
    """Inverse of a symmetric positive definite matrix via Cholesky.

    Raises
    ------
    SingularityError
        If the smallest eigenvalue of ``A`` is not above ``1e-12``.
    """
    A = as_symmetric(A)
    lam = sym_eigen_min(A)
    if lam <= SPD_TOL:
        raise SingularityError(f"matrix is not positive definite (lambda_min = {lam:.6g})", lam)
    c = sla.cho_factor(A, lower=True, check_finite=False)
    inv = sla.cho_solve(c, np.eye(A.shape[0]), check_finite=False)
    return 0.5 * (inv + inv.T)


def spd_solve_right(B: NDArray, A: NDArray, band: int | None = None) -> NDArray[np.float64]:
    """Return ``B @ inv(A)`` for symmetric positive definite ``A``.

    Uses a banded Cholesky when ``A`` has a narrow band (``band`` may give
    a known upper bound on it). Raises :class:`SingularityError` when ``A``
    is not positive definite.
    """
    bw = _use_banded(A, band)
    try:
        if bw is not None:
            cb = sla.cholesky_banded(_to_lower_banded(A, bw), lower=True, check_finite=False)
            pivots = cb[0]
            solve = lambda rhs: sla.cho_solve_banded((cb, True), rhs, check_finite=False)
        else:
            c = sla.cho_factor(A, lower=True, check_finite=False)
            pivots = np.diagonal(c[0])
            solve = lambda rhs: sla.cho_solve(c, rhs, check_finite=False)
    except np.linalg.LinAlgError:
        pivots = None
    if pivots is None or np.min(pivots) ** 2 <= SPD_TOL:
        lam = sym_eigen_min(A)
        raise SingularityError(f"matrix is not positive definite (lambda_min = {lam:.6g})", lam)
    return solve(np.ascontiguousarray(B.T)).T
