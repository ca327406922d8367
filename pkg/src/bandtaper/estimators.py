"""Plug-in estimators of the conditional mean operator ``Sigma_YX Sigma_XX^{-1}``.

The joint vector is ``Z = (X, Y)`` with the ``p0`` covariates first. All
estimators take a covariance estimate (usually the sample covariance) and a
:class:`Partition`, and return a ``(p - p0) x p0`` coefficient matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .linalg import InputError, as_matrix, as_symmetric, spd_inverse, spd_solve_right, spectral_norm
from .operators import BlockwiseParams, TaperParams, _shift, band, pd_adjust, taper


@dataclass(frozen=True)
class Partition:
    """Split of a ``p``-vector into ``p0`` leading covariates and ``p - p0`` responses."""

    p: int
    p0: int

    def __post_init__(self):
        if not 1 <= self.p0 < self.p:
            raise InputError(f"need 1 <= p0 < p, got p0={self.p0}, p={self.p}")

    @property
    def q(self) -> int:
        return self.p - self.p0

    def check(self, A: NDArray) -> None:
        if A.shape[0] != self.p:
            raise InputError(f"matrix has dimension {A.shape[0]} but the partition expects p={self.p}")

    def xx(self, A: NDArray) -> NDArray:
        return A[: self.p0, : self.p0]

    def yx(self, A: NDArray) -> NDArray:
        return A[self.p0 :, : self.p0]

    def yy(self, A: NDArray) -> NDArray:
        return A[self.p0 :, self.p0 :]


def sample_covariance(Z: ArrayLike, center: bool = False) -> NDArray[np.float64]:
    """``Z.T @ Z / n`` for an ``n x p`` data matrix.

    No mean is removed unless ``center=True``; the model has mean zero.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[0] < 1:
        raise InputError(f"data must be an n x p array with n >= 1, got shape {Z.shape}")
    if not np.all(np.isfinite(Z)):
        raise InputError("data has non-finite entries")
    if center:
        Z = Z - Z.mean(axis=0)
    S = Z.T @ Z / Z.shape[0]
    return 0.5 * (S + S.T)


def cond_mean_operator(S: ArrayLike, part: Partition) -> NDArray[np.float64]:
    """``S_YX @ inv(S_XX)``; raises ``SingularityError`` if ``S_XX`` is not PD."""
    S = as_symmetric(S, "S")
    part.check(S)
    return _cond_mean(S, part)


def _cond_mean(S: NDArray, part: Partition, band: int | None = None) -> NDArray:
    return spd_solve_right(part.yx(S), part.xx(S), band)


def cond_variance(S: ArrayLike, part: Partition) -> NDArray[np.float64]:
    """``S_YY - S_YX inv(S_XX) S_XY``."""
    return conditional_gaussian(S, part)[1]


def conditional_gaussian(S: ArrayLike, part: Partition) -> tuple[NDArray, NDArray]:
    """Conditional mean operator and conditional variance of ``Y`` given ``X``."""
    S = as_symmetric(S, "S")
    part.check(S)
    psi = spd_solve_right(part.yx(S), part.xx(S))
    nu = part.yy(S) - psi @ part.yx(S).T
    return psi, 0.5 * (nu + nu.T)


def adjusted_taper(S: ArrayLike, params: TaperParams) -> NDArray[np.float64]:
    """Tapered covariance shifted to have smallest eigenvalue at least ``epsilon``."""
    return pd_adjust(taper(S, params.k), params.epsilon)


def adjusted_band(S: ArrayLike, k: int, epsilon: float) -> NDArray[np.float64]:
    return pd_adjust(band(S, k), epsilon)


def tapering_estimator(S: ArrayLike, params: TaperParams, part: Partition) -> NDArray[np.float64]:
    """Conditional mean operator of the adjusted tapered covariance."""
    return cond_mean_operator(adjusted_taper(S, params), part)


def banding_estimator(S: ArrayLike, k: int, epsilon: float, part: Partition) -> NDArray[np.float64]:
    """Conditional mean operator of the adjusted banded covariance."""
    return cond_mean_operator(adjusted_band(S, k, epsilon), part)


def blockwise_from_tapered(T: NDArray, b: int, epsilon: float, part: Partition) -> NDArray[np.float64]:
    """Blockwise estimator given an already tapered covariance ``T``.

    Only the trailing ``b`` covariates enter; the leading ``p0 - b`` columns
    of the result are exactly zero.
    """
    p0 = part.p0
    if not 1 <= b <= p0:
        raise InputError(f"block width b must satisfy 1 <= b <= {p0}, got {b}")
    block = _shift(T[p0 - b : p0, p0 - b : p0], epsilon)
    out = np.zeros((part.q, p0))
    out[:, p0 - b :] = part.yx(T)[:, p0 - b :] @ spd_inverse(block)
    return out


def blockwise_estimator(S: ArrayLike, params: BlockwiseParams, part: Partition) -> NDArray[np.float64]:
    """Blockwise tapering estimator.

    The tapered cross-covariance is multiplied by the inverse of the adjusted
    trailing ``b x b`` covariate block, ``b = 2 floor(a k log k)``; covariates
    outside that block get zero coefficients. ``b`` is clamped to ``p0`` with
    a warning.
    """
    S = as_symmetric(S, "S")
    part.check(S)
    b = params.width(part.p0)
    return blockwise_from_tapered(taper(S, params.k), b, params.epsilon, part)


def loss(C_hat: ArrayLike, C_true: ArrayLike) -> float:
    """Spectral-norm distance between two coefficient matrices."""
    C_hat = as_matrix(C_hat, "C_hat")
    C_true = as_matrix(C_true, "C_true")
    if C_hat.shape != C_true.shape:
        raise InputError(f"shape mismatch: {C_hat.shape} vs {C_true.shape}")
    return spectral_norm(C_hat - C_true)
