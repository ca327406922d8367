"""Matrix transforms for bandable covariances.

Index arguments follow 1-based matrix notation (row ``1`` is the first row);
the conversion to numpy's 0-based storage happens inside each function.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .linalg import InputError, SingularityError, _eigen_min, as_symmetric, spd_inverse


@dataclass(frozen=True)
class TaperParams:
    """Bandwidth ``k`` and positive-definite adjustment level ``epsilon``."""

    k: int
    epsilon: float = 0.5

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InputError(f"bandwidth k must be a positive integer, got {self.k}")
        if not self.epsilon >= 0:
            raise InputError(f"epsilon must be nonnegative, got {self.epsilon}")


@dataclass(frozen=True)
class BlockwiseParams:
    """Parameters of the blockwise tapering estimator.

    ``b`` is the width of the retained trailing covariate block,
    ``2 * floor(a * k * log(k))`` with the natural logarithm.
    """

    k: int
    a: float
    epsilon: float = 0.5
    b: int = field(init=False)

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise InputError(f"blockwise estimator needs integer k >= 2, got {self.k}")
        if not self.a > 0:
            raise InputError(f"a must be positive, got {self.a}")
        if not self.epsilon >= 0:
            raise InputError(f"epsilon must be nonnegative, got {self.epsilon}")
        object.__setattr__(self, "b", block_width(self.k, self.a))
        if self.b < 1:
            raise InputError(f"a={self.a}, k={self.k} give an empty block (2 floor(a k log k) = 0)")

    def width(self, p0: int) -> int:
        """``b`` clamped to the covariate dimension ``p0`` (warns when clamping)."""
        if self.b > p0:
            warnings.warn(
                f"block width 2*floor(a k log k) = {self.b} exceeds p0 = {p0}; clamping to p0",
                RuntimeWarning,
                stacklevel=2,
            )
            return p0
        return self.b


def block_width(k: int, a: float) -> int:
    """``2 * floor(a * k * log k)``."""
    return 2 * math.floor(a * k * math.log(k))


def taper_weight(i: int, j: int, k: int) -> float:
    """Tapering weight for entry ``(i, j)`` at bandwidth ``k``.

    One inside ``|i - j| <= k/2``, a linear ramp ``2 - |i - j| / (k/2)`` up to
    ``k``, zero beyond.
    """
    d = abs(i - j)
    if 2 * d <= k:
        return 1.0
    if d < k:
        return 2.0 * (k - d) / k
    return 0.0


@lru_cache(maxsize=64)
def _weight_profile(k: int, p: int) -> NDArray[np.float64]:
    d = np.arange(p)
    w = np.where(2 * d <= k, 1.0, np.where(d < k, 2.0 * (k - d) / k, 0.0))
    w.setflags(write=False)
    return w


def taper_weights(p: int, k: int) -> NDArray[np.float64]:
    """The full ``p x p`` weight matrix of :func:`taper_weight`."""
    prof = _weight_profile(int(k), int(p))
    idx = np.arange(p)
    return prof[np.abs(idx[:, None] - idx[None, :])]


def _by_offset(S: NDArray, profile: NDArray) -> NDArray:
    """Multiply every diagonal offset ``d`` of ``S`` by ``profile[d]``."""
    p = S.shape[0]
    nz = np.flatnonzero(profile)
    out = np.zeros_like(S)
    if nz.size == 0:
        return out
    reach = int(nz[-1])
    if reach >= p // 2:
        return S * profile[np.abs(np.subtract.outer(np.arange(p), np.arange(p)))]
    rows = np.arange(p)
    for d in range(reach + 1):
        w = profile[d]
        if w == 0.0:
            continue
        r = rows[: p - d]
        out[r + d, r] = w * S[r + d, r]
        if d:
            out[r, r + d] = w * S[r, r + d]
    return out


def taper(S: ArrayLike, k: int) -> NDArray[np.float64]:
    """Tapered covariance: entrywise product with the weights of :func:`taper_weight`."""
    S = as_symmetric(S, "S")
    if int(k) != k or k < 1:
        raise InputError(f"bandwidth k must be a positive integer, got {k}")
    return _taper(S, int(k))


def _taper(S: NDArray, k: int) -> NDArray:
    return _by_offset(S, _weight_profile(k, S.shape[0]))


def band(S: ArrayLike, k: int) -> NDArray[np.float64]:
    """Banded covariance: entries with ``|i - j| > k`` set to zero."""
    S = as_symmetric(S, "S")
    if int(k) != k or k < 0:
        raise InputError(f"banding width must be a nonnegative integer, got {k}")
    p = S.shape[0]
    profile = (np.arange(p) <= k).astype(float)
    return _by_offset(S, profile)


def pd_adjust(A: ArrayLike, epsilon: float, lambda_min: float | None = None) -> NDArray[np.float64]:
    """Shift ``A`` by ``max(epsilon - lambda_min(A), 0) * I``.

    The input is returned unchanged (as a copy) when its smallest eigenvalue
    is already at least ``epsilon``. ``lambda_min`` may be passed when the
    caller has it already.
    """
    A = as_symmetric(A)
    if not epsilon >= 0:
        raise InputError(f"epsilon must be nonnegative, got {epsilon}")
    return _shift(A, epsilon, lambda_min)


def _shift(A: NDArray, epsilon: float, lambda_min: float | None = None, band: int | None = None) -> NDArray:
    """:func:`pd_adjust` without input validation."""
    lam = _eigen_min(A, band) if lambda_min is None else lambda_min
    shift = epsilon - lam
    out = A.copy()
    if shift > 0:
        out[np.diag_indices_from(out)] += shift
    return out


def _clip(l: int, k: int, q: int) -> tuple[int, int]:
    """0-based half-open range of the clipped window ``(l v 1) .. ((l+k-1) ^ q)``."""
    lo = max(l, 1)
    hi = min(l + k - 1, q)
    return lo - 1, hi


def sub_block(S: ArrayLike, l: int, k: int) -> NDArray[np.float64]:
    """Principal sub-block of rows/columns ``max(l, 1) .. min(l+k-1, q)`` (1-based)."""
    S = as_symmetric(S, "S")
    if k < 1:
        raise InputError(f"block size k must be >= 1, got {k}")
    lo, hi = _clip(l, k, S.shape[0])
    if hi <= lo:
        raise InputError(f"sub-block starting at l={l} with size k={k} is empty for dimension {S.shape[0]}")
    return S[lo:hi, lo:hi].copy()


def sub_block_embedded(S: ArrayLike, l: int, k: int) -> NDArray[np.float64]:
    """Same window as :func:`sub_block`, kept in place inside a zero ``q x q`` matrix.

    An empty window gives the zero matrix.
    """
    S = as_symmetric(S, "S")
    out = np.zeros_like(S)
    lo, hi = _clip(l, k, S.shape[0])
    if hi > lo:
        out[lo:hi, lo:hi] = S[lo:hi, lo:hi]
    return out


def window_sum(S: ArrayLike, k: int) -> NDArray[np.float64]:
    """Sum of :func:`sub_block_embedded` over all window starts ``l = 1-k .. q``."""
    S = as_symmetric(S, "S")
    q = S.shape[0]
    out = np.zeros_like(S)
    for l in range(1 - k, q + 1):
        out += sub_block_embedded(S, l, k)
    return out


def lambda_op(A: ArrayLike, b: int, epsilon: float) -> NDArray[np.float64]:
    """Zero matrix except the trailing ``b x b`` block, which holds the inverse
    of the positive-definite adjusted trailing block of ``A``.

    Raises
    ------
    SingularityError
        If the adjusted trailing block is still singular (only possible with
        ``epsilon == 0``).
    """
    A = as_symmetric(A, "A")
    p0 = A.shape[0]
    if int(b) != b or not 1 <= b <= p0:
        raise InputError(f"block width b must satisfy 1 <= b <= {p0}, got {b}")
    block = sub_block(A, p0 - b + 1, b)
    adjusted = pd_adjust(block, epsilon)
    out = np.zeros_like(A)
    try:
        out[p0 - b :, p0 - b :] = spd_inverse(adjusted)
    except SingularityError as exc:
        raise SingularityError(f"trailing {b}x{b} block is singular after adjustment: {exc}", exc.lambda_min) from None
    return out
