"""Post-processed posteriors for the conditional mean operator.

The initial posterior is the conjugate inverse-Wishart. Its parameterization
has density proportional to ``|Sigma|^{-df/2} exp(-tr(Sigma^{-1} B)/2)``, so a
draw ``Sigma`` has precision ``Sigma^{-1} ~ Wishart(B^{-1}, df - p - 1)`` and
``df > 2p`` is required. Posterior draws are mapped through a post-processing
function (tapering, blockwise tapering or banding followed by the conditional
mean operator); the posterior mean of the mapped draws is the point estimate.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg as sla

from .estimators import (
    Partition,
    _cond_mean,
    adjusted_band,
    blockwise_from_tapered,
    cond_mean_operator,
    loss,
)
from .linalg import InputError, SingularityError, as_symmetric, sym_eigen_min
from .operators import BlockwiseParams, TaperParams, _shift, _taper
from .rng import substream

PostFn = Callable[[NDArray], NDArray]


@dataclass(frozen=True, eq=False)
class IWParams:
    """Inverse-Wishart scale matrix and degrees of freedom (``df > 2p``)."""

    scale: NDArray
    df: float

    def __post_init__(self):
        scale = as_symmetric(self.scale, "scale")
        object.__setattr__(self, "scale", scale)
        p = scale.shape[0]
        if not self.df > 2 * p:
            raise InputError(f"inverse-Wishart df must exceed 2p = {2 * p}, got {self.df}")
        lam = sym_eigen_min(scale)
        if lam <= 0:
            raise InputError(f"inverse-Wishart scale must be positive definite (lambda_min = {lam:.6g})")

    @property
    def dim(self) -> int:
        return self.scale.shape[0]


def default_prior(p: int) -> IWParams:
    """``B0 = I_p`` and ``df0 = 2p + 3``."""
    return IWParams(np.eye(p), 2 * p + 3)


def iw_posterior(prior: IWParams, Z: ArrayLike) -> IWParams:
    """Conjugate update: scale ``B0 + n S_n`` and df ``df0 + n``."""
    Z = np.asarray(Z, dtype=float).reshape(-1, prior.dim) if np.size(Z) == 0 else np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[1] != prior.dim:
        raise InputError(f"data has shape {Z.shape}; prior expects {prior.dim} columns")
    n = Z.shape[0]
    if n == 0:
        return prior
    return IWParams(prior.scale + Z.T @ Z, prior.df + n)


@lru_cache(maxsize=8)
def _tril(p: int) -> tuple[NDArray, NDArray]:
    return np.tril_indices(p, -1)


def bartlett_factor(p: int, df: float, rng: np.random.Generator) -> NDArray[np.float64]:
    """Lower-triangular ``A`` with ``A A^T ~ Wishart(I_p, df)``.

    Diagonal entries are ``sqrt(chi2(df - i))`` for ``i = 0..p-1``, entries
    below the diagonal standard normal.
    """
    if not df > p - 1:
        raise InputError(f"Wishart df must exceed p - 1 = {p - 1}, got {df}")
    A = np.zeros((p, p))
    rows, cols = _tril(p)
    A[rows, cols] = rng.standard_normal(rows.size)
    A[np.diag_indices(p)] = np.sqrt(rng.chisquare(df - np.arange(p)))
    return A


def wishart_sample(scale: ArrayLike, df: float, rng: np.random.Generator) -> NDArray[np.float64]:
    """One draw from ``Wishart(scale, df)`` (mean ``df * scale``) by the Bartlett decomposition."""
    scale = as_symmetric(scale, "scale")
    p = scale.shape[0]
    try:
        L = np.linalg.cholesky(scale)
    except np.linalg.LinAlgError:
        raise InputError("Wishart scale must be positive definite") from None
    LA = L @ bartlett_factor(p, df, rng)
    W = LA @ LA.T
    return 0.5 * (W + W.T)


def _upper_factor(B: NDArray) -> NDArray:
    """Upper-triangular ``C`` with ``C @ C.T == B``."""
    R = np.linalg.cholesky(B[::-1, ::-1])
    return np.ascontiguousarray(R[::-1, ::-1])


def _tri_solve_lower_rhs(A: NDArray, R: NDArray, block: int = 96) -> NDArray:
    """``inv(A) @ R`` for lower-triangular ``A`` and ``R``, skipping the zero upper part."""
    p = A.shape[0]
    out = np.zeros((p, p))
    for j0 in range(0, p, block):
        j1 = min(j0 + block, p)
        out[j0:, j0:j1] = sla.solve_triangular(A[j0:, j0:], R[j0:, j0:j1], lower=True, check_finite=False)
    return out


def _banded_gram(M: NDArray, bw: int) -> NDArray:
    """Entries of ``M.T @ M`` with ``|i - j| <= bw``; zero elsewhere."""
    p = M.shape[1]
    out = np.zeros((p, p))
    idx = np.arange(p)
    for d in range(min(bw, p - 1) + 1):
        v = np.einsum("ij,ij->j", M[:, : p - d], M[:, d:])
        out[idx[: p - d], idx[d:]] = v
        out[idx[d:], idx[: p - d]] = v
    return out


class _IWSampler:
    """Factorizes the scale once; each draw costs one triangular solve."""

    def __init__(self, params: IWParams):
        self.p = params.dim
        self.wdf = params.df - self.p - 1
        # scale = C C^T with C upper, so L = C^{-T} is lower and L L^T = scale^{-1}.
        self.CT = np.ascontiguousarray(_upper_factor(params.scale).T)

    def draw(self, rng: np.random.Generator, support: int | None = None) -> NDArray:
        # Sigma = (L A A^T L^T)^{-1} = M^T M with M = A^{-1} C^T lower triangular.
        A = bartlett_factor(self.p, self.wdf, rng)
        M = _tri_solve_lower_rhs(A, self.CT)
        if support is not None and support < self.p - 1:
            return _banded_gram(M, support)
        S = M.T @ M
        return 0.5 * (S + S.T)


def iw_sample(params: IWParams, rng: np.random.Generator) -> NDArray[np.float64]:
    """One covariance draw from the inverse-Wishart ``params``.

    Equivalent to drawing ``W ~ Wishart(scale^{-1}, df - p - 1)`` and
    returning ``W^{-1}``.
    """
    return _IWSampler(params).draw(rng)


@dataclass(eq=False)
class PosteriorDraws:
    """Post-processed draws stacked along axis 0, with the seed that produced them."""

    draws: NDArray
    seed: int

    @property
    def count(self) -> int:
        return self.draws.shape[0]

    def __len__(self) -> int:
        return self.count


class PostProcessingError(RuntimeError):
    def __init__(self, index: int, cause: Exception):
        super().__init__(f"post-processing failed on draw {index}: {cause}")
        self.index = index
        self.cause = cause


def ppp(
    params: IWParams,
    post_fn: PostFn,
    N: int = 1000,
    seed: int = 0,
    *,
    support: int | None = None,
    threads: int = 1,
) -> PosteriorDraws:
    """Draw ``N`` covariances from ``params`` and map each through ``post_fn``.

    Draw ``s`` uses the random stream ``(seed, s)``, so results do not depend
    on ``threads``. When ``post_fn`` only reads entries with
    ``|i - j| <= support`` (tapering at bandwidth ``k`` reads ``k - 1``,
    banding at ``k`` reads ``k``), passing ``support`` skips forming the rest
    of each draw.
    """
    if N < 1:
        raise InputError(f"need at least one posterior draw, got N={N}")
    sampler = _IWSampler(params)

    def one(s: int) -> NDArray:
        sigma = sampler.draw(substream(seed, s), support)
        try:
            return np.asarray(post_fn(sigma), dtype=float)
        except (SingularityError, InputError, np.linalg.LinAlgError) as exc:
            raise PostProcessingError(s, exc) from exc

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            out = list(pool.map(one, range(N)))
    else:
        out = [one(s) for s in range(N)]
    return PosteriorDraws(np.stack(out), int(seed))


def posterior_mean(d: PosteriorDraws) -> NDArray[np.float64]:
    if d.count < 1:
        raise InputError("posterior mean of an empty set of draws")
    return d.draws.mean(axis=0)


def p_loss(d: PosteriorDraws, C_true: ArrayLike) -> float:
    """Monte-Carlo estimate of the posterior expected squared spectral loss."""
    if d.count < 1:
        raise InputError("P-loss of an empty set of draws")
    return float(np.mean([loss(D, C_true) ** 2 for D in d.draws]))


def tapering_post(params: TaperParams, part: Partition) -> PostFn:
    k, eps = params.k, params.epsilon
    return lambda sigma: _cond_mean(_shift(_taper(sigma, k), eps, band=k - 1), part, band=k - 1)


def banding_post(k: int, epsilon: float, part: Partition) -> PostFn:
    return lambda sigma: cond_mean_operator(adjusted_band(sigma, k, epsilon), part)


def blockwise_post(params: BlockwiseParams, part: Partition) -> PostFn:
    b = params.width(part.p0)
    return lambda sigma: blockwise_from_tapered(_taper(sigma, params.k), b, params.epsilon, part)


def posterior_means(
    params: IWParams,
    post_fns: list[PostFn],
    N: int = 1000,
    seed: int = 0,
    *,
    support: int | None = None,
) -> list[NDArray]:
    """Posterior means of several post-processing functions over one shared set of draws.

    Uses the same draw streams as :func:`ppp` but keeps only running sums,
    so memory does not grow with ``N``.
    """
    if N < 1:
        raise InputError(f"need at least one posterior draw, got N={N}")
    sampler = _IWSampler(params)
    sums: list[NDArray | None] = [None] * len(post_fns)
    for s in range(N):
        sigma = sampler.draw(substream(seed, s), support)
        for j, fn in enumerate(post_fns):
            try:
                value = np.asarray(fn(sigma), dtype=float)
            except (SingularityError, InputError, np.linalg.LinAlgError) as exc:
                raise PostProcessingError(s, exc) from exc
            sums[j] = value.copy() if sums[j] is None else sums[j] + value
    return [total / N for total in sums]
