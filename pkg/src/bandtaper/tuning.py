"""Leave-one-out cross-validation of tuning parameters.

Each candidate covariance estimator induces a conditional Gaussian model for
``Y`` given ``X``: mean ``psi(Sigma_hat) x`` and variance ``nu(Sigma_hat)``.
Candidates are scored by the held-out conditional log-likelihood summed over
folds. The blockwise estimator has no conditional variance of its own and
borrows the one of the tapering estimator with the same ``k`` and ``epsilon``.

The candidate with the largest total log-likelihood is selected. Passing
``minimize=True`` selects the smallest total instead, which is the literal
reading of the criterion as it is sometimes stated.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from .bayes import IWParams, _IWSampler, iw_posterior
from .estimators import (
    Partition,
    adjusted_band,
    blockwise_from_tapered,
    conditional_gaussian,
)
from .linalg import InputError, SingularityError
from .operators import BlockwiseParams, TaperParams, pd_adjust, taper
from .rng import substream

log = logging.getLogger(__name__)

METHODS = ("tapering", "blockwise", "banding", "tapering-ppp", "blockwise-ppp", "banding-ppp")
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, order=True)
class Candidate:
    """One tuning vector. ``a`` is only used by the blockwise methods."""

    k: int
    a: float = 0.0
    epsilon: float = 0.5

    def taper_params(self) -> TaperParams:
        return TaperParams(self.k, self.epsilon)

    def blockwise_params(self) -> BlockwiseParams:
        return BlockwiseParams(self.k, self.a, self.epsilon)

    def as_dict(self) -> dict:
        return {"k": self.k, "a": self.a, "epsilon": self.epsilon}


@dataclass(frozen=True)
class TuningGrid:
    candidates: tuple[Candidate, ...]
    method: str

    def __post_init__(self):
        if self.method not in METHODS:
            raise InputError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not self.candidates:
            raise InputError("tuning grid is empty")
        object.__setattr__(self, "candidates", tuple(self.candidates))
        for c in self.candidates:
            if base_method(self.method) == "blockwise":
                c.blockwise_params()
            elif base_method(self.method) == "banding":
                if c.k < 0 or c.epsilon < 0:
                    raise InputError(f"invalid banding candidate {c}")
            else:
                c.taper_params()

    def __len__(self) -> int:
        return len(self.candidates)

    @property
    def support(self) -> int:
        """Largest ``|i - j|`` any candidate's post-processing reads."""
        if base_method(self.method) == "banding":
            return max(c.k for c in self.candidates)
        return max(c.k for c in self.candidates) - 1


def base_method(method: str) -> str:
    return method.removesuffix("-ppp")


def default_grid(
    method: str,
    k_values: Iterable[int] = range(2, 11),
    a_values: Iterable[float] = (5, 10, 20),
    epsilon: float = 0.5,
) -> TuningGrid:
    if base_method(method) == "blockwise":
        cands = [Candidate(k, float(a), epsilon) for k in k_values for a in a_values]
    else:
        cands = [Candidate(k, 0.0, epsilon) for k in k_values]
    return TuningGrid(tuple(cands), method)


@dataclass
class CVReport:
    """Per-candidate total scores, the selected index, and per-fold detail."""

    grid: TuningGrid
    scores: NDArray
    fold_scores: NDArray
    selected: int
    diagnostics: list[str] = field(default_factory=list)

    @property
    def best(self) -> Candidate:
        return self.grid.candidates[self.selected]

    def to_dict(self) -> dict:
        return {
            "method": self.grid.method,
            "candidates": [c.as_dict() for c in self.grid.candidates],
            "scores": [None if not np.isfinite(s) else float(s) for s in self.scores],
            "selected": self.selected,
            "best": self.best.as_dict(),
            "diagnostics": list(self.diagnostics),
        }


def gaussian_cond_loglik(y: ArrayLike, m: ArrayLike, V: ArrayLike) -> float:
    """Log density of ``N(m, V)`` at ``y``."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    m = np.atleast_1d(np.asarray(m, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    q = y.shape[0]
    if m.shape != (q,) or V.shape != (q, q):
        raise InputError(f"dimension mismatch: y {y.shape}, m {m.shape}, V {V.shape}")
    try:
        L = np.linalg.cholesky(V)
    except np.linalg.LinAlgError:
        raise SingularityError("conditional variance is not positive definite") from None
    diag = np.diagonal(L)
    if np.min(diag) <= 0:
        raise SingularityError("conditional variance is not positive definite")
    r = np.linalg.solve(L, y - m) if q > 1 else (y - m) / diag
    return float(-0.5 * (q * LOG_2PI + 2.0 * np.sum(np.log(diag)) + r @ r))


def _select(scores: NDArray, grid: TuningGrid, minimize: bool) -> int:
    s = -scores if minimize else scores
    finite = np.isfinite(s)
    if not finite.any():
        return 0
    top = np.max(s[finite])
    tied = [i for i in range(len(s)) if s[i] == top]
    return min(tied, key=lambda i: (grid.candidates[i], i))


def _candidate_models(S: NDArray, grid: TuningGrid, part: Partition):
    """Yield ``(psi, nu)`` per candidate for covariance ``S``; errors are yielded as exceptions."""
    method = base_method(grid.method)
    tapered: dict[int, NDArray] = {}
    taper_models: dict[tuple[int, float], object] = {}

    def taper_model(k: int, eps: float):
        key = (k, eps)
        if key not in taper_models:
            try:
                if k not in tapered:
                    tapered[k] = taper(S, k)
                taper_models[key] = conditional_gaussian(pd_adjust(tapered[k], eps), part)
            except (SingularityError, np.linalg.LinAlgError) as exc:
                taper_models[key] = exc
        return taper_models[key]

    for c in grid.candidates:
        try:
            if method == "tapering":
                model = taper_model(c.k, c.epsilon)
                if isinstance(model, Exception):
                    raise model
                yield model
            elif method == "banding":
                yield conditional_gaussian(adjusted_band(S, c.k, c.epsilon), part)
            else:
                base = taper_model(c.k, c.epsilon)
                if isinstance(base, Exception):
                    raise base
                b = c.blockwise_params().width(part.p0)
                yield blockwise_from_tapered(tapered[c.k], b, c.epsilon, part), base[1]
        except (SingularityError, np.linalg.LinAlgError) as exc:
            yield exc


def loocv_frequentist(
    Z: ArrayLike, part: Partition, grid: TuningGrid, *, minimize: bool = False
) -> CVReport:
    """Leave-one-out CV score of every candidate of a frequentist method."""
    Z = np.asarray(Z, dtype=float)
    n = Z.shape[0]
    if n < 2:
        raise InputError(f"leave-one-out CV needs n >= 2, got {n}")
    if Z.shape[1] != part.p:
        raise InputError(f"data has {Z.shape[1]} columns, partition expects {part.p}")
    if grid.method.endswith("-ppp"):
        raise InputError(f"{grid.method} is a posterior method; use loocv_bayes")
    gram = Z.T @ Z
    m = len(grid)
    fold = np.full((n, m), -np.inf)
    diagnostics: list[str] = []
    for i in range(n):
        z = Z[i]
        S = (gram - np.outer(z, z)) / (n - 1)
        S = 0.5 * (S + S.T)
        x, y = z[: part.p0], z[part.p0 :]
        for j, model in enumerate(_candidate_models(S, grid, part)):
            if isinstance(model, Exception):
                diagnostics.append(f"fold {i}, candidate {j}: {model}")
                continue
            psi, nu = model
            try:
                fold[i, j] = gaussian_cond_loglik(y, psi @ x, nu)
            except SingularityError as exc:
                diagnostics.append(f"fold {i}, candidate {j}: {exc}")
    scores = fold.sum(axis=0)
    return CVReport(grid, scores, fold, _select(scores, grid, minimize), diagnostics)


def loocv_bayes(
    Z: ArrayLike,
    part: Partition,
    prior: IWParams,
    grid: TuningGrid,
    S: int = 20,
    seed: int = 0,
    *,
    minimize: bool = False,
) -> CVReport:
    """Bayesian leave-one-out CV of a post-processed posterior method.

    Fold ``i`` draws ``S`` covariances from the posterior given all rows but
    ``i`` (stream ``(seed, i, s)``), shares them across candidates, and scores
    ``Y_i`` by the log of the average predictive density over the draws.
    Draws whose post-processing fails are dropped for that candidate.
    """
    Z = np.asarray(Z, dtype=float)
    n = Z.shape[0]
    if n < 2:
        raise InputError(f"leave-one-out CV needs n >= 2, got {n}")
    if S < 1:
        raise InputError(f"need at least one draw per fold, got S={S}")
    if Z.shape[1] != part.p or prior.dim != part.p:
        raise InputError("data, prior and partition dimensions disagree")
    m = len(grid)
    support = grid.support
    fold = np.full((n, m), -np.inf)
    diagnostics: list[str] = []
    for i in range(n):
        post = iw_posterior(prior, np.delete(Z, i, axis=0))
        sampler = _IWSampler(post)
        x, y = Z[i, : part.p0], Z[i, part.p0 :]
        ll = np.full((S, m), -np.inf)
        for s in range(S):
            sigma = sampler.draw(substream(seed, i, s), support)
            for j, model in enumerate(_candidate_models(sigma, grid, part)):
                if isinstance(model, Exception):
                    diagnostics.append(f"fold {i}, draw {s}, candidate {j}: {model}")
                    continue
                psi, nu = model
                try:
                    ll[s, j] = gaussian_cond_loglik(y, psi @ x, nu)
                except SingularityError as exc:
                    diagnostics.append(f"fold {i}, draw {s}, candidate {j}: {exc}")
        for j in range(m):
            ok = np.isfinite(ll[:, j])
            if ok.any():
                fold[i, j] = logsumexp(ll[ok, j]) - math.log(ok.sum())
            else:
                diagnostics.append(f"fold {i}, candidate {j}: no surviving posterior draw")
    scores = fold.sum(axis=0)
    return CVReport(grid, scores, fold, _select(scores, grid, minimize), diagnostics)
