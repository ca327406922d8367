"""Monte-Carlo studies: ground truth, risk tables, paired comparisons, rate slopes.

Replication ``r`` of a study with seed ``s`` draws its data from the stream
``(s, r, DATA)`` and its posterior draws from ``(s, r, POSTERIOR)``; every
method in that replication sees the same data. Results are therefore
identical for any number of worker processes.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .bayes import (
    IWParams,
    banding_post,
    blockwise_post,
    default_prior,
    iw_posterior,
    posterior_means,
    tapering_post,
)
from .estimators import (
    Partition,
    banding_estimator,
    blockwise_estimator,
    cond_mean_operator,
    loss,
    sample_covariance,
    tapering_estimator,
)
from .linalg import InputError, SingularityError, as_symmetric, spd_inverse, sym_eigen_min
from .operators import BlockwiseParams, TaperParams, block_width, pd_adjust
from .rng import CV, DATA, POSTERIOR, derive_seed, substream
from .tuning import METHODS, Candidate, CVReport, base_method, default_grid, loocv_bayes, loocv_frequentist

log = logging.getLogger(__name__)

EXTRA_METHODS = ("oracle", "sample")


@dataclass(frozen=True)
class TruthSpec:
    """Polynomially decaying covariance ``rho |i-j|^{-(alpha+1)}`` with a pinned eigenvalue floor."""

    p: int
    rho: float = 0.6
    alpha: float = 0.1
    floor: float = 0.5

    def __post_init__(self):
        if self.p < 2:
            raise InputError(f"truth dimension must be >= 2, got {self.p}")
        if not self.alpha > 0:
            raise InputError(f"alpha must be positive, got {self.alpha}")


def make_sigma0(spec: TruthSpec) -> NDArray[np.float64]:
    """Unit diagonal and ``rho |i-j|^{-(alpha+1)}`` off the diagonal, then shifted
    by ``floor - lambda_min`` so the smallest eigenvalue equals ``floor``.

    The shift is applied as written even when it is negative.
    """
    d = np.abs(np.subtract.outer(np.arange(spec.p), np.arange(spec.p))).astype(float)
    star = np.where(d == 0, 1.0, spec.rho * np.maximum(d, 1.0) ** (-(spec.alpha + 1.0)))
    shift = spec.floor - sym_eigen_min(star)
    return star + shift * np.eye(spec.p)


def sample_gaussian(Sigma0: ArrayLike, n: int, seed: int | np.random.Generator) -> NDArray[np.float64]:
    """``n`` mean-zero Gaussian rows with covariance ``Sigma0`` (Cholesky factor times normals)."""
    Sigma0 = as_symmetric(Sigma0, "Sigma0")
    try:
        L = np.linalg.cholesky(Sigma0)
    except np.linalg.LinAlgError:
        raise SingularityError("Sigma0 is not positive definite") from None
    return _sample_with_factor(L, n, seed)


def _sample_with_factor(L: NDArray, n: int, seed: int | np.random.Generator) -> NDArray:
    rng = seed if isinstance(seed, np.random.Generator) else substream(seed)
    if n < 0:
        raise InputError(f"sample size must be nonnegative, got {n}")
    return rng.standard_normal((n, L.shape[0])) @ L.T


def t_value(d: ArrayLike) -> float | None:
    """Mean over population standard deviation (divisor ``T``).

    Returns ``None`` when every value is identical (zero spread).
    """
    d = np.asarray(d, dtype=float).ravel()
    if d.size < 2:
        raise InputError(f"t-value needs at least two values, got {d.size}")
    if np.all(d == d[0]):
        return None
    mean = d.mean()
    sd = math.sqrt(np.mean((d - mean) ** 2))
    return float(mean / sd)


def fit_loglog_slope(ns: ArrayLike, risks: ArrayLike) -> float:
    """Least-squares slope of ``log(risk)`` against ``log(n)``."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(risks, dtype=float))
    if x.size < 2 or x.size != y.size:
        raise InputError("slope fit needs matching sequences of length >= 2")
    xc = x - x.mean()
    return float(xc @ (y - y.mean()) / (xc @ xc))


def precision_decay(Sigma0: ArrayLike, k: int, a: float) -> float:
    """Largest column sum of ``|Sigma0^{-1}|`` over entries with ``|i - j| > a k log k``."""
    W = spd_inverse(Sigma0)
    p = W.shape[0]
    threshold = a * k * math.log(k)
    if threshold >= p - 1:
        warnings.warn(
            f"offset a k log k = {threshold:.3g} leaves no entries for p = {p}; returning 0",
            RuntimeWarning,
            stacklevel=2,
        )
        return 0.0
    d = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    return float(np.max(np.sum(np.abs(W) * (d > threshold), axis=0)))


# ---------------------------------------------------------------------------
# Fitting one method on one data set


@dataclass(frozen=True)
class FitOptions:
    k_grid: tuple[int, ...] = tuple(range(2, 11))
    a_grid: tuple[float, ...] = (5.0, 10.0, 20.0)
    epsilon: float = 0.5
    tune: bool = True
    draws: int = 1000
    cv_draws: int = 20
    prior_df: float | None = None
    minimize: bool = False


def _estimate(method: str, S: NDArray, c: Candidate, part: Partition) -> NDArray:
    if method == "tapering":
        return tapering_estimator(S, c.taper_params(), part)
    if method == "blockwise":
        return blockwise_estimator(S, c.blockwise_params(), part)
    if method == "banding":
        return banding_estimator(S, c.k, c.epsilon, part)
    raise InputError(f"unknown frequentist method {method!r}")


def _post_fn(method: str, c: Candidate, part: Partition):
    base = base_method(method)
    if base == "tapering":
        return tapering_post(c.taper_params(), part)
    if base == "blockwise":
        return blockwise_post(c.blockwise_params(), part)
    return banding_post(c.k, c.epsilon, part)


def _support(method: str, c: Candidate) -> int:
    return c.k if base_method(method) == "banding" else c.k - 1


def _prior(p: int, opts: FitOptions) -> IWParams:
    if opts.prior_df is None:
        return default_prior(p)
    return IWParams(np.eye(p), opts.prior_df)


def fit_method(
    method: str,
    Z: NDArray,
    part: Partition,
    opts: FitOptions,
    seed: int = 0,
    truth: NDArray | None = None,
) -> tuple[NDArray, Candidate | None, CVReport | None]:
    """Point estimate of the conditional mean operator for ``method`` on data ``Z``.

    Frequentist methods are tuned by :func:`loocv_frequentist`, posterior
    methods by :func:`loocv_bayes`, when ``opts.tune`` is set and the grid has
    more than one candidate; otherwise the first grid point is used.
    Posterior methods return the posterior mean of ``opts.draws`` draws.
    ``truth`` is the population covariance, needed only by ``"oracle"``.
    """
    if method == "oracle":
        if truth is None:
            raise InputError("the oracle method needs the true covariance")
        return cond_mean_operator(truth, part), None, None
    S = sample_covariance(Z)
    if method == "sample":
        return cond_mean_operator(pd_adjust(S, opts.epsilon), part), None, None
    if method not in METHODS:
        raise InputError(f"unknown method {method!r}")
    grid = default_grid(method, opts.k_grid, opts.a_grid, opts.epsilon)
    report = None
    chosen = grid.candidates[0]
    is_posterior = method.endswith("-ppp")
    if opts.tune and len(grid) > 1:
        if is_posterior:
            report = loocv_bayes(
                Z, part, _prior(part.p, opts), grid, opts.cv_draws, derive_seed(seed, CV), minimize=opts.minimize
            )
        else:
            report = loocv_frequentist(Z, part, grid, minimize=opts.minimize)
        chosen = report.best
    if not is_posterior:
        return _estimate(method, S, chosen, part), chosen, report
    post = iw_posterior(_prior(part.p, opts), Z)
    (mean,) = posterior_means(
        post, [_post_fn(method, chosen, part)], opts.draws, derive_seed(seed, POSTERIOR), support=_support(method, chosen)
    )
    return mean, chosen, report


# ---------------------------------------------------------------------------
# Studies


@dataclass(frozen=True)
class StudyConfig:
    """Declarative description of a Monte-Carlo study.

    ``methods`` lists what :func:`risk_mc` scores; ``pair`` is the ordered pair
    compared by :func:`compare_study` (the difference is ``loss(first) -
    loss(second)``), with their posterior versions compared too when
    ``posterior`` is set.
    """

    truth: TruthSpec
    n: int
    p0: int | None = None
    reps: int = 100
    methods: tuple[str, ...] = ("tapering",)
    k_grid: tuple[int, ...] = tuple(range(2, 11))
    a_grid: tuple[float, ...] = (5.0, 10.0, 20.0)
    epsilon: float = 0.5
    tune: bool = True
    draws: int = 1000
    cv_draws: int = 20
    prior_df: float | None = None
    seed: int = 0
    threads: int = 1
    minimize: bool = False
    pair: tuple[str, str] = ("tapering", "blockwise")
    posterior: bool = True

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "k_grid", tuple(int(k) for k in self.k_grid))
        object.__setattr__(self, "a_grid", tuple(float(a) for a in self.a_grid))
        object.__setattr__(self, "pair", tuple(self.pair))
        if self.p0 is None:
            object.__setattr__(self, "p0", int(round(0.8 * self.truth.p)))
        Partition(self.truth.p, self.p0)
        if self.n < 2:
            raise InputError(f"sample size must be >= 2, got {self.n}")
        if self.reps < 1:
            raise InputError(f"need at least one replication, got {self.reps}")
        for m in self.methods + self.pair:
            if m not in METHODS + EXTRA_METHODS:
                raise InputError(f"unknown method {m!r}")
        if not self.k_grid or not self.a_grid:
            raise InputError("k and a grids must be non-empty")

    @property
    def partition(self) -> Partition:
        return Partition(self.truth.p, self.p0)

    @property
    def fit_options(self) -> FitOptions:
        return FitOptions(
            self.k_grid, self.a_grid, self.epsilon, self.tune, self.draws, self.cv_draws, self.prior_df, self.minimize
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def report_dict(self) -> dict:
        """:meth:`to_dict` without ``threads``, which cannot change any result."""
        d = self.to_dict()
        d.pop("threads")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        d = dict(d)
        d["truth"] = TruthSpec(**d["truth"])
        return cls(**d)


@dataclass
class StudyReport:
    """Aggregated study output. ``wall_clock`` is kept out of :meth:`to_dict`."""

    kind: str
    config: dict
    seed: int
    replications: int
    methods: list[dict] = field(default_factory=list)
    grid: list[dict] = field(default_factory=list)
    rate: dict = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)
    wall_clock: float = 0.0

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("wall_clock")
        return d

    def method(self, name: str) -> dict:
        for m in self.methods:
            if m["method"] == name:
                return m
        raise KeyError(name)

    def cell(self, k: int, a: float) -> dict:
        for g in self.grid:
            if g["k"] == k and g["a"] == a:
                return g
        raise KeyError((k, a))


def _run(fn: Callable, args: Sequence, threads: int) -> list:
    if threads > 1 and len(args) > 1:
        with ProcessPoolExecutor(threads) as pool:
            return list(pool.map(fn, args))
    return [fn(a) for a in args]


class _Truth:
    """Per-config cache of ``Sigma0``, its factor and the target coefficient."""

    _cache: dict = {}

    @classmethod
    def get(cls, spec: TruthSpec, part: Partition):
        key = (spec, part)
        if key not in cls._cache:
            if len(cls._cache) > 4:
                cls._cache.clear()
            sigma0 = make_sigma0(spec)
            cls._cache[key] = (sigma0, np.linalg.cholesky(sigma0), cond_mean_operator(sigma0, part))
        return cls._cache[key]


def _replicate_data(cfg: StudyConfig, r: int) -> tuple[NDArray, NDArray, NDArray]:
    sigma0, L, target = _Truth.get(cfg.truth, cfg.partition)
    Z = _sample_with_factor(L, cfg.n, substream(cfg.seed, r, DATA))
    return sigma0, Z, target


def _risk_replication(args: tuple[StudyConfig, int]) -> dict:
    cfg, r = args
    sigma0, Z, target = _replicate_data(cfg, r)
    part = cfg.partition
    out = {}
    for method in cfg.methods:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                C, chosen, _ = fit_method(method, Z, part, cfg.fit_options, derive_seed(cfg.seed, r), sigma0)
            out[method] = {"loss": loss(C, target), "selected": None if chosen is None else chosen.as_dict()}
        except (SingularityError, InputError, np.linalg.LinAlgError, RuntimeError) as exc:
            out[method] = {"error": f"replication {r}: {exc}"}
    return out


def risk_mc(cfg: StudyConfig) -> StudyReport:
    """Mean spectral-norm loss of each configured method over ``cfg.reps`` replications."""
    start = time.perf_counter()
    results = _run(_risk_replication, [(cfg, r) for r in range(cfg.reps)], cfg.threads)
    report = StudyReport("risk", cfg.report_dict(), cfg.seed, cfg.reps)
    for method in cfg.methods:
        rows = [res[method] for res in results]
        losses = [row["loss"] for row in rows if "loss" in row]
        errors = [row["error"] for row in rows if "error" in row]
        report.failures.extend(f"{method}: {e}" for e in errors)
        report.methods.append(
            {
                "method": method,
                "n": cfg.n,
                "alpha": cfg.truth.alpha,
                "mean_loss": float(np.mean(losses)) if losses else None,
                "sd_loss": float(np.std(losses)) if len(losses) > 1 else None,
                "losses": [float(v) for v in losses],
                "selected": [row.get("selected") for row in rows if "loss" in row],
                "failures": len(errors),
                "complete": not errors,
            }
        )
    report.wall_clock = time.perf_counter() - start
    return report


def _pair_estimates(method: str, S: NDArray, cells: list[tuple[int, float]], cfg: StudyConfig) -> list[NDArray]:
    part = cfg.partition
    out = []
    for k, a in cells:
        c = Candidate(k, a, cfg.epsilon)
        out.append(_estimate(method, S, c, part))
    return out


def _compare_replication(args: tuple[StudyConfig, int]) -> dict:
    cfg, r = args
    sigma0, Z, target = _replicate_data(cfg, r)
    part = cfg.partition
    cells = [(k, a) for k in cfg.k_grid for a in cfg.a_grid]
    first, second = cfg.pair
    out: dict = {"d_f": None, "d_b": None}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            S = sample_covariance(Z)
            l1 = [loss(C, target) for C in _pair_estimates(first, S, cells, cfg)]
            l2 = [loss(C, target) for C in _pair_estimates(second, S, cells, cfg)]
            out["d_f"] = [x - y for x, y in zip(l1, l2)]
        except (SingularityError, InputError, np.linalg.LinAlgError) as exc:
            out["error_f"] = f"replication {r}: {exc}"
        if cfg.posterior:
            try:
                post = iw_posterior(_prior(part.p, cfg.fit_options), Z)
                fns, support = [], 0
                for name in (first, second):
                    for k, a in cells:
                        c = Candidate(k, a, cfg.epsilon)
                        fns.append(_post_fn(name, c, part))
                        support = max(support, _support(name, c))
                means = posterior_means(post, fns, cfg.draws, derive_seed(cfg.seed, r, POSTERIOR), support=support)
                losses = [loss(C, target) for C in means]
                m = len(cells)
                out["d_b"] = [losses[j] - losses[m + j] for j in range(m)]
            except (SingularityError, InputError, np.linalg.LinAlgError, RuntimeError) as exc:
                out["error_b"] = f"replication {r}: {exc}"
    return out


def compare_study(cfg: StudyConfig) -> StudyReport:
    """Paired error reductions ``loss(first) - loss(second)`` over the ``(k, a)`` grid.

    Each replication scores both methods of ``cfg.pair`` (and, with
    ``cfg.posterior``, the posterior means of their post-processed
    posteriors) on the same data, then every grid cell reports the mean
    difference and its t-value.
    """
    start = time.perf_counter()
    results = _run(_compare_replication, [(cfg, r) for r in range(cfg.reps)], cfg.threads)
    report = StudyReport("compare", cfg.report_dict(), cfg.seed, cfg.reps)
    for res in results:
        report.failures.extend(res[key] for key in ("error_f", "error_b") if key in res)
    cells = [(k, a) for k in cfg.k_grid for a in cfg.a_grid]
    for j, (k, a) in enumerate(cells):
        row: dict = {"k": k, "a": a, "b": block_width(k, a)}
        for tag in ("f", "b"):
            ds = [res[f"d_{tag}"][j] for res in results if res.get(f"d_{tag}") is not None]
            complete = len(ds) == cfg.reps
            row[f"mean_d_{tag}"] = float(np.mean(ds)) if ds else None
            row[f"t_{tag}"] = t_value(ds) if len(ds) >= 2 else None
            row[f"complete_{tag}"] = complete
        if not cfg.posterior:
            row["complete_b"] = None
        report.grid.append(row)
    report.wall_clock = time.perf_counter() - start
    return report


def _rate_replication(args: tuple) -> float:
    spec, part, n, k, a, epsilon, seed, r = args
    _, L, target = _Truth.get(spec, part)
    Z = _sample_with_factor(L, n, substream(seed, n, r, DATA))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        C = blockwise_estimator(sample_covariance(Z), BlockwiseParams(k, a, epsilon), part)
    return loss(C, target) ** 2


def rate_study(
    alpha: float,
    n_list: Sequence[int],
    seed: int = 0,
    *,
    reps: int = 30,
    rho: float = 0.6,
    a: float = 2.0,
    epsilon: float | None = None,
    threads: int = 1,
) -> StudyReport:
    """Log-log slope of the blockwise estimator's squared risk against ``n``.

    For each ``n``: ``k = ceil(n^{1/(2 alpha + 1)})``, ``p = 2n``,
    ``p0 = 0.8 p``. ``epsilon`` defaults to ``sqrt(k / n)``, the largest
    order the adjustment may have without dominating the rate.
    """
    n_list = [int(n) for n in n_list]
    if len(n_list) < 3 or any(b <= a_ for a_, b in zip(n_list, n_list[1:])):
        raise InputError("n_list must be strictly increasing with at least three entries")
    if reps < 2:
        raise InputError(f"rate study needs at least two replications, got {reps}")
    start = time.perf_counter()
    ks, ps, risks, eps_used = [], [], [], []
    for n in n_list:
        k = math.ceil(n ** (1.0 / (2.0 * alpha + 1.0)))
        p = 2 * n
        part = Partition(p, int(round(0.8 * p)))
        spec = TruthSpec(p, rho, alpha)
        eps = math.sqrt(k / n) if epsilon is None else epsilon
        sq = _run(_rate_replication, [(spec, part, n, k, a, eps, seed, r) for r in range(reps)], threads)
        ks.append(k)
        ps.append(p)
        eps_used.append(eps)
        risks.append(float(np.mean(sq)))
    cfg = {"alpha": alpha, "n_list": n_list, "reps": reps, "rho": rho, "a": a, "epsilon": epsilon, "seed": seed}
    report = StudyReport("rate", cfg, seed, reps)
    report.rate = {
        "n": n_list,
        "k": ks,
        "p": ps,
        "epsilon": eps_used,
        "risk": risks,
        "slope": fit_loglog_slope(n_list, risks),
        "theory_slope": -2.0 * alpha / (2.0 * alpha + 1.0),
    }
    report.wall_clock = time.perf_counter() - start
    return report
