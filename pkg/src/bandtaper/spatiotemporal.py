"""Forecasting trailing time blocks of space-time panels.

A unit (for example one day) is an ``S x T`` grid ``x[s, t]``. Flattening it
time-major, ``(x[1,1], ..., x[S,1], x[1,2], ..., x[S,T])``, turns covariances
that decay in the time lag into a bandable covariance, so the estimators
apply with the first ``t0 * S`` coordinates as covariates and the remaining
``(T - t0) * S`` as responses.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .estimators import Partition
from .linalg import InputError, sym_eigen_min
from .simulation import FitOptions, fit_method


@dataclass
class Panel:
    """Units stacked as an ``(n, S, T)`` array, plus their identifiers."""

    days: NDArray
    unit_ids: list[str] = field(default_factory=list)
    dropped: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.days = np.asarray(self.days, dtype=float)
        if self.days.ndim != 3:
            raise InputError(f"panel must have shape (n, S, T), got {self.days.shape}")
        if not np.all(np.isfinite(self.days)):
            raise InputError("panel has missing or non-finite entries")
        if not self.unit_ids:
            self.unit_ids = [str(i + 1) for i in range(self.days.shape[0])]

    @property
    def S(self) -> int:
        return self.days.shape[1]

    @property
    def T(self) -> int:
        return self.days.shape[2]

    def __len__(self) -> int:
        return self.days.shape[0]

    def vectors(self) -> NDArray:
        """``n x (T*S)`` data matrix of rearranged units."""
        return np.stack([rearrange(g) for g in self.days]) if len(self) else np.zeros((0, self.S * self.T))


@dataclass(frozen=True)
class ForecastTask:
    """Predict times ``t0+1 .. T`` from times ``1 .. t0`` for every location."""

    S: int
    T: int
    t0: int

    def __post_init__(self):
        if not 1 <= self.t0 < self.T:
            raise InputError(f"cut time must satisfy 1 <= t0 < T = {self.T}, got {self.t0}")

    @property
    def p(self) -> int:
        return self.T * self.S

    @property
    def p0(self) -> int:
        return self.t0 * self.S

    @property
    def partition(self) -> Partition:
        return Partition(self.p, self.p0)


def rearrange(g: ArrayLike) -> NDArray[np.float64]:
    """Flatten an ``S x T`` grid time-major, space-minor."""
    g = np.asarray(g, dtype=float)
    if g.ndim != 2:
        raise InputError(f"grid must be 2-d (S x T), got shape {g.shape}")
    return g.T.reshape(-1)


def unrearrange(z: ArrayLike, S: int, T: int) -> NDArray[np.float64]:
    """Inverse of :func:`rearrange`."""
    z = np.asarray(z, dtype=float)
    if z.size != S * T:
        raise InputError(f"vector of length {z.size} cannot hold a {S} x {T} grid")
    return z.reshape(T, S).T.copy()


def center(Z: ArrayLike, mean: ArrayLike | None = None) -> tuple[NDArray, NDArray]:
    """Subtract column means (or the supplied ``mean``) and return them."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[0] < 1:
        raise InputError(f"need an n x p matrix with n >= 1, got shape {Z.shape}")
    mu = Z.mean(axis=0) if mean is None else np.asarray(mean, dtype=float)
    return Z - mu, mu


def forecast_error(C_hat: ArrayLike, test: ArrayLike, task: ForecastTask) -> float:
    """Mean Euclidean norm of ``C_hat x - y`` over the test rows."""
    C_hat = np.asarray(C_hat, dtype=float)
    test = np.asarray(test, dtype=float)
    if test.ndim != 2 or test.shape[0] < 1:
        raise InputError("test set is empty")
    if test.shape[1] != task.p or C_hat.shape != (task.p - task.p0, task.p0):
        raise InputError(
            f"shape mismatch: test {test.shape}, coefficients {C_hat.shape}, task p={task.p}, p0={task.p0}"
        )
    X, Y = test[:, : task.p0], test[:, task.p0 :]
    return float(np.mean(np.linalg.norm(X @ C_hat.T - Y, axis=1)))


@dataclass
class ForecastReport:
    """One row per method: forecast error on the held-out units."""

    rows: list[dict]
    n_train: int
    n_test: int
    dropped: list[str] = field(default_factory=list)

    def error(self, method: str) -> float:
        for r in self.rows:
            if r["method"] == method:
                return r["error"]
        raise KeyError(method)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "error"])
        for r in self.rows:
            w.writerow([r["method"], "" if r["error"] is None else f"{r['error']:.6g}"])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"rows": self.rows, "n_train": self.n_train, "n_test": self.n_test, "dropped": self.dropped}


def run_forecast(
    panel: Panel,
    task: ForecastTask,
    methods: Sequence[str] = ("tapering", "blockwise"),
    opts: FitOptions | None = None,
    seed: int = 0,
) -> ForecastReport:
    """Chronological half split, centering on training means, fit and score each method.

    The first ``ceil(n/2)`` units train and the rest test, in input order.
    Method failures are reported as a missing error with a message.
    """
    if (panel.S, panel.T) != (task.S, task.T):
        raise InputError(f"panel is {panel.S} x {panel.T} but task expects {task.S} x {task.T}")
    n = len(panel)
    if n < 2:
        raise InputError(f"forecasting needs at least two units, got {n}")
    opts = opts or FitOptions()
    Z = panel.vectors()
    n_train = math.ceil(n / 2)
    train, mu = center(Z[:n_train])
    test, _ = center(Z[n_train:], mu)
    if test.shape[0] == 0:
        raise InputError("no units left for testing")
    rows = []
    for method in methods:
        try:
            C, chosen, _ = fit_method(method, train, task.partition, opts, seed)
            rows.append(
                {
                    "method": method,
                    "error": forecast_error(C, test, task),
                    "selected": None if chosen is None else chosen.as_dict(),
                }
            )
        except (InputError, np.linalg.LinAlgError, RuntimeError) as exc:
            rows.append({"method": method, "error": None, "message": str(exc)})
    return ForecastReport(rows, n_train, n - n_train, list(panel.dropped))


# ---------------------------------------------------------------------------
# CSV ingestion and a synthetic generator


def panel_header(S: int, T: int) -> list[str]:
    return ["unit_id"] + [f"x_s{s}_t{t}" for t in range(1, T + 1) for s in range(1, S + 1)]


def _parse_header(header: list[str]) -> tuple[int, int]:
    if not header or header[0].strip() != "unit_id":
        raise InputError("panel CSV must start with a 'unit_id' column")
    cells = []
    for name in header[1:]:
        name = name.strip()
        try:
            s_part, t_part = name.split("_")[1:]
            cells.append((int(s_part.removeprefix("s")), int(t_part.removeprefix("t"))))
        except ValueError:
            raise InputError(f"bad panel column name {name!r}; expected x_s<s>_t<t>") from None
    S = max(s for s, _ in cells)
    T = max(t for _, t in cells)
    expected = [(s, t) for t in range(1, T + 1) for s in range(1, S + 1)]
    if cells != expected:
        raise InputError("panel columns must be ordered time-major, space-minor: x_s1_t1, x_s2_t1, ...")
    return S, T


def read_panel(path: str | Path) -> Panel:
    """Read a panel CSV; units with empty or non-numeric cells are dropped."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path} is empty") from None
        S, T = _parse_header(header)
        days, ids, dropped = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            uid = row[0].strip()
            if len(row) != S * T + 1:
                dropped.append(f"{uid or lineno}: expected {S * T} values, got {len(row) - 1}")
                continue
            try:
                vals = np.array([float(v) for v in row[1:]])
            except ValueError:
                dropped.append(f"{uid}: missing or non-numeric value")
                continue
            if not np.all(np.isfinite(vals)):
                dropped.append(f"{uid}: missing or non-numeric value")
                continue
            days.append(unrearrange(vals, S, T))
            ids.append(uid)
    arr = np.stack(days) if days else np.zeros((0, S, T))
    return Panel(arr, ids, dropped)


def write_panel(panel: Panel, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(panel_header(panel.S, panel.T))
        for uid, g in zip(panel.unit_ids, panel.days):
            w.writerow([uid] + [repr(float(v)) for v in rearrange(g)])


def panel_covariance(S: int, T: int, alpha: float = 0.5, c: float = 1.0, length: float = 2.0) -> NDArray:
    """Covariance of a rearranged panel whose time-lag covariance decays like ``(1 + lag)^{-(alpha+1)}``.

    Built as ``R kron Q`` with ``R`` a Toeplitz matrix in the time lag (raised
    to a positive minimum eigenvalue if needed) and ``Q`` an exponential
    spatial correlation, so every entry satisfies
    ``|cov| <= c (1 + |t1 - t2|)^{-(alpha+1)}`` up to the eigenvalue lift.
    """
    lag = np.abs(np.subtract.outer(np.arange(T), np.arange(T)))
    R = c * (1.0 + lag) ** (-(alpha + 1.0))
    lam = sym_eigen_min(R)
    if lam < 0.05 * c:
        R = R + (0.05 * c - lam) * np.eye(T)
    loc = np.arange(S)
    Q = np.exp(-np.abs(np.subtract.outer(loc, loc)) / length)
    return np.kron(R, Q)


def synthetic_panel(
    n: int, S: int, T: int, seed: int | np.random.Generator = 0, alpha: float = 0.5, mean: float = 0.0
) -> Panel:
    """Gaussian panel with :func:`panel_covariance` and a constant mean level."""
    from .simulation import sample_gaussian

    Z = sample_gaussian(panel_covariance(S, T, alpha), n, seed) + mean
    return Panel(np.stack([unrearrange(z, S, T) for z in Z]) if n else np.zeros((0, S, T)))
