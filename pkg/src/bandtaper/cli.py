"""Command-line front end.

Every subcommand writes its outputs plus one ``manifest.json`` into ``--out``.
Settings are resolved in this order, later winning: built-in defaults, the
``--config`` INI file, environment variables ``BANDTAPER_<SECTION>_<KEY>``,
explicit command-line flags.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import datetime as dt
import hashlib
import io
import json
import math
import os
import re
import sys
import warnings
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .bayes import PostProcessingError, default_prior, IWParams
from .estimators import Partition
from .linalg import InputError, SingularityError
from .simulation import (
    EXTRA_METHODS,
    FitOptions,
    StudyConfig,
    TruthSpec,
    compare_study,
    fit_method,
    make_sigma0,
    precision_decay,
    rate_study,
    risk_mc,
)
from .spatiotemporal import ForecastTask, read_panel, run_forecast
from .tuning import METHODS, default_grid, loocv_bayes, loocv_frequentist

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
ENV_PREFIX = "BANDTAPER_"


class ConfigError(InputError):
    pass


# ---------------------------------------------------------------------------
# Settings


DEFAULTS: dict[str, dict[str, str]] = {
    "run": {"seed": "0", "threads": "1", "minimize": "false"},
    "truth": {"p": "60", "rho": "0.6", "alpha": "0.1", "floor": "0.5"},
    "study": {
        "n": "30",
        "p0": "",
        "reps": "20",
        "methods": "tapering, banding, blockwise",
        "k_grid": "2-10",
        "a_grid": "5, 10, 20",
        "epsilon": "0.5",
        "tune": "true",
        "draws": "1000",
        "cv_draws": "20",
        "prior_df": "",
        "pair": "tapering, blockwise",
        "posterior": "true",
        "compare": "false",
    },
    "rate": {"alpha": "0.5", "n": "100, 200, 400, 800", "reps": "30", "rho": "0.6", "a": "2", "epsilon": ""},
    "fit": {
        "method": "tapering",
        "p0": "",
        "k": "",
        "a": "5",
        "epsilon": "0.5",
        "k_grid": "2-10",
        "a_grid": "5, 10, 20",
        "draws": "1000",
        "cv_draws": "20",
        "prior_df": "",
    },
    "forecast": {"t0": "", "methods": "tapering, blockwise"},
    "decay": {"p": "200", "rho": "0.6", "alpha": "0.3", "k": "3, 5, 8", "a": "5"},
}


class Settings:
    """Layered key-value settings with typed getters."""

    def __init__(self, config_path: str | None, overrides: dict[str, dict[str, Any]]):
        cp = configparser.ConfigParser(interpolation=None)
        cp.read_dict(DEFAULTS)
        self.sources: list[str] = []
        if config_path:
            path = Path(config_path)
            if not path.is_file():
                raise ConfigError(f"config file not found: {config_path}")
            try:
                cp.read_string(path.read_text(encoding="utf-8"), source=str(path))
            except configparser.Error as exc:
                raise ConfigError(f"cannot parse config {config_path}: {exc}") from None
            for section in cp.sections():
                if section not in DEFAULTS:
                    raise ConfigError(f"unknown config section [{section}] in {config_path}")
                for key in cp[section]:
                    if key not in DEFAULTS[section]:
                        raise ConfigError(f"unknown key {key!r} in section [{section}]")
            self.sources.append(str(path))
        for name, value in os.environ.items():
            if not name.startswith(ENV_PREFIX):
                continue
            rest = name[len(ENV_PREFIX) :].lower()
            section, _, key = rest.partition("_")
            if section in DEFAULTS and key in DEFAULTS[section]:
                cp[section][key] = value
                self.sources.append(f"env:{name}")
        for section, values in overrides.items():
            for key, value in values.items():
                if value is not None:
                    cp[section][key] = value if isinstance(value, str) else _fmt_setting(value)
        self.cp = cp

    def raw(self, section: str, key: str) -> str:
        return self.cp[section][key].strip()

    def get_int(self, section: str, key: str, optional: bool = False) -> int | None:
        v = self.raw(section, key)
        if optional and v == "":
            return None
        try:
            return int(v)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be an integer, got {v!r}") from None

    def get_float(self, section: str, key: str, optional: bool = False) -> float | None:
        v = self.raw(section, key)
        if optional and v == "":
            return None
        try:
            return float(v)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be a number, got {v!r}") from None

    def get_bool(self, section: str, key: str) -> bool:
        v = self.raw(section, key).lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"[{section}] {key} must be true or false, got {v!r}")

    def get_list(self, section: str, key: str) -> list[str]:
        return [item.strip() for item in self.raw(section, key).split(",") if item.strip()]

    def get_ints(self, section: str, key: str) -> list[int]:
        out: list[int] = []
        for item in self.get_list(section, key):
            m = re.fullmatch(r"(\d+)\s*-\s*(\d+)", item)
            try:
                out.extend(range(int(m[1]), int(m[2]) + 1) if m else [int(item)])
            except ValueError:
                raise ConfigError(f"[{section}] {key}: cannot read integer list item {item!r}") from None
        if not out:
            raise ConfigError(f"[{section}] {key} must not be empty")
        return out

    def get_floats(self, section: str, key: str) -> list[float]:
        try:
            out = [float(item) for item in self.get_list(section, key)]
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be a comma-separated list of numbers") from None
        if not out:
            raise ConfigError(f"[{section}] {key} must not be empty")
        return out

    def resolved(self, sections: Sequence[str]) -> dict[str, dict[str, str]]:
        return {s: dict(self.cp[s]) for s in sections}


def _fmt_setting(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ", ".join(_fmt_setting(x) for x in v)
    return str(v)


# ---------------------------------------------------------------------------
# Output helpers


def _json_default(o: Any):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _clean(o: Any) -> Any:
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(o, float):
        return o if math.isfinite(o) else None
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def dumps(obj: Any) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default, allow_nan=False) + "\n"


def fmt6(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return f"{v:.6g}" if math.isfinite(v) else ""


def csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt6(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


def sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


class Run:
    """Collects outputs and writes the run manifest."""

    def __init__(self, command: str, argv: Sequence[str], out: Path):
        self.command = command
        self.argv = list(argv)
        self.out = out
        self.started = _now()
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.pending: dict[Path, str] = {}
        self.config: dict = {}
        self.seed: int | None = None
        self.threads: int | None = None
        self.notes: list[str] = []

    def read_input(self, path: str | Path) -> Path:
        p = Path(path)
        if not p.is_file():
            raise InputError(f"input file not found: {path}")
        self.inputs[str(p)] = sha256(p)
        return p

    def stage(self, name: str, text: str) -> None:
        """Queue an output; nothing is written until :meth:`commit`."""
        self.pending[self.out / name] = text

    def commit(self) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        for path, text in self.pending.items():
            path.write_text(text, encoding="utf-8")
            self.outputs.append(str(path))
        self.pending.clear()

    def manifest(self, exit_code: int, error: str | None = None) -> dict:
        return {
            "command": self.command,
            "argv": self.argv,
            "config": self.config,
            "seed": self.seed,
            "threads": self.threads,
            "version": __version__,
            "started": self.started,
            "finished": _now(),
            "outputs": self.outputs,
            "inputs": self.inputs,
            "exit_code": exit_code,
            "error": error,
            "notes": self.notes,
        }

    def write_manifest(self, exit_code: int, error: str | None = None) -> None:
        try:
            self.out.mkdir(parents=True, exist_ok=True)
            (self.out / "manifest.json").write_text(dumps(self.manifest(exit_code, error)), encoding="utf-8")
        except OSError as exc:
            print(f"warning: could not write manifest: {exc}", file=sys.stderr)


# ---------------------------------------------------------------------------
# Data files


def read_matrix(path: Path) -> np.ndarray:
    """Numeric CSV with a header row."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise InputError(f"{path}: need a header row and at least one data row")
    width = len(rows[0])
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise InputError(f"{path}, line {lineno}: expected {width} cells, got {len(row)}")
        try:
            data.append([float(v) for v in row])
        except ValueError:
            raise InputError(f"{path}, line {lineno}: non-numeric cell") from None
    Z = np.array(data, dtype=float)
    if not np.all(np.isfinite(Z)):
        raise InputError(f"{path}: non-finite values")
    return Z


def _study_configs(s: Settings, seed: int, threads: int, minimize: bool) -> list[StudyConfig]:
    methods = tuple(s.get_list("study", "methods"))
    pair = tuple(s.get_list("study", "pair"))
    if len(pair) != 2:
        raise ConfigError("[study] pair must name exactly two methods")
    for m in methods + pair:
        if m not in METHODS + EXTRA_METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {METHODS + EXTRA_METHODS}")
    out = []
    for alpha in s.get_floats("truth", "alpha"):
        for n in s.get_ints("study", "n"):
            truth = TruthSpec(s.get_int("truth", "p"), s.get_float("truth", "rho"), alpha, s.get_float("truth", "floor"))
            out.append(
                StudyConfig(
                    truth,
                    n,
                    p0=s.get_int("study", "p0", optional=True),
                    reps=s.get_int("study", "reps"),
                    methods=methods,
                    k_grid=tuple(s.get_ints("study", "k_grid")),
                    a_grid=tuple(s.get_floats("study", "a_grid")),
                    epsilon=s.get_float("study", "epsilon"),
                    tune=s.get_bool("study", "tune"),
                    draws=s.get_int("study", "draws"),
                    cv_draws=s.get_int("study", "cv_draws"),
                    prior_df=s.get_float("study", "prior_df", optional=True),
                    seed=seed,
                    threads=threads,
                    minimize=minimize,
                    pair=pair,
                    posterior=s.get_bool("study", "posterior"),
                )
            )
    return out


def table1_csv(reports) -> str:
    """Rows are methods, columns are ``(n, alpha)`` cells of mean loss."""
    cells = [f"n{r.config['n']}_alpha{r.config['truth']['alpha']:g}" for r in reports]
    methods = [m["method"] for m in reports[0].methods]
    rows = []
    for name in methods:
        rows.append([name] + [r.method(name)["mean_loss"] for r in reports])
    return csv_text(["method"] + cells, rows)


def figure1_csv(reports) -> str:
    header = ["n", "alpha", "k", "a", "b", "mean_d_f", "t_f", "complete_f", "mean_d_b", "t_b", "complete_b"]
    rows = []
    for r in reports:
        for g in r.grid:
            rows.append(
                [r.config["n"], r.config["truth"]["alpha"]]
                + [g["k"], g["a"], g["b"], g["mean_d_f"], g["t_f"], g["complete_f"], g["mean_d_b"], g["t_b"], g["complete_b"]]
            )
    return csv_text(header, rows)


def _warn_failures(run: Run, reports) -> None:
    for r in reports:
        for f in r.failures:
            run.notes.append(f)
    if run.notes:
        print(f"warning: {len(run.notes)} replication failures; see report JSON", file=sys.stderr)


def _fit_options(s: Settings, minimize: bool, tune: bool) -> FitOptions:
    k = s.get_int("fit", "k", optional=True)
    k_grid = (k,) if (k is not None and not tune) else tuple(s.get_ints("fit", "k_grid"))
    a_grid = (s.get_float("fit", "a"),) if not tune else tuple(s.get_floats("fit", "a_grid"))
    return FitOptions(
        k_grid=k_grid,
        a_grid=a_grid,
        epsilon=s.get_float("fit", "epsilon"),
        tune=tune,
        draws=s.get_int("fit", "draws"),
        cv_draws=s.get_int("fit", "cv_draws"),
        prior_df=s.get_float("fit", "prior_df", optional=True),
        minimize=minimize,
    )


# ---------------------------------------------------------------------------
# Commands


def cmd_estimate(args, s: Settings, run: Run, seed: int, threads: int, minimize: bool) -> None:
    Z = read_matrix(run.read_input(args.data))
    p = Z.shape[1]
    p0 = s.get_int("fit", "p0", optional=True)
    if p0 is None:
        raise ConfigError("--p0 is required (number of leading covariate columns)")
    if not 1 <= p0 < p:
        raise InputError(f"p0 must satisfy 1 <= p0 < p = {p}, got {p0}")
    method = s.raw("fit", "method")
    if method not in METHODS + ("sample",):
        raise ConfigError(f"unknown method {method!r}")
    if s.get_int("fit", "k", optional=True) is None and not args.tune and method != "sample":
        raise ConfigError("give --k or --tune")
    opts = _fit_options(s, minimize, args.tune)
    part = Partition(p, p0)
    C, chosen, report = fit_method(method, Z, part, opts, seed)
    header = [f"x{j + 1}" for j in range(p0)]
    run.stage("coefficients.csv", csv_text(header, C.tolist()))
    summary = {
        "method": method,
        "p": p,
        "p0": p0,
        "n": Z.shape[0],
        "selected": None if chosen is None else chosen.as_dict(),
        "cv": None if report is None else report.to_dict(),
        "coefficients": C.tolist(),
    }
    run.stage("estimate.json", dumps(summary))


def cmd_tune(args, s: Settings, run: Run, seed: int, threads: int, minimize: bool) -> None:
    from .rng import CV, derive_seed

    Z = read_matrix(run.read_input(args.data))
    p = Z.shape[1]
    p0 = s.get_int("fit", "p0", optional=True)
    if p0 is None or not 1 <= p0 < p:
        raise InputError(f"--p0 must satisfy 1 <= p0 < p = {p}")
    method = s.raw("fit", "method")
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}")
    part = Partition(p, p0)
    grid = default_grid(method, s.get_ints("fit", "k_grid"), s.get_floats("fit", "a_grid"), s.get_float("fit", "epsilon"))
    if method.endswith("-ppp"):
        df = s.get_float("fit", "prior_df", optional=True)
        prior = default_prior(p) if df is None else IWParams(np.eye(p), df)
        report = loocv_bayes(Z, part, prior, grid, s.get_int("fit", "cv_draws"), derive_seed(seed, CV), minimize=minimize)
    else:
        report = loocv_frequentist(Z, part, grid, minimize=minimize)
    d = report.to_dict()
    run.stage("tune.json", dumps(d))
    rows = [[c.k, c.a, c.epsilon, sc] for c, sc in zip(grid.candidates, report.scores)]
    run.stage("tune.csv", csv_text(["k", "a", "epsilon", "score"], rows))
    print(f"selected {d['best']}")


def cmd_study(args, s: Settings, run: Run, seed: int, threads: int, minimize: bool) -> None:
    cfgs = _study_configs(s, seed, threads, minimize)
    reports = [risk_mc(c) for c in cfgs]
    out = {"kind": "study", "cells": [r.to_dict() for r in reports]}
    run.stage("table1.csv", table1_csv(reports))
    if s.get_bool("study", "compare"):
        comps = [compare_study(c) for c in cfgs]
        out["compare"] = [r.to_dict() for r in comps]
        run.stage("figure1.csv", figure1_csv(comps))
        reports = reports + comps
    run.stage("study.json", dumps(out))
    _warn_failures(run, reports)


def cmd_compare(args, s: Settings, run: Run, seed: int, threads: int, minimize: bool) -> None:
    cfgs = _study_configs(s, seed, threads, minimize)
    comps = [compare_study(c) for c in cfgs]
    run.stage("compare.json", dumps({"kind": "compare", "cells": [r.to_dict() for r in comps]}))
    run.stage("figure1.csv", figure1_csv(comps))
    _warn_failures(run, comps)


def cmd_rate(args, s: Settings, run: Run, seed: int, threads: int, minimize: bool) -> None:
    rep = rate_study(
        s.get_float("rate", "alpha"),
        s.get_ints("rate", "n"),
        seed,
        reps=s.get_int("rate", "reps"),
        rho=s.get_float("rate", "rho"),
        a=s.get_float("rate", "a"),
        epsilon=s.get_float("rate", "epsilon", optional=True),
        threads=threads,
    )
    d = rep.to_dict()
    run.stage("rate.json", dumps(d))
    r = rep.rate
    rows = [[n, k, p, e, risk] for n, k, p, e, risk in zip(r["n"], r["k"], r["p"], r["epsilon"], r["risk"])]
    run.stage("rate.csv", csv_text(["n", "k", "p", "epsilon", "risk"], rows))
    print(f"slope {r['slope']:.4f} (theory {r['theory_slope']:.4f})")


def cmd_forecast(args, s: Settings, run: Run, seed: int, threads: int, minimize: bool) -> None:
    if args.panel == "bundled":
        ref = resources.files("bandtaper") / "configs" / "synthetic_panel.csv"
        with resources.as_file(ref) as path:
            panel = read_panel(run.read_input(path))
    else:
        panel = read_panel(run.read_input(args.panel))
    if panel.dropped:
        for d in panel.dropped:
            run.notes.append(f"dropped unit {d}")
        print(f"warning: dropped {len(panel.dropped)} incomplete units", file=sys.stderr)
    t0 = s.get_int("forecast", "t0", optional=True)
    if t0 is None:
        raise ConfigError("--t0 is required")
    task = ForecastTask(panel.S, panel.T, t0)
    methods = s.get_list("forecast", "methods")
    for m in methods:
        if m not in METHODS + ("sample",):
            raise ConfigError(f"unknown method {m!r}")
    tune = args.tune or s.get_int("fit", "k", optional=True) is None
    opts = _fit_options(s, minimize, tune)
    report = run_forecast(panel, task, methods, opts, seed)
    d = report.to_dict()
    d.update({"S": panel.S, "T": panel.T, "t0": t0, "p": task.p, "p0": task.p0})
    run.stage("forecast.json", dumps(d))
    run.stage("forecast.csv", report.to_csv())
    failed = [r for r in report.rows if r["error"] is None]
    if failed and len(failed) == len(report.rows):
        raise SingularityError("; ".join(r.get("message", "") for r in failed))


def cmd_decay(args, s: Settings, run: Run, seed: int, threads: int, minimize: bool) -> None:
    spec = TruthSpec(s.get_int("decay", "p"), s.get_float("decay", "rho"), s.get_float("decay", "alpha"))
    sigma0 = make_sigma0(spec)
    a = s.get_float("decay", "a")
    rows = []
    for k in s.get_ints("decay", "k"):
        if k < 2:
            raise ConfigError(f"decay needs k >= 2, got {k}")
        rows.append([k, a, a * k * math.log(k), precision_decay(sigma0, k, a)])
    run.stage("decay.csv", csv_text(["k", "a", "offset", "decay"], rows))
    run.stage("decay.json", dumps({"truth": spec.__dict__, "rows": [dict(zip(("k", "a", "offset", "decay"), r)) for r in rows]}))


COMMANDS = {
    "estimate": (cmd_estimate, ["run", "fit"]),
    "tune": (cmd_tune, ["run", "fit"]),
    "study": (cmd_study, ["run", "truth", "study"]),
    "compare": (cmd_compare, ["run", "truth", "study"]),
    "rate": (cmd_rate, ["run", "rate"]),
    "forecast": (cmd_forecast, ["run", "fit", "forecast"]),
    "decay": (cmd_decay, ["run", "decay"]),
}


# ---------------------------------------------------------------------------
# Argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--threads", type=int, help="worker processes; results do not depend on it")
    common.add_argument("--config", help="INI settings file")
    common.add_argument("--out", default="bandtaper-out", help="output directory (default: %(default)s)")
    common.add_argument(
        "--paper-literal-minimize",
        action="store_true",
        default=None,
        help="select the tuning candidate with the smallest CV log-likelihood",
    )

    fit = argparse.ArgumentParser(add_help=False)
    fit.add_argument("--method")
    fit.add_argument("--p0", type=int, help="number of leading covariate coordinates")
    fit.add_argument("--k", type=int)
    fit.add_argument("--a", type=float)
    fit.add_argument("--epsilon", type=float)
    fit.add_argument("--k-grid")
    fit.add_argument("--a-grid")
    fit.add_argument("--draws", type=int)
    fit.add_argument("--cv-draws", type=int)
    fit.add_argument("--prior-df", type=float)

    parser = argparse.ArgumentParser(prog="bandtaper", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", parents=[common, fit], help="coefficient matrix from a data CSV")
    p.add_argument("data")
    p.add_argument("--tune", action="store_true", help="choose k (and a) by leave-one-out CV")

    p = sub.add_parser("tune", parents=[common, fit], help="leave-one-out CV scores over a grid")
    p.add_argument("data")

    for name, text in (("study", "risk table over (n, alpha) cells"), ("compare", "paired error reductions over (k, a)")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--p", type=int)
        p.add_argument("--n")
        p.add_argument("--alpha")
        p.add_argument("--reps", type=int)
        p.add_argument("--methods")
        p.add_argument("--k-grid")
        p.add_argument("--a-grid")
        p.add_argument("--draws", type=int)

    p = sub.add_parser("rate", parents=[common], help="log-log slope of the blockwise risk")
    p.add_argument("--alpha", type=float)
    p.add_argument("--n")
    p.add_argument("--reps", type=int)

    p = sub.add_parser("forecast", parents=[common, fit], help="forecast trailing time blocks of a panel CSV")
    p.add_argument("panel", help="panel CSV, or 'bundled' for the packaged synthetic panel")
    p.add_argument("--t0", type=int)
    p.add_argument("--methods")
    p.add_argument("--tune", action="store_true")

    p = sub.add_parser("decay", parents=[common], help="precision tail mass beyond a k log k")
    p.add_argument("--p", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--k")
    p.add_argument("--a", type=float)
    return parser


def _overrides(args) -> dict[str, dict[str, Any]]:
    g = lambda name: getattr(args, name, None)
    o: dict[str, dict[str, Any]] = {
        "run": {"seed": g("seed"), "threads": g("threads"), "minimize": g("paper_literal_minimize")}
    }
    if args.command in ("estimate", "tune", "forecast"):
        o["fit"] = {
            "method": g("method"),
            "p0": g("p0"),
            "k": g("k"),
            "a": g("a"),
            "epsilon": g("epsilon"),
            "k_grid": g("k_grid"),
            "a_grid": g("a_grid"),
            "draws": g("draws"),
            "cv_draws": g("cv_draws"),
            "prior_df": g("prior_df"),
        }
    if args.command in ("study", "compare"):
        o["truth"] = {"p": g("p"), "alpha": g("alpha")}
        o["study"] = {
            "n": g("n"),
            "reps": g("reps"),
            "methods": g("methods"),
            "k_grid": g("k_grid"),
            "a_grid": g("a_grid"),
            "draws": g("draws"),
        }
    if args.command == "rate":
        o["rate"] = {"alpha": g("alpha"), "n": g("n"), "reps": g("reps")}
    if args.command == "forecast":
        o["forecast"] = {"t0": g("t0"), "methods": g("methods")}
    if args.command == "decay":
        o["decay"] = {"p": g("p"), "alpha": g("alpha"), "k": g("k"), "a": g("a")}
    return o


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    fn, sections = COMMANDS[args.command]
    run = Run(args.command, argv, Path(args.out))
    try:
        s = Settings(args.config, _overrides(args))
        if args.config:
            run.read_input(args.config)
        seed = s.get_int("run", "seed")
        threads = s.get_int("run", "threads")
        if not 0 <= seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
        if threads < 1:
            raise ConfigError(f"threads must be >= 1, got {threads}")
        run.seed, run.threads = seed, threads
        run.config = s.resolved(sections)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            fn(args, s, run, seed, threads, s.get_bool("run", "minimize"))
        for w in caught:
            msg = f"{w.category.__name__}: {w.message}"
            if msg not in run.notes:
                run.notes.append(msg)
                print(f"warning: {w.message}", file=sys.stderr)
        run.commit()
    except (InputError, configparser.Error, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        run.write_manifest(EXIT_INPUT, str(exc))
        return EXIT_INPUT
    except (SingularityError, np.linalg.LinAlgError, PostProcessingError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        run.write_manifest(EXIT_NUMERIC, str(exc))
        return EXIT_NUMERIC
    run.write_manifest(EXIT_OK)
    for path in run.outputs:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
