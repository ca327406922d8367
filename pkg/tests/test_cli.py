import configparser
import csv
import hashlib
import json
import time
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from bandtaper.cli import DEFAULTS, Settings, dumps, fmt6, main
from bandtaper.simulation import sample_gaussian
from bandtaper.spatiotemporal import synthetic_panel, write_panel


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def manifest(out):
    return json.loads((Path(out) / "manifest.json").read_text())


SMALL_STUDY = ["--p", "12", "--n", "20", "--alpha", "0.3", "--reps", "3", "--k-grid", "2,3", "--a-grid", "1", "--draws", "10"]


class TestEstimate:
    def test_two_column_ratio(self, tmp_path):
        rng = np.random.default_rng(0)
        Z = rng.standard_normal((30, 2)) @ np.array([[1.0, 0.6], [0.0, 0.8]])
        data = write_csv(tmp_path / "z.csv", ["a", "b"], Z.tolist())
        out = tmp_path / "out"
        code = main(["estimate", str(data), "--p0", "1", "--k", "4", "--epsilon", "0", "--out", str(out), "--seed", "1"])
        assert code == 0
        rows = read_rows(out / "coefficients.csv")
        assert rows[0] == ["x1"] and len(rows) == 2
        S = Z.T @ Z / 30
        assert float(rows[1][0]) == pytest.approx(S[1, 0] / S[0, 0], rel=1e-5)
        est = json.loads((out / "estimate.json").read_text())
        assert est["coefficients"][0][0] == pytest.approx(S[1, 0] / S[0, 0], rel=1e-14)

    def test_malformed_csv(self, tmp_path):
        data = tmp_path / "bad.csv"
        data.write_text("a,b\n1,2\n3,oops\n")
        out = tmp_path / "out"
        assert main(["estimate", str(data), "--p0", "1", "--k", "2", "--out", str(out)]) == 2
        assert not (out / "coefficients.csv").exists()
        m = manifest(out)
        assert m["exit_code"] == 2 and "non-numeric" in m["error"]
        data.write_text("a,b\n1,2\n3\n")
        assert main(["estimate", str(data), "--p0", "1", "--k", "2", "--out", str(out)]) == 2

    def test_orthogonal_columns_near_zero(self, tmp_path):
        Z = sample_gaussian(np.eye(6), 4000, 3)
        data = write_csv(tmp_path / "z.csv", [f"c{j}" for j in range(6)], Z.tolist())
        out = tmp_path / "out"
        assert main(["estimate", str(data), "--p0", "4", "--k", "3", "--out", str(out)]) == 0
        C = np.array([[float(v) for v in r] for r in read_rows(out / "coefficients.csv")[1:]])
        assert C.shape == (2, 4)
        assert np.abs(C).max() < 0.1

    def test_precondition_errors(self, tmp_path):
        data = write_csv(tmp_path / "z.csv", ["a", "b"], [[1, 2], [3, 5], [2, 2]])
        out = tmp_path / "out"
        assert main(["estimate", str(data), "--k", "2", "--out", str(out)]) == 2  # no p0
        assert main(["estimate", str(data), "--p0", "2", "--k", "2", "--out", str(out)]) == 2
        assert main(["estimate", str(data), "--p0", "1", "--out", str(out)]) == 2  # no k, no tune
        assert main(["estimate", str(data), "--p0", "1", "--k", "2", "--method", "lasso", "--out", str(out)]) == 2
        assert main(["estimate", str(tmp_path / "missing.csv"), "--p0", "1", "--k", "2", "--out", str(out)]) == 2

    def test_numerical_failure_exit_3(self, tmp_path):
        # identical columns: the covariate block is singular once epsilon is zero and k keeps everything
        data = write_csv(tmp_path / "z.csv", ["a", "b", "c"], [[1, 1, 0], [-1, -1, 1], [2, 2, 0]])
        out = tmp_path / "out"
        assert main(["estimate", str(data), "--p0", "2", "--k", "4", "--epsilon", "0", "--out", str(out)]) == 3
        assert manifest(out)["exit_code"] == 3
        assert not (out / "coefficients.csv").exists()

    def test_tuned_estimate(self, tmp_path):
        Z = sample_gaussian(np.eye(5) + 0.3 * np.eye(5, k=1) + 0.3 * np.eye(5, k=-1), 40, 1)
        data = write_csv(tmp_path / "z.csv", list("abcde"), Z.tolist())
        out = tmp_path / "out"
        assert main(["estimate", str(data), "--p0", "3", "--tune", "--k-grid", "2-4", "--out", str(out)]) == 0
        est = json.loads((out / "estimate.json").read_text())
        assert est["selected"]["k"] in (2, 3, 4)
        assert len(est["cv"]["scores"]) == 3


class TestTune:
    def test_scores_written(self, tmp_path):
        Z = sample_gaussian(np.eye(5), 25, 2)
        data = write_csv(tmp_path / "z.csv", list("abcde"), Z.tolist())
        out = tmp_path / "out"
        assert main(["tune", str(data), "--p0", "3", "--k-grid", "2,3,5", "--out", str(out)]) == 0
        d = json.loads((out / "tune.json").read_text())
        assert [c["k"] for c in d["candidates"]] == [2, 3, 5]
        rows = read_rows(out / "tune.csv")
        assert rows[0] == ["k", "a", "epsilon", "score"] and len(rows) == 4

    def test_minimize_flag_recorded(self, tmp_path):
        Z = sample_gaussian(np.eye(4), 20, 2)
        data = write_csv(tmp_path / "z.csv", list("abcd"), Z.tolist())
        hi, lo = tmp_path / "hi", tmp_path / "lo"
        assert main(["tune", str(data), "--p0", "2", "--k-grid", "1-4", "--out", str(hi)]) == 0
        assert main(["tune", str(data), "--p0", "2", "--k-grid", "1-4", "--out", str(lo), "--paper-literal-minimize"]) == 0
        dh, dl = (json.loads((d / "tune.json").read_text()) for d in (hi, lo))
        scores = dh["scores"]
        assert dh["selected"] == int(np.argmax(scores)) and dl["selected"] == int(np.argmin(scores))
        assert manifest(lo)["config"]["run"]["minimize"] == "true"


class TestStudy:
    def test_deterministic_json(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["study", *SMALL_STUDY, "--seed", "5", "--out", str(a)]) == 0
        assert main(["study", *SMALL_STUDY, "--seed", "5", "--out", str(b), "--threads", "2"]) == 0
        assert (a / "study.json").read_bytes() == (b / "study.json").read_bytes()
        assert (a / "table1.csv").read_bytes() == (b / "table1.csv").read_bytes()
        rows = read_rows(a / "table1.csv")
        assert rows[0] == ["method", "n20_alpha0.3"]
        assert [r[0] for r in rows[1:]] == ["tapering", "banding", "blockwise"]

    def test_compare_outputs(self, tmp_path):
        out = tmp_path / "c"
        assert main(["compare", *SMALL_STUDY, "--out", str(out)]) == 0
        rows = read_rows(out / "figure1.csv")
        assert rows[0][:5] == ["n", "alpha", "k", "a", "b"] and len(rows) == 3

    def test_config_and_env_precedence(self, tmp_path, monkeypatch):
        cfg = tmp_path / "s.cfg"
        cfg.write_text("[truth]\np = 12\nalpha = 0.3\n[study]\nn = 20\nreps = 2\nk_grid = 2\na_grid = 1\nmethods = tapering\n")
        out = tmp_path / "o"
        monkeypatch.setenv("BANDTAPER_STUDY_REPS", "3")
        assert main(["study", "--config", str(cfg), "--out", str(out)]) == 0
        m = manifest(out)
        assert m["config"]["study"]["reps"] == "3"
        assert m["inputs"][str(cfg)] == hashlib.sha256(cfg.read_bytes()).hexdigest()
        assert main(["study", "--config", str(cfg), "--reps", "2", "--out", str(out)]) == 0
        assert manifest(out)["config"]["study"]["reps"] == "2"

    def test_bad_config(self, tmp_path):
        cfg = tmp_path / "s.cfg"
        cfg.write_text("[truth]\nsize = 12\n")
        assert main(["study", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        cfg.write_text("[bogus]\nx = 1\n")
        assert main(["study", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert main(["study", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path / "o")]) == 2
        assert main(["study", "--methods", "ridge", "--out", str(tmp_path / "o")]) == 2
        assert main(["study", "--seed", "-1", "--out", str(tmp_path / "o")]) == 2

    def test_bundled_configs(self):
        root = resources.files("bandtaper") / "configs"
        paper = configparser.ConfigParser()
        paper.read_string((root / "paper_table1.cfg").read_text())
        assert paper["truth"]["p"] == "200" and paper["truth"]["rho"] == "0.6"
        assert [float(a) for a in paper["truth"]["alpha"].split(",")] == [0.1, 0.3]
        assert paper["study"]["epsilon"] == "0.5" and paper["study"]["reps"] == "100"
        fig = configparser.ConfigParser()
        fig.read_string((root / "paper_figure1.cfg").read_text())
        assert (fig["truth"]["p"], fig["study"]["n"], fig["study"]["p0"]) == ("500", "250", "400")
        for name in ("desk_table1.cfg", "paper_table1.cfg", "paper_figure1.cfg"):
            cp = configparser.ConfigParser()
            cp.read_string((root / name).read_text())
            for section in cp.sections():
                assert set(cp[section]) <= set(DEFAULTS[section])

    @pytest.mark.slow
    def test_desk_config_runtime(self, tmp_path):
        cfg = resources.files("bandtaper") / "configs" / "desk_table1.cfg"
        with resources.as_file(cfg) as path:
            t = time.perf_counter()
            assert main(["study", "--config", str(path), "--out", str(tmp_path / "d")]) == 0
            elapsed = time.perf_counter() - t
        assert elapsed < 300
        rows = read_rows(tmp_path / "d" / "table1.csv")
        assert len(rows[0]) == 5 and len(rows) == 4


class TestForecast:
    def test_bundled_panel(self, tmp_path):
        out = tmp_path / "f"
        assert main(["forecast", "bundled", "--t0", "8", "--k", "3", "--methods", "tapering,sample", "--out", str(out)]) == 0
        rows = read_rows(out / "forecast.csv")
        assert rows[0] == ["method", "error"] and [r[0] for r in rows[1:]] == ["tapering", "sample"]
        d = json.loads((out / "forecast.json").read_text())
        assert (d["S"], d["T"], d["p0"]) == (4, 12, 32)
        assert len(manifest(out)["inputs"]) == 1

    def test_cut_time_out_of_range(self, tmp_path):
        assert main(["forecast", "bundled", "--t0", "12", "--k", "3", "--out", str(tmp_path / "f")]) == 2
        assert main(["forecast", "bundled", "--k", "3", "--out", str(tmp_path / "f")]) == 2

    def test_paper_geometry(self, tmp_path):
        panel = synthetic_panel(30, 8, 24, seed=3, mean=20.0)
        path = tmp_path / "panel.csv"
        write_panel(panel, path)
        out = tmp_path / "f"
        assert main(["forecast", str(path), "--t0", "17", "--k", "4", "--methods", "tapering", "--out", str(out)]) == 0
        d = json.loads((out / "forecast.json").read_text())
        assert (d["p"], d["p0"]) == (192, 136)
        assert d["rows"][0]["error"] > 0

    def test_dropped_units_noted(self, tmp_path):
        panel = synthetic_panel(6, 2, 3, seed=3)
        path = tmp_path / "panel.csv"
        write_panel(panel, path)
        with open(path, "a") as fh:
            fh.write("bad,1,2,,4,5,6\n")
        out = tmp_path / "f"
        assert main(["forecast", str(path), "--t0", "2", "--k", "2", "--methods", "sample", "--out", str(out)]) == 0
        assert any("dropped unit bad" in n for n in manifest(out)["notes"])


def test_rate_and_decay(tmp_path):
    out = tmp_path / "r"
    assert main(["rate", "--n", "20,40,80", "--reps", "2", "--out", str(out)]) == 0
    rows = read_rows(out / "rate.csv")
    assert rows[0] == ["n", "k", "p", "epsilon", "risk"] and len(rows) == 4
    out = tmp_path / "d"
    assert main(["decay", "--out", str(out)]) == 0
    vals = [float(r[3]) for r in read_rows(out / "decay.csv")[1:]]
    assert vals[0] > vals[1] > vals[2]


def test_formatting_helpers():
    assert fmt6(0.123456789) == "0.123457"
    assert fmt6(None) == ""
    d = json.loads(dumps({"b": float("nan"), "a": 0.1 + 0.2}))
    assert d == {"a": 0.30000000000000004, "b": None}
    assert list(json.loads(dumps({"z": 1, "a": 2}))) == ["a", "z"]


def test_settings_ranges(tmp_path):
    s = Settings(None, {"fit": {"k_grid": "2-4, 7"}})
    assert s.get_ints("fit", "k_grid") == [2, 3, 4, 7]
    assert s.get_int("fit", "k", optional=True) is None
    with pytest.raises(Exception):
        Settings(None, {"fit": {"k": "abc"}}).get_int("fit", "k")


def test_usage_errors(capsys):
    assert main([]) == 2
    assert main(["estimate"]) == 2
    assert main(["--version"]) == 0
