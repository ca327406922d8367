import csv

import numpy as np
import pytest

from bandtaper.linalg import InputError
from bandtaper.simulation import FitOptions, sample_gaussian
from bandtaper.spatiotemporal import (
    ForecastTask,
    Panel,
    center,
    forecast_error,
    panel_covariance,
    panel_header,
    read_panel,
    rearrange,
    run_forecast,
    synthetic_panel,
    unrearrange,
    write_panel,
)


class TestRearrange:
    def test_examples(self):
        g = np.array([[11.0, 12.0], [21.0, 22.0]])  # g[s, t]
        np.testing.assert_array_equal(rearrange(g), [11.0, 21.0, 12.0, 22.0])
        series = np.array([[1.0, 2.0, 3.0]])
        np.testing.assert_array_equal(rearrange(series), [1.0, 2.0, 3.0])
        spatial = np.array([[1.0], [2.0], [3.0]])
        np.testing.assert_array_equal(rearrange(spatial), [1.0, 2.0, 3.0])

    def test_index_formula(self):
        """Entry ``(s, t)`` lands at position ``(t - 1) S + s`` (1-based)."""
        S, T = 3, 4
        g = np.array([[100 * s + t for t in range(1, T + 1)] for s in range(1, S + 1)], dtype=float)
        z = rearrange(g)
        for s in range(1, S + 1):
            for t in range(1, T + 1):
                assert z[(t - 1) * S + s - 1] == 100 * s + t

    def test_bijection(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            S, T = rng.integers(1, 9, size=2)
            g = rng.standard_normal((S, T))
            assert np.array_equal(unrearrange(rearrange(g), S, T), g)
        z = rng.standard_normal(12)
        assert np.array_equal(rearrange(unrearrange(z, 3, 4)), z)

    def test_errors(self):
        with pytest.raises(InputError):
            rearrange(np.ones(4))
        with pytest.raises(InputError):
            unrearrange(np.ones(5), 2, 3)


class TestCenter:
    def test_examples(self):
        C, mu = center([[1.0, 3.0], [3.0, 1.0]])
        np.testing.assert_array_equal(C, [[-1.0, 1.0], [1.0, -1.0]])
        np.testing.assert_array_equal(mu, [2.0, 2.0])
        C, mu = center([[4.0, 5.0]])
        np.testing.assert_array_equal(C, [[0.0, 0.0]])
        np.testing.assert_array_equal(mu, [4.0, 5.0])
        Z = np.array([[1.0, -2.0], [-1.0, 2.0]])
        np.testing.assert_allclose(center(Z)[0], Z, atol=1e-12)

    def test_supplied_mean(self):
        C, mu = center([[1.0, 1.0]], mean=[0.5, 2.0])
        np.testing.assert_array_equal(C, [[0.5, -1.0]])

    def test_no_leakage(self):
        """Perturbing test units never changes the training-mean centering of the test data."""
        panel = synthetic_panel(20, 2, 5, seed=1, mean=3.0)
        task = ForecastTask(2, 5, 3)
        opts = FitOptions(k_grid=(3,), tune=False)
        base = run_forecast(panel, task, ("sample",), opts)
        shifted = Panel(panel.days.copy())
        shifted.days[10:] += 1000.0  # only test units move
        moved = run_forecast(shifted, task, ("sample",), opts)
        # the fitted coefficients depend only on training rows; the error must grow
        assert moved.error("sample") > base.error("sample") + 100
        Z = panel.vectors()
        train, mu = center(Z[:10])
        test, _ = center(Z[10:], mu)
        np.testing.assert_array_equal(mu, Z[:10].mean(axis=0))
        np.testing.assert_allclose(test, Z[10:] - Z[:10].mean(axis=0))

    def test_empty(self):
        with pytest.raises(InputError):
            center(np.zeros((0, 3)))


class TestForecastError:
    def test_examples(self):
        task = ForecastTask(1, 2, 1)
        assert forecast_error([[1.5]], [[1.0, 2.0]], task) == pytest.approx(0.5)
        test = np.array([[1.0, 3.0], [2.0, -4.0]])
        assert forecast_error([[0.0]], test, task) == pytest.approx(3.5)
        task = ForecastTask(2, 2, 1)
        rows = np.array([[1.0, 2.0, 3.0, 4.0], [0.0, 1.0, 0.0, 0.0]])
        expected = np.mean([np.hypot(3.0, 4.0), 0.0])
        assert forecast_error(np.zeros((2, 2)), rows, task) == pytest.approx(expected)

    def test_exact_linear_model(self):
        rng = np.random.default_rng(3)
        S, T, t0 = 3, 6, 4
        task = ForecastTask(S, T, t0)
        C = rng.standard_normal((task.p - task.p0, task.p0))
        X = rng.standard_normal((50, task.p0))
        test = np.hstack([X, X @ C.T])
        assert forecast_error(C, test, task) < 1e-8

    def test_errors(self):
        task = ForecastTask(2, 3, 1)
        with pytest.raises(InputError):
            forecast_error(np.zeros((4, 2)), np.zeros((0, 6)), task)
        with pytest.raises(InputError):
            forecast_error(np.zeros((2, 4)), np.zeros((3, 6)), task)
        with pytest.raises(InputError):
            ForecastTask(2, 3, 3)
        with pytest.raises(InputError):
            ForecastTask(2, 3, 0)


class TestPanelIO:
    def test_round_trip(self, tmp_path):
        panel = synthetic_panel(5, 3, 4, seed=2, mean=1.0)
        path = tmp_path / "panel.csv"
        write_panel(panel, path)
        back = read_panel(path)
        assert np.array_equal(back.days, panel.days)
        assert back.unit_ids == panel.unit_ids and not back.dropped
        with open(path) as fh:
            assert next(csv.reader(fh)) == panel_header(3, 4)
        assert panel_header(2, 2) == ["unit_id", "x_s1_t1", "x_s2_t1", "x_s1_t2", "x_s2_t2"]

    def test_bad_units_dropped(self, tmp_path):
        path = tmp_path / "panel.csv"
        rows = [panel_header(2, 2), ["a", "1", "2", "3", "4"], ["b", "1", "", "3", "4"], ["c", "1", "2"], ["d", "1", "x", "3", "nan"]]
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
        panel = read_panel(path)
        assert panel.unit_ids == ["a"]
        np.testing.assert_array_equal(panel.days[0], [[1.0, 3.0], [2.0, 4.0]])
        assert len(panel.dropped) == 3 and panel.dropped[0].startswith("b")

    def test_bad_headers(self, tmp_path):
        path = tmp_path / "panel.csv"
        for header in (["id", "x_s1_t1"], ["unit_id", "x_s1_t1", "x_s1_t2", "x_s2_t1", "x_s2_t2"], ["unit_id", "foo"]):
            path.write_text(",".join(header) + "\n")
            with pytest.raises(InputError):
                read_panel(path)
        path.write_text("")
        with pytest.raises(InputError):
            read_panel(path)

    def test_panel_validation(self):
        with pytest.raises(InputError):
            Panel(np.ones((2, 3)))
        with pytest.raises(InputError):
            Panel(np.full((1, 2, 2), np.nan))


class TestPanelCovariance:
    def test_bandable_tail(self):
        """Rearranged covariance: column tail sums beyond offset ``k`` shrink like ``k^-alpha`` (times ``S``)."""
        S, T, alpha = 4, 40, 0.5
        sigma = panel_covariance(S, T, alpha)
        p = S * T
        d = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
        ratios = [k**alpha * np.max(np.sum(np.abs(sigma) * (d >= k), axis=0)) / S for k in range(1, p // 2)]
        assert max(ratios) <= 2 * (1 / alpha + 1) * S

    def test_entries_bounded_by_time_lag(self):
        S, T, alpha = 3, 10, 0.5
        sigma = panel_covariance(S, T, alpha)
        p = S * T
        for i in range(p):
            for j in range(p):
                if i != j:
                    lag = abs(i // S - j // S)
                    assert abs(sigma[i, j]) <= (1 + lag) ** (-(alpha + 1)) + 1e-12
        assert np.linalg.eigvalsh(sigma)[0] > 0


class TestRunForecast:
    @pytest.mark.filterwarnings("ignore:block width")
    def test_report_shape(self):
        panel = synthetic_panel(30, 2, 6, seed=4, mean=5.0)
        task = ForecastTask(2, 6, 4)
        rep = run_forecast(panel, task, ("tapering", "blockwise", "sample"), FitOptions(k_grid=(2, 4), a_grid=(1.0,)))
        assert [r["method"] for r in rep.rows] == ["tapering", "blockwise", "sample"]
        assert rep.n_train == 15 and rep.n_test == 15
        lines = rep.to_csv().splitlines()
        assert lines[0] == "method,error" and len(lines) == 4
        assert all(len(line.split(",")) == 2 for line in lines)
        assert rep.to_dict()["rows"][0]["selected"]["k"] in (2, 4)

    def test_odd_split(self):
        rep = run_forecast(synthetic_panel(7, 2, 3, seed=0), ForecastTask(2, 3, 2), ("sample",), FitOptions())
        assert (rep.n_train, rep.n_test) == (4, 3)

    def test_insufficient_data(self):
        with pytest.raises(InputError):
            run_forecast(synthetic_panel(1, 2, 3, seed=0), ForecastTask(2, 3, 1))
        with pytest.raises(InputError):
            run_forecast(synthetic_panel(4, 2, 3, seed=0), ForecastTask(3, 3, 1))

    def test_method_failure_is_reported(self):
        rep = run_forecast(synthetic_panel(6, 2, 3, seed=0), ForecastTask(2, 3, 1), ("oracle", "sample"), FitOptions())
        assert rep.rows[0]["error"] is None and "oracle" in rep.rows[0]["message"]
        assert rep.rows[1]["error"] is not None

    def test_exact_model_oracle_coefficient(self):
        """Responses that are an exact linear function of covariates forecast with zero error."""
        rng = np.random.default_rng(8)
        S, T, t0 = 2, 5, 3
        task = ForecastTask(S, T, t0)
        C = 0.3 * rng.standard_normal((task.p - task.p0, task.p0))
        X = sample_gaussian(panel_covariance(S, t0), 40, 1) + 2.0
        Z = np.hstack([X, X @ C.T])
        panel = Panel(np.stack([unrearrange(z, S, T) for z in Z]))
        Zc = panel.vectors()
        train, mu = center(Zc[:20])
        test, _ = center(Zc[20:], mu)
        assert forecast_error(C, test, task) < 1e-8

    def test_tapering_beats_sample(self):
        S, T, t0 = 4, 12, 8
        task = ForecastTask(S, T, t0)
        opts = FitOptions(k_grid=tuple(range(2, 11)))
        wins = 0
        for seed in range(20):
            rep = run_forecast(synthetic_panel(120, S, T, seed=seed), task, ("tapering", "sample"), opts)
            wins += rep.error("tapering") < rep.error("sample")
        assert wins >= 14
