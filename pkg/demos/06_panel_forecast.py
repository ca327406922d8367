"""
Forecasting the end of a day from its beginning
===============================================

A unit is an S x T grid (locations by time). Flattening it time by time
turns a covariance that decays with the time lag into a bandable one, so
the last T - t0 time points can be predicted from the first t0.
"""

import warnings

from bandtaper.simulation import FitOptions
from bandtaper.spatiotemporal import ForecastTask, run_forecast, synthetic_panel

S, T, t0 = 4, 12, 8
panel = synthetic_panel(n=120, S=S, T=T, seed=3, mean=10.0)
task = ForecastTask(S, T, t0)
print(f"{len(panel)} units, S={S}, T={T}: predict times {t0 + 1}..{T} ({task.p - task.p0} values) from {task.p0}")

# wide blockwise candidates are clamped to p0; the clamping warnings are expected here
warnings.filterwarnings("ignore", "block width", RuntimeWarning)
report = run_forecast(panel, task, ("tapering", "blockwise", "banding", "sample"), FitOptions(a_grid=(1.0, 2.0)))
print(f"train on the first {report.n_train} units, test on the last {report.n_test}\n")
print(report.to_csv())
