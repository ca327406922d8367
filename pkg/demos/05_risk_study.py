"""
A small Monte-Carlo risk study
==============================

Every replication draws fresh data from the same truth, fits each method
with cross-validated tuning and records the spectral-norm distance to the
true conditional mean operator. A paired comparison then reports mean loss
differences and their t-values on a (k, a) grid.
"""

from bandtaper.simulation import StudyConfig, TruthSpec, compare_study, risk_mc

cfg = StudyConfig(
    TruthSpec(p=40, rho=0.6, alpha=0.1),
    n=20,
    reps=10,
    methods=("tapering", "banding", "blockwise", "sample", "oracle"),
    k_grid=(2, 3, 4, 5),
    a_grid=(1.0, 2.0),
    seed=2024,
)
report = risk_mc(cfg)
print(f"mean spectral loss over {report.replications} replications (p=40, n=20):")
for m in report.methods:
    print(f"  {m['method']:10s} {m['mean_loss']:.4f}")

comp = compare_study(StudyConfig(cfg.truth, n=20, reps=10, k_grid=(2, 3), a_grid=(1.0, 2.0), draws=100, seed=2024))
print("\ntapering minus blockwise loss (positive favours blockwise):")
for g in comp.grid:
    tf = "n/a" if g["t_f"] is None else f"{g['t_f']:+.2f}"
    tb = "n/a" if g["t_b"] is None else f"{g['t_b']:+.2f}"
    print(f"  k={g['k']} a={g['a']:.0f} b={g['b']:2d}: t_f {tf}, t_b {tb}")
