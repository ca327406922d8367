"""
Conditional mean operator: tapering versus blockwise tapering
=============================================================

Split a vector into covariates X (first p0 coordinates) and responses Y.
The conditional mean of Y given X is C X with C = Sigma_YX Sigma_XX^{-1}.
The blockwise estimator inverts only the trailing b x b block of the
covariate covariance, so the leading columns of its C are exactly zero.
"""

import warnings

import numpy as np

from bandtaper.estimators import (
    Partition,
    blockwise_estimator,
    cond_mean_operator,
    loss,
    sample_covariance,
    tapering_estimator,
)
from bandtaper.operators import BlockwiseParams, TaperParams, block_width
from bandtaper.simulation import TruthSpec, make_sigma0, sample_gaussian

p, n = 120, 60
part = Partition(p, 96)
sigma0 = make_sigma0(TruthSpec(p, rho=0.6, alpha=0.1))
target = cond_mean_operator(sigma0, part)
S = sample_covariance(sample_gaussian(sigma0, n, seed=1))

print(f"p = {p}, p0 = {part.p0}, n = {n}")
print(" k    a   b  zero cols  tapering loss  blockwise loss")
for k in (2, 3, 4):
    for a in (2.0, 5.0):
        b = min(block_width(k, a), part.p0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            C_blk = blockwise_estimator(S, BlockwiseParams(k, a, 0.5), part)
        C_tap = tapering_estimator(S, TaperParams(k, 0.5), part)
        zero = int(np.sum(~C_blk.any(axis=0)))
        print(f"{k:2d} {a:4.0f} {b:3d} {zero:10d} {loss(C_tap, target):14.4f} {loss(C_blk, target):15.4f}")

print("\nthe blockwise estimator keeps only the last b covariate columns;")
print("when p is large and k small it discards mostly noise.")
