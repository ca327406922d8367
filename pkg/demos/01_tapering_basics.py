"""
Tapering, banding and the positive-definite adjustment
======================================================

A bandable covariance has entries that fade with distance from the diagonal.
Tapering keeps the entries near the diagonal, ramps the next ones down
linearly and zeroes the rest; banding simply cuts at a fixed offset.
"""

import numpy as np

from bandtaper.linalg import sym_eigen_min
from bandtaper.operators import band, pd_adjust, taper, taper_weights, window_sum

np.set_printoptions(precision=3, suppress=True)

# the weight profile for k = 4: flat up to offset 2, half at offset 3, zero from 4 on
print("taper weights, k = 4, first row:")
print(taper_weights(8, 4)[0])

# a noisy sample covariance of a decaying truth
rng = np.random.default_rng(0)
p, n = 8, 12
d = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
truth = 0.6 ** d
Z = rng.standard_normal((n, p)) @ np.linalg.cholesky(truth).T
S = Z.T @ Z / n

print("\nsample covariance:")
print(S)
print("\ntapered, k = 4:")
print(taper(S, 4))
print("\nbanded at offset 2:")
print(band(S, 2))

# tapering is a difference of two sums of diagonal blocks (even k)
k = 4
rhs = (window_sum(S, k) - window_sum(S, k // 2)) / (k / 2)
print("\nblock-sum identity holds:", np.allclose(taper(S, k), rhs, atol=1e-12))

# tapering can destroy positive definiteness; a diagonal shift restores a floor
T = taper(S, 6)
print("\nsmallest eigenvalue after tapering: %.4f" % sym_eigen_min(T))
print("after adjusting to 0.5:            %.4f" % sym_eigen_min(pd_adjust(T, 0.5)))
