"""Seeded random streams.

Every stochastic quantity is drawn from a stream keyed by ``(seed, *key)``,
for instance ``(seed, replication, DATA)`` or ``(seed, draw_index)``. Streams
are Philox counter-based generators built from ``SeedSequence`` spawn keys,
so the numbers a task sees do not depend on which worker runs it or in what
order.
"""

from __future__ import annotations

import numpy as np

DATA = 0
POSTERIOR = 1
CV = 2
TUNE = 3


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the stream ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *key: int) -> int:
    """A 64-bit integer seed for the stream ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])
