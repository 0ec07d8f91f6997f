"""Counter-based random streams.

Every replication draws from its own Philox stream whose key is derived from
``(seed, *indices)``. Results therefore depend only on the seed and the
replication index, never on how replications are chunked or scheduled.
"""

from __future__ import annotations

import numpy as np


def stream_key(seed: int, *indices: int) -> np.ndarray:
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(int(i) for i in indices))
    return ss.generate_state(2, dtype=np.uint64)


def stream(seed: int, *indices: int) -> np.random.Generator:
    """Return an independent generator for replication ``indices``."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *indices)))


def sorted_uniforms(seed: int, indices, n: int, prefix=()) -> np.ndarray:
    """Stack of sorted uniform samples, one row per replication index."""
    out = np.empty((len(indices), n))
    for row, r in enumerate(indices):
        out[row] = stream(seed, *prefix, r).random(n)
    out.sort(axis=1)
    return out
