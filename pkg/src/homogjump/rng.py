"""Counter-based random streams, one per simulated path.

Each path gets a Philox generator keyed by (seed, path index), so streams are
independent by construction and a path's randomness never depends on how many
other paths run, in which order, or on which worker.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def path_stream(seed: int, path_index: int) -> np.random.Generator:
    """Generator for one path, keyed by (seed, path_index)."""
    key = (int(seed) & _MASK64) | ((int(path_index) & _MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key))
