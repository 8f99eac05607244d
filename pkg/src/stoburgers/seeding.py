"""Counter-based seeding: one Philox stream per (master seed, path index).

The mapping is part of the reproducibility contract and must not change:
the 128-bit Philox key is ``master_seed mod 2**64`` in the low word and the
path index in the high word.  Counters start at zero for every path, so a
path's draws do not depend on which other paths were generated, or where.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def seed_stream(master_seed: int, path_index: int) -> int:
    """Return the Philox key of a path; injective in ``path_index`` for a fixed seed."""
    if path_index < 0:
        raise ValueError("path_index must be nonnegative")
    if path_index > _MASK64:
        raise ValueError("path_index must fit in 64 bits")
    return (int(master_seed) & _MASK64) | (int(path_index) << 64)


def path_generator(master_seed: int, path_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed_stream(master_seed, path_index)))
