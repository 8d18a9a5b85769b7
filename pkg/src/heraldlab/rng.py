"""Seed splitting: one user seed feeds every stage through keyed Philox streams."""

from __future__ import annotations

import numpy as np

# stage keys; new stages append, never renumber
SYNTH = 1
VACUUM = 2
PCA_BUFFER = 3
ELECTRONICS = 4


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``key`` under ``seed``.

    Streams with different keys never overlap, so stages and chunks can be
    regenerated in any order without changing their numbers.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
