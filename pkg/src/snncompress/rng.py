"""Counter-based random streams.

Every stochastic element (weight init, Poisson encoding, dropout masks,
shuffles, pixel noise) draws from its own Philox stream keyed by
(seed, purpose, *indices). Streams indexed per sample make results
independent of batch partitioning: encoding sample 137 produces the same
spikes whether it sits in a batch of 32 or 512, and re-running a stage
with the same seed is bit-identical regardless of batching or thread
count.
"""

from __future__ import annotations

import numpy as np

# Purpose tags. Values are arbitrary but frozen: changing one changes
# every derived stream.
WEIGHT_INIT = 1
POISSON = 2
DROPOUT = 3
SHUFFLE = 4
AUGMENT = 5
NOISE = 6
DATASET = 7
SPLIT = 8
CALIBRATION = 9
CONTROL_INIT = 10


def rng_for(seed: int, purpose: int, *indices: int) -> np.random.Generator:
    """Return the Philox generator for one (seed, purpose, indices) key."""
    key = (int(seed) & 0xFFFFFFFFFFFFFFFF, int(purpose)) + tuple(
        int(i) & 0xFFFFFFFFFFFFFFFF for i in indices
    )
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))
