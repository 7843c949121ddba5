"""Counter-based seeding: every random stream is keyed by (seed, stream, ids...).

Streams never share state, so a given neuron's input train is the same no
matter how many other neurons exist or in what order they are generated.
"""

import numpy as np

STIMULUS = 1
BACKGROUND = 2
MISMATCH = 3
NOISE = 4


def substream(seed: int, stream: int, *ids: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(stream, *ids))
    return np.random.Generator(np.random.Philox(ss))
