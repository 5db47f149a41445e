"""Counter-based random streams, splittable by (seed, stream index)."""

import numpy as np


def stream(seed, *key):
    """Independent Philox generator derived from a root seed and a key path.

    Streams for distinct keys never overlap, so parallel trajectory or probe
    generation stays reproducible regardless of scheduling order.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
