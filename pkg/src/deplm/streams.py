"""Counter-based random streams.

Every random draw in the pipeline comes from a generator keyed by a tuple of
non-negative integers, so results never depend on batch order or on how work
is split across threads.
"""

import numpy as np

# first key component, one per consumer
ELECTROFORM = 1
ENCODER_NOISE = 2
DECODER_NOISE = 3
SAMPLING = 4
AUGMENT = 5
READOUT = 6
SYNTHETIC = 7
SWEEP = 8


def stream(base_seed: int, *key: int) -> np.random.Generator:
    """Generator for ``(base_seed, *key)``."""
    ss = np.random.SeedSequence(entropy=int(base_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(base_seed: int, *key: int) -> int:
    """A 63-bit integer seed derived from ``(base_seed, *key)``."""
    ss = np.random.SeedSequence(entropy=int(base_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))
