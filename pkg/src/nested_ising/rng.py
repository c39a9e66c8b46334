"""
Seeded random streams.

Every stream is a Philox-4x64 counter-based generator keyed by a
``SeedSequence`` built from the base seed and a tuple of integer or string
keys, so independent experiment points get independent, reproducible
streams no matter the order in which they run.
"""

import hashlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"stream keys must be non-negative, got {key}")
        return int(key)
    digest = hashlib.sha256(str(key).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def stream(base_seed: int, *keys) -> np.random.Generator:
    """Return the generator for ``hash(base_seed, *keys)``."""
    entropy = [_key_to_int(base_seed)] + [_key_to_int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
