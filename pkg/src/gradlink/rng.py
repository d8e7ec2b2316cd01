"""Labeled RNG streams.

One master seed spawns independent named streams (client batching, shuffler,
DP noise, weight init) so that toggling one feature never perturbs the draws
of another.
"""

import zlib

import numpy as np


def labeled_rng(seed: int, label: str) -> np.random.Generator:
    """Return a generator for `label`, independent of all other labels."""
    key = zlib.crc32(label.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))
