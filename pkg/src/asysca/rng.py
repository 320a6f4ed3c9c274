"""Named, reproducible RNG streams derived from a single master seed.

Every source of randomness in the toolkit (channel draws, service times,
initialization, diagnostics) pulls from its own stream so that adding or
removing consumers of one stream never perturbs the others.
"""

import zlib

import numpy as np


def _token(part):
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def seed_sequence(master_seed, *path):
    """SeedSequence for the stream identified by ``path`` (ints or names)."""
    return np.random.SeedSequence(
        entropy=int(master_seed), spawn_key=tuple(_token(p) for p in path)
    )


def stream(master_seed, *path):
    """Independent Generator for the named stream."""
    return np.random.default_rng(seed_sequence(master_seed, *path))
