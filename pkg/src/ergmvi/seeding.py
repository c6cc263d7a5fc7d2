"""Named random streams derived from one root seed.

Every consumer asks for a stream by name (``"sampler"``, ``"svi"``, ``"iwlb"``,
...) so adding draws to one stage never shifts the numbers seen by another.
"""

import zlib

import numpy as np


def stream_seed(seed, name, *index):
    key = [int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode("utf-8"))]
    key.extend(int(i) for i in index)
    return np.random.SeedSequence(key)


def rng_for(seed, name, *index):
    """Return a ``numpy.random.Generator`` for the named stream."""
    return np.random.default_rng(stream_seed(seed, name, *index))


def child_seeds(rng, count):
    """Draw ``count`` integer seeds from ``rng`` (for per-chain sub-streams)."""
    return [int(s) for s in rng.integers(0, 2**32 - 1, size=count, dtype=np.uint64)]


def derive_seed(seed, name, *index) -> int:
    """Integer seed for a named sub-task, suitable for ``SamplerConfig.seed``."""
    return int(stream_seed(seed, name, *index).generate_state(1)[0])
