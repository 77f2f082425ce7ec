"""Named random streams.

Every stage draws from its own stream derived from the scenario seed and the
stage name, so adding a stage never shifts the numbers another stage sees.
"""

import zlib

import numpy as np


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Generator for ``(seed, name, *extra)``; stable across runs and hosts."""
    key = (zlib.crc32(name.encode("utf-8")),) + tuple(int(e) for e in extra)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))
