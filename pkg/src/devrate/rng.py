"""Named random streams derived from one root seed.

``stream(seed, "chain", 3)`` always yields the same generator, independent of
every other (name, index) pair, so results do not depend on execution order.
"""

import zlib

import numpy as np


def _key(k) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode())
    return int(k)


def stream(seed: int, *keys) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(_key(k) for k in keys))
    return np.random.default_rng(ss)


def stream_manifest(seed: int, names) -> dict:
    """Human-readable record of how each stream was derived (for output manifests)."""
    return {
        "root_seed": int(seed),
        "derivation": "numpy SeedSequence(entropy=root_seed, spawn_key=(crc32(name), index...))",
        "streams": {str(n): [_key(p) for p in (n if isinstance(n, tuple) else (n,))] for n in names},
    }
