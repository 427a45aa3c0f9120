"""Deterministic RNG stream derivation.

All randomness in the package flows from a single root seed.  Independent
streams are derived from (root seed, purpose tag, index) so that work split
across workers draws exactly the same numbers as a serial run: stream
identity depends only on the three keys, never on execution order.

Derivation rule: the entropy of the underlying ``SeedSequence`` is the
triple ``(root & 0xFFFFFFFF, crc32(tag), index)``.
"""

import zlib

import numpy as np

_MASK32 = 0xFFFFFFFF


def rng_stream(root_seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Derive an independent generator from (root seed, purpose tag, index)."""
    entropy = (int(root_seed) & _MASK32, zlib.crc32(tag.encode("utf-8")), int(index))
    return np.random.default_rng(np.random.SeedSequence(entropy))


def child_seed(root_seed: int, tag: str, index: int = 0) -> int:
    """An integer seed derived through the same (root, tag, index) rule."""
    return int(rng_stream(root_seed, tag, index).integers(0, 2**63 - 1))
