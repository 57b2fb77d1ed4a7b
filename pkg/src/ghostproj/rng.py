"""Deterministic random streams.

Every stream is a numpy ``Generator`` over the Philox4x64-10 counter-based
bit generator. The 128-bit Philox key is ``(seed, tag_id)`` where ``seed`` is
the caller's 64-bit seed and ``tag_id`` is the 64-bit FNV-1a hash of a short
text tag (offset basis 0xcbf29ce484222325, prime 0x100000001b3). Distinct tags
give statistically independent streams, so adding a new consumer never shifts
the numbers an existing consumer sees.
"""

import numpy as np

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
MASK64 = (1 << 64) - 1


def fnv1a64(text):
    h = FNV64_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * FNV64_PRIME) & MASK64
    return h


def stream(seed, tag):
    """Return a fresh generator keyed by ``(seed, tag)``."""
    if seed < 0 or seed > MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    key = np.array([seed, fnv1a64(tag)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed, name):
    """Derive a child 64-bit seed for a named sub-component."""
    rng = stream(seed, "derive:" + name)
    return int(rng.integers(0, MASK64, dtype=np.uint64, endpoint=True))
