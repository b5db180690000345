"""One 64-bit seed, many independent named random streams."""

from __future__ import annotations

import hashlib

import numpy as np


def _key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")


def derive_seed(seed: int, name: str) -> int:
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(_key(name),))
    return int(ss.generate_state(2, dtype=np.uint32).view(np.uint64)[0])


def stream(seed: int, name: str) -> np.random.Generator:
    """Generator for stream ``name``; identical (seed, name) pairs agree bitwise."""
    return np.random.default_rng(derive_seed(seed, name))
