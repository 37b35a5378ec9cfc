"""Hierarchical seed derivation.

Every random stream in an experiment is keyed by a path below the master seed,
e.g. ``("client", 3, "local")``, so results do not depend on the order in which
clients are processed.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master_seed: int, *path: object) -> int:
    """Map ``(master_seed, *path)`` to a 64-bit seed via SHA-256."""
    key = "/".join([str(int(master_seed))] + [str(p) for p in path])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


class SeedBook:
    """Derives seeds from one master seed and remembers every one it handed out."""

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)
        self.issued: dict[str, int] = {}

    def __call__(self, *path: object) -> int:
        seed = derive_seed(self.master_seed, *path)
        self.issued["/".join(str(p) for p in path)] = seed
        return seed
