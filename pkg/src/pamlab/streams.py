"""Reproducible random streams.

One 64-bit master seed plus a path of identifiers (module name, replica
index, time step, ...) maps to an independent counter-based Philox stream.
Streams for distinct paths are statistically independent and can be built
in any order on any worker, so replicas and steps are reproducible in
isolation.
"""
from __future__ import annotations

import hashlib

import numpy as np

_MASK32 = (1 << 32) - 1


def _path_words(part) -> list[int]:
    """Encode one path component as 32-bit words for a SeedSequence key."""
    if isinstance(part, (bool, float)):
        part = str(part)
    if isinstance(part, (int, np.integer)):
        v = int(part)
        v = 2 * v if v >= 0 else -2 * v - 1  # fold sign into parity
        words = []
        while True:
            words.append(v & _MASK32)
            v >>= 32
            if v == 0:
                return words
    digest = hashlib.sha256(str(part).encode("utf-8")).digest()[:8]
    v = int.from_bytes(digest, "little")
    return [v & _MASK32, (v >> 32) & _MASK32]


class SeedStreams:
    """Factory of named, disjoint random generators derived from one seed."""

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)

    def stream(self, *path) -> np.random.Generator:
        key = []
        for part in path:
            key.extend(_path_words(part))
        ss = np.random.SeedSequence(entropy=self.master_seed, spawn_key=tuple(key))
        return np.random.Generator(np.random.Philox(ss))

    def stream_id(self, *path) -> str:
        return "/".join([f"seed{self.master_seed}", *[str(p) for p in path]])
