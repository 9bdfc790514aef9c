"""Labeled seed derivation.

Every random stream in the package is ``Generator(PCG64(derive_seed(parent, *labels)))``.
Derivation hashes the parent seed with the labels, so streams never depend
on traversal or scheduling order and adding a new labeled stream leaves the
existing ones untouched.
"""
from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(parent: int, *labels) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(parent) & MASK64).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(repr(label).encode())
    return int.from_bytes(h.digest(), "little")


def generator(seed: int, *labels) -> np.random.Generator:
    if labels:
        seed = derive_seed(seed, *labels)
    return np.random.Generator(np.random.PCG64(int(seed) & MASK64))


def history_key(history) -> tuple:
    """Flatten a history into a hashable label tuple."""
    return tuple(x for step in history for x in step)


def mix64(z: int) -> int:
    """SplitMix64 finalizer on unsigned 64-bit integers."""
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def child_seed(seed: int, a: int, o: int) -> int:
    """Seed of the search node reached from ``seed`` by action ``a`` and observation ``o``."""
    return mix64(seed ^ mix64(((a & 0xFFFFFFFF) << 32) | (o & 0xFFFFFFFF)))


class NodeStream:
    """One reusable PCG64 generator re-keyed per search node.

    Re-keying writes the PCG64 state directly (no SeedSequence), which is
    what makes per-node streams affordable.  Not thread-safe: one per worker.
    """

    _INC_SALT = 0x6A09E667F3BCC909

    def __init__(self):
        self.bit_generator = np.random.PCG64(0)
        self.generator = np.random.Generator(self.bit_generator)

    def reset(self, seed: int) -> np.random.Generator:
        seed &= MASK64
        self.bit_generator.state = {
            "bit_generator": "PCG64",
            "state": {
                "state": (mix64(seed) << 64) | mix64(seed ^ MASK64),
                "inc": (mix64(seed ^ self._INC_SALT) << 1) | 1,
            },
            "has_uint32": 0,
            "uinteger": 0,
        }
        return self.generator
