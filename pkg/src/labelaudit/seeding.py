"""Deterministic seed derivation.

Every randomized stage derives its own RNG seed from a base seed plus a
string/integer path, so that adding or reordering stages never shifts the
random streams of unrelated stages. SHA-256 keeps the derivation stable
across platforms and Python versions (unlike ``hash()``).
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(base: int, *path: object) -> int:
    """Derive a 63-bit seed from ``base`` and a path of labels."""
    key = ":".join([str(int(base))] + [str(p) for p in path])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def rng_for(base: int, *path: object) -> np.random.Generator:
    """A PCG64 generator seeded by :func:`derive_seed`."""
    return np.random.Generator(np.random.PCG64(derive_seed(base, *path)))
