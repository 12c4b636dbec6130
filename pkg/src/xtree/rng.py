"""Reproducible random-number streams.

Every random operation in the package draws from a PCG64 generator whose
seed is derived from the single master seed by hashing a tag path
(module name, purpose, optional indices) with SHA-256.  Two consequences:

* one master seed fully determines every artifact, and
* independent stages (per-tree, per-class, per-feature streams) never
  share a sequential stream, so results do not depend on worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master_seed: int, *tags: object) -> int:
    """Derive a 64-bit child seed from ``master_seed`` and a tag path."""
    h = hashlib.sha256()
    h.update(str(int(master_seed)).encode("ascii"))
    for tag in tags:
        h.update(b"/")
        h.update(str(tag).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "big")


def generator(master_seed: int, *tags: object) -> np.random.Generator:
    """PCG64 generator seeded from ``derive_seed(master_seed, *tags)``."""
    return np.random.Generator(np.random.PCG64(derive_seed(master_seed, *tags)))
