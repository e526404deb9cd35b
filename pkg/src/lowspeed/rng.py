"""Seeded random streams, one named substream per consumer.

Each substream is derived from (master seed, name) through SHA-256, so adding
or removing one consumer never perturbs the draws of another.  This is what
makes whole runs bit-reproducible under a single scenario seed.
"""

import hashlib

import numpy as np


class RngHub:
    def __init__(self, seed: int):
        self.seed = int(seed)

    def stream(self, name: str) -> np.random.Generator:
        digest = hashlib.sha256(f"{self.seed}:{name}".encode()).digest()
        words = [int.from_bytes(digest[i : i + 8], "little") for i in range(0, 32, 8)]
        return np.random.default_rng(words)
