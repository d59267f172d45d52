"""Deterministic random-stream derivation.

Every run draws all of its randomness from one root seed. Components derive
named sub-streams so that, e.g., topology generation and scheduler shuffling
consume independent sequences that are reproducible across runs and platforms.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream(root_seed: int, *names) -> np.random.Generator:
    """Return a Generator for the sub-stream identified by ``names``.

    The same (root_seed, names) pair always yields the same sequence.
    """
    entropy = [int(root_seed) & 0xFFFFFFFF]
    entropy.extend(zlib.crc32(str(n).encode("utf-8")) for n in names)
    return np.random.default_rng(np.random.SeedSequence(entropy))
