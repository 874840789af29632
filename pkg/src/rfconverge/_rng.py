"""Deterministic seeding utilities.

Every random draw in the package is derived from a user-supplied 64-bit seed
through one of two mechanisms:

* numpy ``SeedSequence`` streams keyed by integer tuples, for sampling done at
  the orchestration level (bag draws, bootstrap counts, OOB permutations,
  per-run seeds);
* a SplitMix64 counter generator for draws inside the tree-fitting kernels
  and the partition shuffle, kept dependency-free so the numba and numpy
  backends walk identical streams on every platform.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
# Odd constant decorrelating per-node streams from the raw tree seed.
NODE_STREAM_SALT = 0xD2B74407B1CE6E93


def seed_sequence(*keys: int) -> np.random.SeedSequence:
    """SeedSequence keyed by a tuple of integers (each reduced mod 2**64)."""
    return np.random.SeedSequence([int(k) & MASK64 for k in keys])


def generator(*keys: int) -> np.random.Generator:
    """PCG64 generator on the stream keyed by ``keys``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(*keys)))


def derive_u64(*keys: int) -> int:
    """Single 64-bit word drawn from the stream keyed by ``keys``."""
    return int(seed_sequence(*keys).generate_state(1, np.uint64)[0])


def splitmix64(state: int) -> tuple[int, int]:
    """One SplitMix64 step; returns (next_state, output_word)."""
    state = (state + _SPLITMIX_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    z ^= z >> 31
    return state, z


def fisher_yates(n: int, seed: int) -> np.ndarray:
    """Fisher-Yates shuffle of ``arange(n)`` driven by a SplitMix64 stream.

    Reproducible across platforms and numpy versions; used for dataset
    partitioning where long-term stability of the permutation matters.
    """
    perm = np.arange(n, dtype=np.int64)
    state = int(seed) & MASK64
    for i in range(n - 1, 0, -1):
        state, z = splitmix64(state)
        j = z % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm
