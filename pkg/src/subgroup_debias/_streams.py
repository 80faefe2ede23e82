"""Named deterministic RNG streams.

Every stochastic step in the package draws from a stream keyed by
(master seed, purpose tag, item indices). Streams for different keys are
independent, and a stream's output never depends on how work is scheduled
across workers, so any parallel run reproduces the sequential one bit for bit.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["seed_sequence", "stream", "derive_seed"]


def _tag_key(tag):
    # stable 32-bit key for a purpose tag; crc32 is deterministic across runs
    return zlib.crc32(tag.encode("utf-8"))


def seed_sequence(master_seed, tag, *indices):
    """SeedSequence for the stream named (tag, *indices) under master_seed."""
    if master_seed is None:
        raise ValueError("master_seed must be an integer, not None")
    key = (_tag_key(tag),) + tuple(int(i) for i in indices)
    return np.random.SeedSequence(int(master_seed), spawn_key=key)


def stream(master_seed, tag, *indices):
    """A numpy Generator for the named stream."""
    return np.random.default_rng(seed_sequence(master_seed, tag, *indices))


def derive_seed(master_seed, tag, *indices):
    """A 32-bit integer sub-seed for handing to a nested seeded procedure."""
    return int(seed_sequence(master_seed, tag, *indices).generate_state(1)[0])
