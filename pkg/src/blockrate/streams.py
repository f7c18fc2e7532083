"""Deterministic per-block random streams.

Each block gets its own generator seeded by a splittable 64-bit hash of
(global seed, frame id, block id), so results are identical across runs
and thread schedules, and blocks can be processed in any order.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> int:
    """One output of the splitmix64 sequence for the given state."""
    z = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_stream_seed(global_seed: int, frame_id: int, block_id: int) -> int:
    """64-bit mix of the three inputs; distinct inputs give distinct seeds
    with overwhelming probability."""
    h = splitmix64(global_seed & _MASK64)
    h = splitmix64(h ^ (frame_id & _MASK64))
    h = splitmix64(h ^ (block_id & _MASK64))
    return h


def derive_block_stream(global_seed: int, frame_id: int,
                        block_id: int) -> np.random.Generator:
    """Independent generator for one block of one frame."""
    return np.random.default_rng(derive_stream_seed(global_seed, frame_id, block_id))
