"""Reproducible random streams for block-parallel Monte Carlo.

Paths are processed in fixed-size blocks.  Block ``j`` of stream ``s`` draws
from a Philox generator keyed by ``(seed, s, j)``, so the numbers a path sees
depend only on its index and the block size, never on how blocks are
scheduled across threads.
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

__all__ = ["block_generator", "fsum_blocks"]


def block_generator(seed: int, block: int, stream: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(stream), int(block)])
    return np.random.Generator(np.random.Philox(ss))


def fsum_blocks(values: Iterable[float]) -> float:
    """Exactly rounded sum of per-block partial sums."""
    return math.fsum(float(v) for v in values)
