"""Deterministic random streams.

Every stochastic step in the package draws from a counter-based Philox
generator keyed by an explicit integer seed plus fixed stream tags, so index
multisets and noise realizations reproduce bit-exactly across platforms and
so independent uses of the same user seed (sampling vs. noise vs. phantom
generation) never share a stream.
"""

from __future__ import annotations

import numpy as np

__all__ = ["generator", "derive_seed", "SAMPLING", "NOISE", "PHANTOM", "EPSILON"]

# stream tags (arbitrary fixed constants, one per purpose)
SAMPLING = 1
NOISE = 2
PHANTOM = 3
EPSILON = 4


def generator(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for ``seed`` on the sub-stream identified by ``stream``."""
    entropy = (int(seed),) + tuple(int(s) for s in stream)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, *stream: int) -> int:
    """A stable 64-bit sub-seed for ``(seed, stream...)``, for nested seeding."""
    entropy = (int(seed),) + tuple(int(s) for s in stream)
    lo, hi = np.random.SeedSequence(entropy).generate_state(2)
    return (int(hi) << 32) | int(lo)
