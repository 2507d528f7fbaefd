"""Deterministic random streams built on splitmix64.

Every random decision in the package (graph construction, generation
schedules, forwarding choices, free-rider assignment, sweep seeding) flows
through these streams, so any artifact is reproducible bit-for-bit from one
integer seed. Independent concerns draw from independent substreams derived
with :func:`derive`; adding draws to one stream never perturbs another.

The compiled simulation kernel re-implements the same constants and update
rule; ``tests/test_rng.py`` asserts parity between the two.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
MIX_A = 0xBF58476D1CE4E5B9
MIX_B = 0x94D049BB133111EB
TAG_SALT = 0xD1B54A32D192ED03

# Substream purpose tags. Stable identifiers: changing them invalidates
# every persisted artifact.
TAG_TOPOLOGY = 1
TAG_GENERATION = 2
TAG_FORWARD = 3
TAG_FREE_RIDERS = 4
TAG_ORIGIN = 5
TAG_SWEEP = 6

_INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53


def mix64(x: int) -> int:
    """splitmix64 output function (finalizer)."""
    x &= MASK64
    x = ((x ^ (x >> 30)) * MIX_A) & MASK64
    x = ((x ^ (x >> 27)) * MIX_B) & MASK64
    return x ^ (x >> 31)


def derive(seed: int, *tags: int) -> int:
    """Derive a substream state from a seed and integer tags.

    Folding each tag through the finalizer keeps distinct tag tuples on
    statistically independent streams.
    """
    s = mix64((seed + GOLDEN) & MASK64)
    for t in tags:
        s = mix64(s ^ (((t + 1) * TAG_SALT) & MASK64))
    return s


class Stream:
    """Sequential splitmix64 stream with a few sampling helpers."""

    __slots__ = ("state",)

    def __init__(self, state: int):
        self.state = state & MASK64

    def u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def uniform(self) -> float:
        """Uniform float in [0, 1)."""
        return (self.u64() >> 11) * _INV_2_53

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (MASK64 + 1) - (MASK64 + 1) % n
        while True:
            u = self.u64()
            if u < limit:
                return u % n

    def exponential(self, mean: float) -> float:
        # 1 - uniform() lies in (0, 1], so log never sees zero.
        return -mean * math.log(1.0 - self.uniform())

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample_range(self, n: int, k: int) -> list[int]:
        """k distinct integers from [0, n), uniform without replacement."""
        if not 0 <= k <= n:
            raise ValueError("need 0 <= k <= n")
        pool = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def u64_array(self, count: int) -> np.ndarray:
        """Vectorized batch of u64 draws; consumes the same stream positions
        as ``count`` scalar :meth:`u64` calls."""
        steps = np.arange(1, count + 1, dtype=np.uint64)
        x = np.uint64(self.state) + steps * np.uint64(GOLDEN)
        self.state = (self.state + GOLDEN * count) & MASK64
        x = (x ^ (x >> np.uint64(30))) * np.uint64(MIX_A)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(MIX_B)
        return x ^ (x >> np.uint64(31))
