"""Reproducible random-number streams built on the counter-based Philox generator.

A stream is addressed by ``(seed, stream)``; accessing stream k never requires
fast-forwarding through streams 0..k-1.  Sub-keys (e.g. one per lattice vertex)
hang off a stream without consuming state from it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStream:
    """Address of an independent random stream: ``(seed, stream)`` determines all draws."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        if self.seed < 0 or self.stream < 0:
            raise ValueError("seed and stream index must be nonnegative")

    def generator(self) -> np.random.Generator:
        """Fresh generator for this stream; repeated calls restart the stream."""
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.Philox(seq))

    def with_stream(self, stream: int) -> "RngStream":
        return RngStream(self.seed, stream)

    def keyed_generator(self, *key: int) -> np.random.Generator:
        """Generator for a sub-key of this stream (key elements must be nonnegative).

        Distinct keys give independent draws; the spawn-key tuple length keeps
        sub-keyed generators disjoint from ``generator()`` itself.
        """
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream, *key))
        return np.random.Generator(np.random.Philox(seq))


_MIX_MULT = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def coordinate_hash(coords) -> int:
    """Stable 64-bit mix of integer coordinates, for per-vertex stream keys."""
    h = 0x243F6A8885A308D3
    for c in coords:
        h ^= (int(c) * _MIX_MULT) & _MASK64
        h = ((h << 31 | h >> 33) * 0xBF58476D1CE4E5B9) & _MASK64
    return h
