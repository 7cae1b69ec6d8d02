"""Deterministic, seed-stable random numbers for tensor fills and sampling.

splitmix64 is used instead of numpy's generators so that checkpoints built
from a seed are byte-identical across numpy versions; the stream depends
only on the seed and the counter.  The vectorized path evaluates the same
permutation on a counter range, so scalar and array fills agree exactly.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix(z: int) -> int:
    z = (z ^ (z >> 30)) * _MIX1 & _MASK
    z = (z ^ (z >> 27)) * _MIX2 & _MASK
    return z ^ (z >> 31)


class SplitMix64:
    """Counter-based splitmix64 stream."""

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        return _mix(self._state)

    def next_float(self) -> float:
        """Uniform in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def fill_uniform(self, count: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """float32 array of `count` uniforms in [low, high), consuming
        `count` stream positions (identical to calling next_float in a loop)."""
        start = self._state
        self._state = (self._state + count * _GAMMA) & _MASK
        idx = np.arange(1, count + 1, dtype=np.uint64)
        z = (np.uint64(start) + idx * np.uint64(_GAMMA)).astype(np.uint64)
        with np.errstate(over="ignore"):
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        u = (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        return (low + u * (high - low)).astype(np.float32)


def tensor_fill(seed: int, name: str, count: int, scale: float) -> np.ndarray:
    """Deterministic float32 fill for one named tensor.

    The per-tensor stream is seeded from the global seed and a hash of the
    tensor name, so tensors are independent and insertion order does not
    matter.
    """
    h = 1469598103934665603  # FNV-1a 64
    for ch in name.encode():
        h = ((h ^ ch) * 1099511628211) & _MASK
    rng = SplitMix64(_mix((seed ^ h) & _MASK))
    return rng.fill_uniform(count, low=-scale, high=scale)
