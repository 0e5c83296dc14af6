"""Deterministic counter-based random sampling.

Every Monte-Carlo sample is a pure function of (seed, index): the stream
state is built by running splitmix64 from ``seed XOR index`` for four
outputs, which become the xoshiro256** state.  Batches of streams are
advanced in lockstep with numpy uint64 arrays, so generating sample k on
worker 3 or worker 7 gives bit-identical draws.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64
_INV_2_53 = 1.0 / (1 << 53)


def splitmix64(state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One splitmix64 step. Returns (new_state, output), elementwise."""
    state = state + _GOLDEN
    z = state.copy()
    z ^= z >> _U64(30)
    z *= _MIX1
    z ^= z >> _U64(27)
    z *= _MIX2
    z ^= z >> _U64(31)
    return state, z


def _rotl(x: np.ndarray, k: int) -> np.ndarray:
    return (x << _U64(k)) | (x >> _U64(64 - k))


class XoshiroBatch:
    """A batch of independent xoshiro256** streams advanced in lockstep.

    Stream i is seeded from splitmix64 starting at ``seed ^ indices[i]``;
    its four successive outputs form the xoshiro state (the reference
    seeding procedure).
    """

    def __init__(self, seed: int, indices: np.ndarray):
        indices = np.asarray(indices, dtype=np.uint64)
        state = indices ^ _U64(seed & 0xFFFFFFFFFFFFFFFF)
        s = []
        for _ in range(4):
            state, out = splitmix64(state)
            s.append(out)
        self.s = s

    def next_u64(self) -> np.ndarray:
        s0, s1, s2, s3 = self.s
        result = _rotl(s1 * _U64(5), 7) * _U64(9)
        t = s1 << _U64(17)
        s2 = s2 ^ s0
        s3 = s3 ^ s1
        s1 = s1 ^ s2
        s0 = s0 ^ s3
        s2 = s2 ^ t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def next_double(self) -> np.ndarray:
        """Uniform doubles in [0, 1), one per stream (53-bit resolution)."""
        return (self.next_u64() >> _U64(11)).astype(np.float64) * _INV_2_53


def stream(seed: int, index: int) -> XoshiroBatch:
    """Single sample stream for (seed, index)."""
    return XoshiroBatch(seed, np.array([index], dtype=np.uint64))
