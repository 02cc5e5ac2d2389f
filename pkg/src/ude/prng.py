"""Deterministic seeded PRNG primitives.

Encoder weights are drawn from an xorshift64* generator (seeded through one
splitmix64 round) so the draw is a short, documented integer recurrence that
can be replicated bit-exactly outside this codebase:

    state' = xorshift(state):  x ^= x >> 12;  x ^= x << 25;  x ^= x >> 27
    output = (state' * 0x2545F4914F6CDD1D) mod 2^64
    uniform in [0,1) = (output >> 11) / 2^53   (computed in f64)

Seed derivation for independent streams chains splitmix64 over mix-in words.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (next_state, output)."""
    state = (state + _SPLITMIX_GAMMA) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def derive_seed(seed: int, *words: int) -> int:
    """Mix integer words into a base seed to get an independent stream seed."""
    s = seed & _MASK64
    for w in words:
        _, s = splitmix64(s ^ (w & _MASK64))
    _, out = splitmix64(s)
    return out


class Xorshift64Star:
    """xorshift64* generator; state seeded via one splitmix64 round."""

    def __init__(self, seed: int):
        _, z = splitmix64(seed & _MASK64)
        self.state = z if z != 0 else _SPLITMIX_GAMMA

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK64
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & _MASK64

    def uniform(self) -> float:
        """Uniform f64 in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform_array(self, n: int, low: float, high: float) -> np.ndarray:
        """n uniform draws in [low, high), computed in f64, returned as f32."""
        out = np.empty(n, dtype=np.float64)
        span = high - low
        for i in range(n):
            out[i] = low + span * self.uniform()
        return out.astype(np.float32)
