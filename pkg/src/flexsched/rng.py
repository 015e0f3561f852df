"""Deterministic pseudo-random source used by all stochastic components.

The generator is xorshift64* (Marsaglia xorshift with shift triple
12/25/27, output scrambled by the 64-bit multiplier 0x2545F4914F6CDD1D).
It is fully specified here so that experiments reproduce bit-exactly
across machines and reimplementations; nothing in the package draws from
``random`` or numpy's global state.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_MULT = 0x2545F4914F6CDD1D
# state must never be zero; zero seeds are remapped to the golden-ratio constant
_ZERO_SEED = 0x9E3779B97F4A7C15


class Xorshift64Star:
    """xorshift64* stream; 53-bit uniform doubles, unbiased integer ranges."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK64
        if self.state == 0:
            self.state = _ZERO_SEED

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x = (x ^ (x << 25)) & _MASK64
        x ^= x >> 27
        self.state = x
        return (x * _MULT) & _MASK64

    def random(self) -> float:
        """Uniform double in [0, 1) with 53-bit resolution."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def random_open(self) -> float:
        """Uniform double in (0, 1); redraws the (2^-53 probability) zero."""
        while True:
            u = self.random()
            if u > 0.0:
                return u

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n), rejection-sampled to avoid modulo bias."""
        if n <= 0:
            raise ValueError("randrange() requires n >= 1")
        limit = (_MASK64 + 1) - ((_MASK64 + 1) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def shuffle(self, seq: list) -> None:
        """In-place Fisher-Yates shuffle driven by this stream."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.randrange(i + 1)
            seq[i], seq[j] = seq[j], seq[i]
