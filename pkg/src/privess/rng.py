"""Seedable deterministic random streams for parties, dealers and tests.

Every source of randomness in the simulator is a :class:`StreamRng`, a
SHA-256 counter-mode generator.  Streams can be forked by label so each
party (and each purpose within a party) draws from an independent,
reproducible stream.
"""

from __future__ import annotations

import hashlib
import os

_DOMAIN = b"privess/rng/v1"


class StreamRng:
    """Deterministic byte stream with helpers for field sampling."""

    def __init__(self, seed: bytes):
        if not isinstance(seed, (bytes, bytearray)):
            raise TypeError("seed must be bytes")
        self._key = hashlib.sha256(_DOMAIN + bytes(seed)).digest()
        self._counter = 0
        self._buffer = b""

    @classmethod
    def from_entropy(cls) -> "StreamRng":
        return cls(os.urandom(32))

    def child(self, label: str) -> "StreamRng":
        """Fork an independent stream; same label twice gives the same child."""
        return StreamRng(self._key + b"/" + label.encode())

    def bytes(self, n: int) -> bytes:
        while len(self._buffer) < n:
            block = hashlib.sha256(
                self._key + self._counter.to_bytes(8, "big")
            ).digest()
            self._counter += 1
            self._buffer += block
        out, self._buffer = self._buffer[:n], self._buffer[n:]
        return out

    def randbelow(self, bound: int) -> int:
        """Uniform integer in [0, bound) via rejection sampling."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        nbytes = (bound.bit_length() + 7) // 8
        # Oversample one byte to keep the rejection rate below 1/256.
        while True:
            candidate = int.from_bytes(self.bytes(nbytes + 1), "big")
            candidate %= 1 << (bound.bit_length() + 8)
            if candidate < (1 << (bound.bit_length() + 8)) // bound * bound:
                return candidate % bound

    def randrange(self, start: int, stop: int) -> int:
        return start + self.randbelow(stop - start)

    def field_element(self, q: int) -> int:
        return self.randbelow(q)

    def nonzero_field_element(self, q: int) -> int:
        return 1 + self.randbelow(q - 1)

    def choice(self, seq):
        return seq[self.randbelow(len(seq))]

    def shuffle(self, seq: list) -> None:
        for i in range(len(seq) - 1, 0, -1):
            j = self.randbelow(i + 1)
            seq[i], seq[j] = seq[j], seq[i]
