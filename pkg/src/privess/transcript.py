"""Append-only proof transcripts and the Fiat-Shamir challenge derivation.

A transcript is a domain-tagged byte string accumulating every prover
message in order; challenges are SHA-256 of the full prefix reduced mod q.
Identical prefixes (including the tag) give identical challenges.
"""

from __future__ import annotations

import hashlib

from .groups import GroupParams

_PREFIX = b"privess/transcript/v1|"


class Transcript:
    def __init__(self, tag: bytes, params: GroupParams):
        self._params = params
        self._buf = bytearray(_PREFIX)
        self._buf += len(tag).to_bytes(2, "big")
        self._buf += tag

    def copy(self) -> "Transcript":
        t = Transcript.__new__(Transcript)
        t._params = self._params
        t._buf = bytearray(self._buf)
        return t

    def append_bytes(self, data: bytes) -> None:
        self._buf += len(data).to_bytes(4, "big")
        self._buf += data

    def append_element(self, x: int) -> None:
        self._buf += self._params.element_to_bytes(x)

    def append_scalar(self, x: int) -> None:
        self._buf += self._params.scalar_to_bytes(x % self._params.order_q)

    def append_commitment(self, c) -> None:
        self.append_element(c.point)

    def prefix(self) -> bytes:
        return bytes(self._buf)

    def challenge(self) -> int:
        return fiat_shamir(self, self._params)


def fiat_shamir(transcript: Transcript, params: GroupParams) -> int:
    """Hash the transcript prefix big-endian and reduce mod q."""
    digest = hashlib.sha256(transcript.prefix()).digest()
    return int.from_bytes(digest, "big") % params.order_q
