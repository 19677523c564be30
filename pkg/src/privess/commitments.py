"""Pedersen commitments over the order-q subgroup: g^x * h^r mod p."""

from __future__ import annotations

from dataclasses import dataclass

from .groups import GroupParams
from .rng import StreamRng


@dataclass(frozen=True)
class Commitment:
    point: int

    def to_bytes(self, params: GroupParams) -> bytes:
        return params.element_to_bytes(self.point)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Commitment":
        return cls(int.from_bytes(data, "big"))


@dataclass(frozen=True)
class Opening:
    value: int
    randomness: int


def commit(value: int, randomness: int, params: GroupParams) -> Commitment:
    return Commitment(params.ops().commit(value % params.order_q, randomness % params.order_q))


def commit_random(value: int, params: GroupParams, rng: StreamRng) -> tuple[Commitment, Opening]:
    opening = Opening(value % params.order_q, rng.field_element(params.order_q))
    return commit(opening.value, opening.randomness, params), opening


def verify_opening(c: Commitment, o: Opening, params: GroupParams) -> bool:
    return commit(o.value, o.randomness, params) == c


def combine(c1: Commitment, c2: Commitment, params: GroupParams) -> Commitment:
    """Commitment to the sum of values (and sum of randomness)."""
    return Commitment(params.ops().mul(c1.point, c2.point))


def uncombine(c1: Commitment, c2: Commitment, params: GroupParams) -> Commitment:
    """Commitment to the difference of values: c1 / c2."""
    return Commitment(params.ops().div(c1.point, c2.point))


def scale(c: Commitment, k: int, params: GroupParams) -> Commitment:
    """Commitment to k*value with randomness k*r."""
    return Commitment(params.ops().pow(c.point, k % params.order_q))


def identity(params: GroupParams) -> Commitment:
    """The commitment to 0 with randomness 0."""
    return Commitment(1)


def product(commitments, params: GroupParams) -> Commitment:
    return Commitment(params.ops().product(c.point for c in commitments))
