"""Prime-order subgroup parameters and fixed-point encoding of real values.

The default profile uses a safe prime p = 2q + 1; commitments live in the
order-q subgroup of Z_p* (the quadratic residues) and all exponent
arithmetic is done modulo q.  Real-valued quantities (kWh, dollars) enter
the exponent field through a fixed-point encoding with sign carried as
q - |raw|.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

from .kernel import GroupOps

MR_ROUNDS = 64
RAW_LIMIT = 1 << 31  # fixed-point raws must fit the range-proof width

Real = Union[int, str, Fraction]


class GroupSetupError(Exception):
    pass


class EncodingError(Exception):
    pass


def _hash_stream(tag: bytes, seed: bytes, counter: int) -> int:
    digest = hashlib.sha256(tag + b"|" + seed + b"|" + counter.to_bytes(8, "big"))
    return int.from_bytes(digest.digest(), "big")


def is_probable_prime(n: int, rounds: int = MR_ROUNDS) -> bool:
    """Miller-Rabin with deterministic per-candidate witnesses."""
    if n < 2:
        return False
    for small in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n == small:
            return True
        if n % small == 0:
            return False
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    nbytes = (n.bit_length() + 7) // 8
    for i in range(rounds):
        a = 2 + _hash_stream(b"privess/mr", n.to_bytes(nbytes, "big"), i) % (n - 3)
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


_OPS_CACHE: dict[tuple[int, int, int, int], GroupOps] = {}


@dataclass(frozen=True)
class GroupParams:
    """Public group parameters shared by all parties.

    ``fixed_point_scale`` is the number of field units per real unit for
    first-order quantities (demands in kWh, prices in $/kWh).
    """

    modulus_p: int
    order_q: int
    gen_g: int
    gen_h: int
    fixed_point_scale: int = 10_000

    @property
    def element_bytes(self) -> int:
        return (self.modulus_p.bit_length() + 7) // 8

    @property
    def scalar_bytes(self) -> int:
        return (self.order_q.bit_length() + 7) // 8

    def ops(self) -> GroupOps:
        key = (self.modulus_p, self.order_q, self.gen_g, self.gen_h)
        ops = _OPS_CACHE.get(key)
        if ops is None:
            ops = GroupOps(*key)
            _OPS_CACHE[key] = ops
        return ops

    def element_to_bytes(self, x: int) -> bytes:
        return x.to_bytes(self.element_bytes, "big")

    def element_from_bytes(self, data: bytes) -> int:
        return int.from_bytes(data, "big")

    def scalar_to_bytes(self, x: int) -> bytes:
        return x.to_bytes(self.scalar_bytes, "big")

    def scalar_from_bytes(self, data: bytes) -> int:
        return int.from_bytes(data, "big")

    def to_config(self) -> dict:
        return {
            "modulus_p": str(self.modulus_p),
            "order_q": str(self.order_q),
            "gen_g": str(self.gen_g),
            "gen_h": str(self.gen_h),
            "fixed_point_scale": str(self.fixed_point_scale),
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "GroupParams":
        return cls(
            modulus_p=int(cfg["modulus_p"]),
            order_q=int(cfg["order_q"]),
            gen_g=int(cfg["gen_g"]),
            gen_h=int(cfg["gen_h"]),
            fixed_point_scale=int(cfg["fixed_point_scale"]),
        )

    def validate(self) -> None:
        p, q, g, h = self.modulus_p, self.order_q, self.gen_g, self.gen_h
        if not is_probable_prime(p) or not is_probable_prime(q):
            raise GroupSetupError("p and q must be prime")
        if (p - 1) % q != 0:
            raise GroupSetupError("q must divide p - 1")
        for gen in (g, h):
            if gen in (0, 1) or pow(gen, q, p) != 1:
                raise GroupSetupError("generators must have order q")
        if g == h:
            raise GroupSetupError("g and h must differ")
        if self.fixed_point_scale <= 0:
            raise GroupSetupError("fixed_point_scale must be positive")


def derive_subgroup_element(tag: bytes, material: bytes, p: int) -> int:
    """Hash-to-group for p = 2q + 1: square the hash image into the QR subgroup."""
    counter = 0
    while True:
        x = _hash_stream(tag, material, counter) % p
        candidate = x * x % p
        if candidate != 1:
            return candidate
        counter += 1


def _find_safe_prime(bit_length: int, seed: bytes, budget: int = 400_000) -> tuple[int, int]:
    top = 1 << (bit_length - 2)
    for counter in range(budget):
        q = _hash_stream(b"privess/q", seed, counter) % top
        q |= top | 1  # exact bit length for q, odd
        if q % 3 == 1:
            continue  # p = 2q + 1 would be divisible by 3
        if not is_probable_prime(q, rounds=8):
            continue
        p = 2 * q + 1
        if not is_probable_prime(p, rounds=8):
            continue
        if is_probable_prime(q) and is_probable_prime(p):
            return p, q
    raise GroupSetupError(f"no {bit_length}-bit safe prime found within budget")


def setup_group(bit_length: int, seed: bytes, fixed_point_scale: int = 10_000) -> GroupParams:
    """Deterministically derive group parameters of the requested size.

    h is hash-derived from g (with a domain tag and the seed), so no party
    knows log_g h.
    """
    if bit_length < 16:
        raise GroupSetupError("bit_length must be at least 16")
    p, q = _find_safe_prime(bit_length, seed)
    g = derive_subgroup_element(b"privess/g", seed, p)
    h_material = g.to_bytes((p.bit_length() + 7) // 8, "big") + b"|" + seed
    h = derive_subgroup_element(b"privess/h", h_material, p)
    while h == g:
        h_material += b"#"
        h = derive_subgroup_element(b"privess/h", h_material, p)
    params = GroupParams(p, q, g, h, fixed_point_scale)
    params.validate()
    return params


def mod_exp(base: int, exp: int, params: GroupParams) -> int:
    """base^exp mod p."""
    return params.ops().pow(base % params.modulus_p, exp)


def encode_fixed(value: Real, params: GroupParams, scale: int | None = None) -> int:
    """Map a real quantity onto the exponent field.

    Rounds half away from zero at the given scale; negative values map to
    q - |raw|.  Raises EncodingError when the raw magnitude exceeds the
    32-bit range-proof width or cannot be represented unambiguously in Z_q.
    """
    if scale is None:
        scale = params.fixed_point_scale
    scaled = Fraction(value) * scale
    raw = _round_half_away(scaled)
    return encode_raw(raw, params)


def encode_raw(raw: int, params: GroupParams) -> int:
    q = params.order_q
    if abs(raw) >= RAW_LIMIT:
        raise EncodingError(f"raw value {raw} outside 32-bit fixed-point range")
    if 2 * abs(raw) >= q:
        raise EncodingError(f"raw value {raw} does not fit field of order {q}")
    return raw % q


def decode_fixed(element: int, params: GroupParams, scale: int | None = None) -> Fraction:
    if scale is None:
        scale = params.fixed_point_scale
    return Fraction(decode_raw(element, params), scale)


def decode_raw(element: int, params: GroupParams) -> int:
    """Centered lift of a field element back to a signed raw integer."""
    q = params.order_q
    element %= q
    return element if element <= (q - 1) // 2 else element - q


def _round_half_away(x: Fraction) -> int:
    n, d = x.numerator, x.denominator
    if n >= 0:
        return (2 * n + d) // (2 * d)
    return -((-2 * n + d) // (2 * d))


# Built-in profiles.  "tiny" is the brute-force-checkable test group; the
# larger profiles were produced by setup_group with the recorded seeds and
# are embedded so imports stay fast.
TINY_SEED = b"privess/profile/tiny"
TEST64_SEED = b"privess/profile/test64"
PROD_SEED = b"privess/profile/prod"

_PROFILES: dict[str, GroupParams] = {}


def register_profile(name: str, params: GroupParams) -> None:
    _PROFILES[name] = params


def get_profile(name: str) -> GroupParams:
    try:
        return _PROFILES[name]
    except KeyError:
        raise GroupSetupError(f"unknown group profile {name!r}") from None


register_profile("tiny", GroupParams(23, 11, 4, 9, fixed_point_scale=1))
register_profile(
    "test64",
    GroupParams(
        modulus_p=11954018606519624879,
        order_q=5977009303259812439,
        gen_g=1512325550819777302,
        gen_h=11352400497309116886,
    ),
)
register_profile(
    "prod",
    GroupParams(
        modulus_p=69413176634667439103304098870550283155690480979786460147464040700549564739163,
        order_q=34706588317333719551652049435275141577845240489893230073732020350274782369581,
        gen_g=14543296392667954415568684440070724142318449277499536551124344733347829214654,
        gen_h=19614472581924927015257396807155703256040761405131352244765068639592329836744,
    ),
)

