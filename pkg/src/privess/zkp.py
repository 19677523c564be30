"""Sigma-protocol proofs over Pedersen commitments.

Four proof families, each with a shared prover core usable in two modes:

* interactive -- the challenge is supplied externally (e.g. from a
  multi-party coin toss);
* non-interactive -- the challenge is derived by Fiat-Shamir from a
  domain-tagged transcript of the statement and all prover messages.

Verifiers never raise on bad proofs; they return False.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .commitments import Commitment, Opening, commit
from .groups import GroupParams
from .rng import StreamRng
from .transcript import Transcript

CM_TAG = b"zkpCm"
SUM_TAG = b"zkpSum"
MBS_TAG = b"zkpMbs"
NN_TAG = b"zkpNN"

DEFAULT_BIT_WIDTH = 32


# ---------------------------------------------------------------------------
# proof containers


@dataclass(frozen=True)
class ProofCm:
    announce: Commitment
    z_value: int
    z_rand: int
    challenge: Optional[int] = None

    def to_bytes(self, params: GroupParams) -> bytes:
        return b"".join(
            [
                self.announce.to_bytes(params),
                params.scalar_to_bytes(self.z_value),
                params.scalar_to_bytes(self.z_rand),
                _opt_scalar(self.challenge, params),
            ]
        )

    @classmethod
    def from_bytes(cls, data: bytes, params: GroupParams) -> "ProofCm":
        r = _Reader(data)
        announce = Commitment(r.element(params))
        z_value = r.scalar(params)
        z_rand = r.scalar(params)
        challenge = r.opt_scalar(params)
        r.finish()
        return cls(announce, z_value, z_rand, challenge)


@dataclass(frozen=True)
class ProofSum:
    announce: Commitment
    z_rand: int
    challenge: Optional[int] = None

    def to_bytes(self, params: GroupParams) -> bytes:
        return b"".join(
            [
                self.announce.to_bytes(params),
                params.scalar_to_bytes(self.z_rand),
                _opt_scalar(self.challenge, params),
            ]
        )

    @classmethod
    def from_bytes(cls, data: bytes, params: GroupParams) -> "ProofSum":
        r = _Reader(data)
        announce = Commitment(r.element(params))
        z_rand = r.scalar(params)
        challenge = r.opt_scalar(params)
        r.finish()
        return cls(announce, z_rand, challenge)


@dataclass(frozen=True)
class ProofMbs:
    announces: tuple[Commitment, ...]
    z_values: tuple[int, ...]
    sub_challenges: tuple[int, ...]
    z_rands: tuple[int, ...]
    challenge: Optional[int] = None

    def to_bytes(self, params: GroupParams) -> bytes:
        n = len(self.announces)
        parts = [n.to_bytes(2, "big")]
        parts += [a.to_bytes(params) for a in self.announces]
        parts += [params.scalar_to_bytes(z) for z in self.z_values]
        parts += [params.scalar_to_bytes(b) for b in self.sub_challenges]
        parts += [params.scalar_to_bytes(z) for z in self.z_rands]
        parts.append(_opt_scalar(self.challenge, params))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes, params: GroupParams) -> "ProofMbs":
        r = _Reader(data)
        n = r.u16()
        announces = tuple(Commitment(r.element(params)) for _ in range(n))
        z_values = tuple(r.scalar(params) for _ in range(n))
        sub_challenges = tuple(r.scalar(params) for _ in range(n))
        z_rands = tuple(r.scalar(params) for _ in range(n))
        challenge = r.opt_scalar(params)
        r.finish()
        return cls(announces, z_values, sub_challenges, z_rands, challenge)


@dataclass(frozen=True)
class ProofNN:
    bit_commitments: tuple[Commitment, ...]
    bit_proofs: tuple[ProofMbs, ...]
    announce: Commitment
    z_rand: int
    challenge: Optional[int] = None

    def to_bytes(self, params: GroupParams) -> bytes:
        m = len(self.bit_commitments)
        parts = [m.to_bytes(2, "big")]
        parts += [c.to_bytes(params) for c in self.bit_commitments]
        for proof in self.bit_proofs:
            blob = proof.to_bytes(params)
            parts.append(len(blob).to_bytes(4, "big"))
            parts.append(blob)
        parts.append(self.announce.to_bytes(params))
        parts.append(params.scalar_to_bytes(self.z_rand))
        parts.append(_opt_scalar(self.challenge, params))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes, params: GroupParams) -> "ProofNN":
        r = _Reader(data)
        m = r.u16()
        bit_commitments = tuple(Commitment(r.element(params)) for _ in range(m))
        bit_proofs = tuple(
            ProofMbs.from_bytes(r.blob(), params) for _ in range(m)
        )
        announce = Commitment(r.element(params))
        z_rand = r.scalar(params)
        challenge = r.opt_scalar(params)
        r.finish()
        return cls(bit_commitments, bit_proofs, announce, z_rand, challenge)


def _opt_scalar(x: Optional[int], params: GroupParams) -> bytes:
    if x is None:
        return b"\x00"
    return b"\x01" + params.scalar_to_bytes(x)


class _Reader:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise ValueError("truncated proof encoding")
        out = self._data[self._pos : self._pos + n]
        self._pos += n
        return out

    def element(self, params: GroupParams) -> int:
        return int.from_bytes(self.take(params.element_bytes), "big")

    def scalar(self, params: GroupParams) -> int:
        return int.from_bytes(self.take(params.scalar_bytes), "big")

    def u16(self) -> int:
        return int.from_bytes(self.take(2), "big")

    def blob(self) -> bytes:
        n = int.from_bytes(self.take(4), "big")
        return self.take(n)

    def opt_scalar(self, params: GroupParams) -> Optional[int]:
        flag = self.take(1)[0]
        if flag == 0:
            return None
        if flag != 1:
            raise ValueError("bad optional-scalar flag")
        return self.scalar(params)

    def finish(self) -> None:
        if self._pos != len(self._data):
            raise ValueError("trailing bytes in proof encoding")


# ---------------------------------------------------------------------------
# proof of knowledge of a commitment opening


class CmProver:
    """Announce Cm(x', r'); answer z = (x' + b*x, r' + b*r)."""

    def __init__(self, opening: Opening, params: GroupParams, rng: StreamRng):
        q = params.order_q
        self._opening = opening
        self._q = q
        self._x_mask = rng.field_element(q)
        self._r_mask = rng.field_element(q)
        self.announce = commit(self._x_mask, self._r_mask, params)

    def respond(self, challenge: int) -> tuple[int, int]:
        q = self._q
        z_value = (self._x_mask + challenge * self._opening.value) % q
        z_rand = (self._r_mask + challenge * self._opening.randomness) % q
        return z_value, z_rand


def _cm_transcript(c: Commitment, params: GroupParams) -> Transcript:
    t = Transcript(CM_TAG, params)
    t.append_commitment(c)
    return t


def prove_cm(
    opening: Opening,
    params: GroupParams,
    rng: StreamRng,
    challenge: Optional[int] = None,
) -> ProofCm:
    prover = CmProver(opening, params, rng)
    if challenge is None:
        t = _cm_transcript(commit(opening.value, opening.randomness, params), params)
        t.append_commitment(prover.announce)
        beta = t.challenge()
        z_value, z_rand = prover.respond(beta)
        return ProofCm(prover.announce, z_value, z_rand, beta)
    z_value, z_rand = prover.respond(challenge)
    return ProofCm(prover.announce, z_value, z_rand, None)


def verify_cm(
    c: Commitment,
    proof: ProofCm,
    params: GroupParams,
    challenge: Optional[int] = None,
) -> bool:
    if challenge is None:
        t = _cm_transcript(c, params)
        t.append_commitment(proof.announce)
        beta = t.challenge()
        if proof.challenge is not None and proof.challenge != beta:
            return False
    else:
        beta = challenge
    return check_cm_equation(c, proof.announce, beta, proof.z_value, proof.z_rand, params)


def check_cm_equation(
    c: Commitment,
    announce: Commitment,
    beta: int,
    z_value: int,
    z_rand: int,
    params: GroupParams,
) -> bool:
    """g^z_value * h^z_rand == announce * c^beta."""
    ops = params.ops()
    if not _valid_point(c.point, params) or not _valid_point(announce.point, params):
        return False
    lhs = ops.commit(z_value % params.order_q, z_rand % params.order_q)
    rhs = ops.mul(announce.point, ops.pow(c.point, beta % params.order_q))
    return lhs == rhs


def simulate_cm(
    c: Commitment, challenge: int, params: GroupParams, rng: StreamRng
) -> ProofCm:
    """Honest-verifier simulator: sample answers, derive the announce."""
    ops = params.ops()
    q = params.order_q
    z_value = rng.field_element(q)
    z_rand = rng.field_element(q)
    announce = ops.mul(
        ops.commit(z_value, z_rand), ops.inv(ops.pow(c.point, challenge % q))
    )
    return ProofCm(Commitment(announce), z_value, z_rand, None)


# ---------------------------------------------------------------------------
# proof that committed values sum to a public total


class SumProver:
    def __init__(self, openings: Sequence[Opening], params: GroupParams, rng: StreamRng):
        q = params.order_q
        self._q = q
        self._rand_sum = sum(o.randomness for o in openings) % q
        self._mask = rng.field_element(q)
        self.announce = commit(0, self._mask, params)

    def respond(self, challenge: int) -> int:
        return (self._mask + challenge * self._rand_sum) % self._q


def _sum_transcript(
    commitments: Sequence[Commitment], claimed_sum: int, params: GroupParams
) -> Transcript:
    t = Transcript(SUM_TAG, params)
    for c in commitments:
        t.append_commitment(c)
    t.append_scalar(claimed_sum)
    return t


def prove_sum(
    openings: Sequence[Opening],
    claimed_sum: int,
    params: GroupParams,
    rng: StreamRng,
    challenge: Optional[int] = None,
) -> ProofSum:
    prover = SumProver(openings, params, rng)
    if challenge is None:
        commitments = [commit(o.value, o.randomness, params) for o in openings]
        t = _sum_transcript(commitments, claimed_sum, params)
        t.append_commitment(prover.announce)
        beta = t.challenge()
        return ProofSum(prover.announce, prover.respond(beta), beta)
    return ProofSum(prover.announce, prover.respond(challenge), None)


def verify_sum(
    commitments: Sequence[Commitment],
    claimed_sum: int,
    proof: ProofSum,
    params: GroupParams,
    challenge: Optional[int] = None,
) -> bool:
    if challenge is None:
        t = _sum_transcript(commitments, claimed_sum, params)
        t.append_commitment(proof.announce)
        beta = t.challenge()
        if proof.challenge is not None and proof.challenge != beta:
            return False
    else:
        beta = challenge
    return check_sum_equation(commitments, claimed_sum, proof.announce, beta, proof.z_rand, params)


def check_sum_equation(
    commitments: Sequence[Commitment],
    claimed_sum: int,
    announce: Commitment,
    beta: int,
    z_rand: int,
    params: GroupParams,
) -> bool:
    """g^(beta*y) * h^z_rand == announce * (prod commitments)^beta."""
    ops = params.ops()
    q = params.order_q
    if not all(_valid_point(c.point, params) for c in commitments):
        return False
    if not _valid_point(announce.point, params):
        return False
    lhs = ops.commit(beta * claimed_sum % q, z_rand % q)
    prod = ops.product(c.point for c in commitments)
    rhs = ops.mul(announce.point, ops.pow(prod, beta % q))
    return lhs == rhs


def sum_challenge(
    commitments: Sequence[Commitment],
    claimed_sum: int,
    announce: Commitment,
    params: GroupParams,
) -> int:
    """The Fiat-Shamir challenge a verifier derives for a sum proof."""
    t = _sum_transcript(commitments, claimed_sum, params)
    t.append_commitment(announce)
    return t.challenge()


def simulate_sum(
    commitments: Sequence[Commitment],
    claimed_sum: int,
    challenge: int,
    params: GroupParams,
    rng: StreamRng,
) -> ProofSum:
    ops = params.ops()
    q = params.order_q
    z_rand = rng.field_element(q)
    prod = ops.product(c.point for c in commitments)
    announce = ops.mul(
        ops.commit(challenge * claimed_sum % q, z_rand),
        ops.inv(ops.pow(prod, challenge % q)),
    )
    return ProofSum(Commitment(announce), z_rand, None)


# ---------------------------------------------------------------------------
# proof of membership in a public set


class MbsProver:
    """One real branch answered honestly, the others simulated up front."""

    def __init__(
        self,
        opening: Opening,
        member_set: Sequence[int],
        params: GroupParams,
        rng: StreamRng,
    ):
        q = params.order_q
        self._q = q
        self._opening = opening
        self._members = [x % q for x in member_set]
        try:
            self._real = self._members.index(opening.value % q)
        except ValueError:
            raise ValueError("opening value not in member set") from None

        n = len(self._members)
        self._x_masks = [rng.field_element(q) for _ in range(n)]
        self._r_masks = [rng.field_element(q) for _ in range(n)]
        self._pre_challenges = [
            rng.field_element(q) if j != self._real else 0 for j in range(n)
        ]
        self.announces = [
            commit(self._x_masks[j], self._r_masks[j], params) for j in range(n)
        ]
        self.z_values = []
        for j in range(n):
            if j == self._real:
                self.z_values.append(self._x_masks[j])
            else:
                gap = (opening.value - self._members[j]) % q
                self.z_values.append((self._x_masks[j] + gap * self._pre_challenges[j]) % q)

    def respond(self, challenge: int) -> tuple[list[int], list[int]]:
        q = self._q
        betas = list(self._pre_challenges)
        betas[self._real] = (challenge - sum(
            b for j, b in enumerate(betas) if j != self._real
        )) % q
        z_rands = [
            (self._r_masks[j] + self._opening.randomness * betas[j]) % q
            for j in range(len(betas))
        ]
        return betas, z_rands


def _mbs_transcript(
    c: Commitment, member_set: Sequence[int], params: GroupParams
) -> Transcript:
    t = Transcript(MBS_TAG, params)
    t.append_commitment(c)
    for x in member_set:
        t.append_scalar(x)
    return t


def _mbs_append_first(t: Transcript, announces, z_values) -> None:
    for a in announces:
        t.append_commitment(a)
    for z in z_values:
        t.append_scalar(z)


def prove_mbs(
    opening: Opening,
    member_set: Sequence[int],
    params: GroupParams,
    rng: StreamRng,
    challenge: Optional[int] = None,
    transcript: Optional[Transcript] = None,
) -> ProofMbs:
    prover = MbsProver(opening, member_set, params, rng)
    if challenge is None:
        t = transcript if transcript is not None else _mbs_transcript(
            commit(opening.value, opening.randomness, params), member_set, params
        )
        _mbs_append_first(t, prover.announces, prover.z_values)
        beta = t.challenge()
        betas, z_rands = prover.respond(beta)
        return ProofMbs(
            tuple(prover.announces), tuple(prover.z_values), tuple(betas), tuple(z_rands), beta
        )
    betas, z_rands = prover.respond(challenge)
    return ProofMbs(
        tuple(prover.announces), tuple(prover.z_values), tuple(betas), tuple(z_rands), None
    )


def verify_mbs(
    c: Commitment,
    member_set: Sequence[int],
    proof: ProofMbs,
    params: GroupParams,
    challenge: Optional[int] = None,
    transcript: Optional[Transcript] = None,
) -> bool:
    n = len(member_set)
    if not (len(proof.announces) == len(proof.z_values) == len(proof.sub_challenges) == len(proof.z_rands) == n):
        return False
    if challenge is None:
        t = transcript if transcript is not None else _mbs_transcript(c, member_set, params)
        _mbs_append_first(t, proof.announces, proof.z_values)
        beta = t.challenge()
        if proof.challenge is not None and proof.challenge != beta:
            return False
    else:
        beta = challenge
    return check_mbs_equation(c, member_set, proof, beta, params)


def check_mbs_equation(
    c: Commitment,
    member_set: Sequence[int],
    proof: ProofMbs,
    beta: int,
    params: GroupParams,
) -> bool:
    ops = params.ops()
    q = params.order_q
    if not _valid_point(c.point, params):
        return False
    if sum(proof.sub_challenges) % q != beta % q:
        return False
    for j, member in enumerate(member_set):
        a = proof.announces[j]
        if not _valid_point(a.point, params):
            return False
        lhs = ops.commit(proof.z_values[j] % q, proof.z_rands[j] % q)
        shifted = ops.mul(c.point, ops.inv_g_pow(member % q))
        rhs = ops.mul(a.point, ops.pow(shifted, proof.sub_challenges[j] % q))
        if lhs != rhs:
            return False
    return True


def simulate_mbs(
    c: Commitment,
    member_set: Sequence[int],
    challenge: int,
    params: GroupParams,
    rng: StreamRng,
) -> ProofMbs:
    ops = params.ops()
    q = params.order_q
    n = len(member_set)
    betas = [rng.field_element(q) for _ in range(n - 1)]
    betas.append((challenge - sum(betas)) % q)
    z_values = [rng.field_element(q) for _ in range(n)]
    z_rands = [rng.field_element(q) for _ in range(n)]
    announces = []
    for j, member in enumerate(member_set):
        shifted = ops.mul(c.point, ops.inv_g_pow(member % q))
        a = ops.mul(
            ops.commit(z_values[j], z_rands[j]),
            ops.inv(ops.pow(shifted, betas[j])),
        )
        announces.append(Commitment(a))
    return ProofMbs(tuple(announces), tuple(z_values), tuple(betas), tuple(z_rands), None)


# ---------------------------------------------------------------------------
# proof of non-negativity via bit decomposition


def _nn_transcript(c: Commitment, bit_width: int, params: GroupParams) -> Transcript:
    t = Transcript(NN_TAG, params)
    t.append_commitment(c)
    t.append_bytes(bit_width.to_bytes(2, "big"))
    return t


def prove_nn(
    opening: Opening,
    bit_width: int,
    params: GroupParams,
    rng: StreamRng,
) -> ProofNN:
    """Non-interactive range proof for 0 <= value < 2^bit_width.

    Bits are committed least-significant first; each bit carries a
    membership proof for {0, 1} drawn from the running transcript.
    """
    value = opening.value % params.order_q
    if value >= 1 << bit_width:
        raise ValueError("value outside range for bit decomposition")
    bits = [(value >> i) & 1 for i in range(bit_width)]
    return prove_nn_with_bits(opening, bits, params, rng)


def prove_nn_with_bits(
    opening: Opening,
    bits: Sequence[int],
    params: GroupParams,
    rng: StreamRng,
) -> ProofNN:
    """Range-proof core over explicit bits.

    With the true binary decomposition this is an honest prover; with any
    other bits it produces a structurally well-formed proof whose
    recomposition equation cannot verify (used to model cheating provers).
    """
    q = params.order_q
    bit_width = len(bits)
    c = commit(opening.value, opening.randomness, params)
    t = _nn_transcript(c, bit_width, params)

    bit_rands = [rng.field_element(q) for _ in range(bit_width)]
    bit_commitments = [commit(bits[i], bit_rands[i], params) for i in range(bit_width)]
    for bc in bit_commitments:
        t.append_commitment(bc)

    bit_proofs = []
    for i in range(bit_width):
        bit_proofs.append(
            prove_mbs(
                Opening(bits[i], bit_rands[i]), (0, 1), params, rng, transcript=t
            )
        )

    mask = rng.field_element(q)
    announce = commit(0, mask, params)
    t.append_commitment(announce)
    beta = t.challenge()
    rand_gap = (
        sum(bit_rands[i] * (1 << i) for i in range(bit_width)) - opening.randomness
    ) % q
    z_rand = (mask + beta * rand_gap) % q
    return ProofNN(
        tuple(bit_commitments), tuple(bit_proofs), announce, z_rand, beta
    )


def verify_nn(
    c: Commitment,
    bit_width: int,
    proof: ProofNN,
    params: GroupParams,
) -> bool:
    if len(proof.bit_commitments) != bit_width or len(proof.bit_proofs) != bit_width:
        return False
    if not _valid_point(c.point, params) or not _valid_point(proof.announce.point, params):
        return False
    t = _nn_transcript(c, bit_width, params)
    for bc in proof.bit_commitments:
        if not _valid_point(bc.point, params):
            return False
        t.append_commitment(bc)
    for i in range(bit_width):
        if not verify_mbs(
            proof.bit_commitments[i], (0, 1), proof.bit_proofs[i], params, transcript=t
        ):
            return False
    t.append_commitment(proof.announce)
    beta = t.challenge()
    if proof.challenge is not None and proof.challenge != beta:
        return False
    return check_nn_equation(c, proof, beta, params)


def check_nn_equation(
    c: Commitment, proof: ProofNN, beta: int, params: GroupParams
) -> bool:
    """h^z_rand == announce * c^-beta * prod bit_i^(beta * 2^i)."""
    ops = params.ops()
    q = params.order_q
    lhs = ops.pow_h(proof.z_rand % q)
    recomposed = ops.pow2_chain([bc.point for bc in proof.bit_commitments])
    rhs = ops.mul(
        proof.announce.point,
        ops.pow(ops.mul(recomposed, ops.inv(c.point)), beta % q),
    )
    return lhs == rhs


def simulate_nn(
    c: Commitment,
    bit_width: int,
    challenge: int,
    bit_challenges: Sequence[int],
    params: GroupParams,
    rng: StreamRng,
) -> ProofNN:
    """Interactive-mode simulator: zero-bit commitments with simulated proofs."""
    ops = params.ops()
    q = params.order_q
    bit_rands = [rng.field_element(q) for _ in range(bit_width)]
    bit_commitments = [commit(0, bit_rands[i], params) for i in range(bit_width)]
    bit_proofs = [
        simulate_mbs(bit_commitments[i], (0, 1), bit_challenges[i], params, rng)
        for i in range(bit_width)
    ]
    z_rand = rng.field_element(q)
    recomposed = ops.pow2_chain([bc.point for bc in bit_commitments])
    announce = ops.mul(
        ops.pow_h(z_rand),
        ops.inv(ops.pow(ops.mul(recomposed, ops.inv(c.point)), challenge % q)),
    )
    return ProofNN(
        tuple(bit_commitments), tuple(bit_proofs), Commitment(announce), z_rand, None
    )


def _valid_point(point: int, params: GroupParams) -> bool:
    return 0 < point < params.modulus_p
