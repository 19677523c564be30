"""Dishonest-majority secret sharing with information-theoretic MACs.

Values are additively shared over Z_q; every shared value carries a MAC
share so that sum(mac_i) = alpha * sum(value_i) for a global key alpha no
party knows.  Linear operations are local; openings follow the
commit-then-reveal discipline and are batch-checked with a random linear
combination before any opened value is trusted.

The engine functions at the bottom drive all parties through the bus in
lockstep rounds; deliberate deviations for abort testing are injected via
explicit tamper arguments (the protocol layer maps its declarative
adversary scripts onto them).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional, Sequence

from .bus import SyncBus, gather
from .commitments import Commitment
from .groups import GroupParams
from .rng import StreamRng
from . import zkp
from .zkp import ProofSum


class MpcError(Exception):
    pass


class MacCheckFailed(MpcError):
    pass


class OpenBindingError(MpcError):
    """A revealed share did not match its prior hash commitment."""


class CoinTossError(MpcError):
    """A coin-toss reveal did not match its prior commitment."""


class PoolExhausted(MpcError):
    pass


class MaskReuseError(MpcError):
    pass


# ---------------------------------------------------------------------------
# shares and preprocessing


@dataclass(frozen=True)
class AuthShare:
    value_share: int
    mac_share: int


@dataclass(frozen=True)
class MacKeyShare:
    alpha_share: int


@dataclass(frozen=True)
class Triple:
    a: AuthShare
    b: AuthShare
    c: AuthShare


@dataclass(frozen=True)
class InputMask:
    shared: AuthShare
    plain_for_owner: Optional[int]  # set only on the owner's view


@dataclass
class PartyPrep:
    """One party's view of the dealt preprocessing material."""

    mac_key: MacKeyShare
    triples: list[Triple]
    masks: list[list[InputMask]]  # indexed by owner, then mask number


@dataclass
class PreprocessingPool:
    n_parties: int
    q: int
    views: list[PartyPrep]

    def view(self, index: int) -> PartyPrep:
        return self.views[index]

    # Test-only helpers: reconstruct dealt secrets across all views.
    def reconstruct_alpha(self) -> int:
        return sum(v.mac_key.alpha_share for v in self.views) % self.q

    def reconstruct_triple(self, k: int) -> tuple[int, int, int]:
        a = sum(v.triples[k].a.value_share for v in self.views) % self.q
        b = sum(v.triples[k].b.value_share for v in self.views) % self.q
        c = sum(v.triples[k].c.value_share for v in self.views) % self.q
        return a, b, c

    def reconstruct_mask(self, owner: int, k: int) -> int:
        return sum(v.masks[owner][k].shared.value_share for v in self.views) % self.q


def _share(x: int, n: int, q: int, rng: StreamRng) -> list[int]:
    parts = [rng.field_element(q) for _ in range(n - 1)]
    parts.append((x - sum(parts)) % q)
    return parts


def _share_authenticated(x: int, alpha: int, n: int, q: int, rng: StreamRng) -> list[AuthShare]:
    vals = _share(x % q, n, q, rng)
    macs = _share(alpha * x % q, n, q, rng)
    return [AuthShare(v, m) for v, m in zip(vals, macs)]


def deal_preprocessing(
    n_parties: int,
    n_triples: int,
    n_masks_per_party: int,
    q: int,
    rng: StreamRng,
) -> PreprocessingPool:
    """Dealer-mode preprocessing: triples, input masks, MAC key shares."""
    if n_parties < 3:
        raise MpcError("at least 3 parties required")
    alpha_shares = _share(rng.field_element(q), n_parties, q, rng)
    alpha = sum(alpha_shares) % q

    triples_by_party: list[list[Triple]] = [[] for _ in range(n_parties)]
    for _ in range(n_triples):
        a = rng.field_element(q)
        b = rng.field_element(q)
        sa = _share_authenticated(a, alpha, n_parties, q, rng)
        sb = _share_authenticated(b, alpha, n_parties, q, rng)
        sc = _share_authenticated(a * b % q, alpha, n_parties, q, rng)
        for i in range(n_parties):
            triples_by_party[i].append(Triple(sa[i], sb[i], sc[i]))

    masks_by_party: list[list[list[InputMask]]] = [
        [[] for _ in range(n_parties)] for _ in range(n_parties)
    ]
    for owner in range(n_parties):
        for _ in range(n_masks_per_party):
            r = rng.field_element(q)
            shares = _share_authenticated(r, alpha, n_parties, q, rng)
            for i in range(n_parties):
                masks_by_party[i][owner].append(
                    InputMask(shares[i], r if i == owner else None)
                )

    views = [
        PartyPrep(MacKeyShare(alpha_shares[i]), triples_by_party[i], masks_by_party[i])
        for i in range(n_parties)
    ]
    return PreprocessingPool(n_parties, q, views)


# ---------------------------------------------------------------------------
# per-party engine state


class SpdzParty:
    """One party's share store and local (linear) operations."""

    def __init__(self, index: int, n_parties: int, q: int, prep: PartyPrep, rng: StreamRng):
        self.index = index
        self.n_parties = n_parties
        self.q = q
        self.alpha_share = prep.mac_key.alpha_share
        self.rng = rng
        self._triples = prep.triples
        self._masks = prep.masks
        self._next_triple = 0
        self._next_mask = [0] * n_parties
        self._mask_used: set[tuple[int, int]] = set()
        self.pending_opens: list[tuple[int, AuthShare]] = []

    @property
    def party_id(self) -> str:
        return f"user{self.index}"

    # --- local linear algebra on authenticated shares (A1-A3 / B1-B3)

    def add(self, x: AuthShare, y: AuthShare) -> AuthShare:
        q = self.q
        return AuthShare((x.value_share + y.value_share) % q, (x.mac_share + y.mac_share) % q)

    def sub(self, x: AuthShare, y: AuthShare) -> AuthShare:
        q = self.q
        return AuthShare((x.value_share - y.value_share) % q, (x.mac_share - y.mac_share) % q)

    def scale_const(self, c: int, x: AuthShare) -> AuthShare:
        q = self.q
        return AuthShare(c * x.value_share % q, c * x.mac_share % q)

    def add_const(self, c: int, x: AuthShare) -> AuthShare:
        """Party 0 adjusts its value share; every MAC share absorbs c*alpha_i."""
        q = self.q
        value = (x.value_share + c) % q if self.index == 0 else x.value_share
        return AuthShare(value, (x.mac_share + c * self.alpha_share) % q)

    def zero(self) -> AuthShare:
        return AuthShare(0, 0)

    # --- preprocessing consumption (lockstep across parties)

    def take_triple(self) -> Triple:
        if self._next_triple >= len(self._triples):
            raise PoolExhausted("multiplication triples exhausted")
        t = self._triples[self._next_triple]
        self._next_triple += 1
        return t

    def take_mask(self, owner: int) -> InputMask:
        k = self._next_mask[owner]
        if k >= len(self._masks[owner]):
            raise PoolExhausted(f"input masks for owner {owner} exhausted")
        if (owner, k) in self._mask_used:
            raise MaskReuseError(f"mask {k} of owner {owner} already used")
        self._mask_used.add((owner, k))
        self._next_mask[owner] = k + 1
        return self._masks[owner][k]

    # --- MAC accounting

    def record_open(self, value: int, share: AuthShare) -> None:
        self.pending_opens.append((value % self.q, share))

    def sigma(self, value: int, share: AuthShare) -> int:
        """MAC residue gamma_i - alpha_i * x for an opened value x."""
        return (share.mac_share - self.alpha_share * value) % self.q


def reconstruct(q: int, shares: Sequence[AuthShare]) -> int:
    return sum(s.value_share for s in shares) % q


def reconstruct_mac(q: int, shares: Sequence[AuthShare]) -> int:
    return sum(s.mac_share for s in shares) % q


# ---------------------------------------------------------------------------
# multi-party sub-protocols (synchronous rounds over the bus)


def reveal_digest(sender: str, label: str, values: Sequence[int], nonce: bytes) -> str:
    h = hashlib.sha256()
    h.update(b"privess/open/v1|")
    h.update(sender.encode() + b"|" + label.encode() + b"|")
    for v in values:
        h.update(v.to_bytes(32, "big", signed=False))
    h.update(nonce)
    return h.hexdigest()


def open_batch(
    parties: Sequence[SpdzParty],
    bus: SyncBus,
    shares_per_party: Sequence[Sequence[AuthShare]],
    label: str,
    tamper: Optional[dict[int, tuple[int, int, int]]] = None,
) -> list[int]:
    """Commit-then-reveal opening of a vector of shared values (unchecked).

    ``tamper[i] = (k, dv, dm)`` makes party i additively shift its value
    share of entry k by dv (consistently in both rounds) and its recorded
    MAC share by dm -- the full freedom a cheating party has.  Returns the
    reconstructed values and records them for the next mac_check.
    """
    q = parties[0].q
    count = len(shares_per_party[0])
    revealed: dict[int, list[int]] = {}
    nonces: dict[int, bytes] = {}
    for party in parties:
        vals = [s.value_share for s in shares_per_party[party.index]]
        if tamper and party.index in tamper:
            k, dv, _dm = tamper[party.index]
            vals[k] = (vals[k] + dv) % q
        revealed[party.index] = vals
        nonces[party.index] = party.rng.bytes(16)
        bus.send(
            party.party_id,
            "open-commit",
            {"label": label, "digest": reveal_digest(party.party_id, label, vals, nonces[party.index])},
        )
    commits = {pid: env for pid, env in _broadcast_round(bus, parties, "open-commit").items()}

    for party in parties:
        bus.send(
            party.party_id,
            "open-reveal",
            {
                "label": label,
                "values": revealed[party.index],
                "nonce": nonces[party.index].hex(),
            },
        )
    reveals = _broadcast_round(bus, parties, "open-reveal")

    for party in parties:
        pid = party.party_id
        expect = commits[pid].payload["digest"]
        got = reveal_digest(
            pid,
            label,
            reveals[pid].payload["values"],
            bytes.fromhex(reveals[pid].payload["nonce"]),
        )
        if expect != got:
            raise OpenBindingError(f"{pid} revealed shares not matching its commitment")

    values = []
    for k in range(count):
        total = sum(reveals[p.party_id].payload["values"][k] for p in parties) % q
        values.append(total)
    for party in parties:
        for k in range(count):
            share = shares_per_party[party.index][k]
            if tamper and party.index in tamper and tamper[party.index][0] == k:
                dm = tamper[party.index][2]
                share = AuthShare(share.value_share, (share.mac_share + dm) % q)
            party.record_open(values[k], share)
    return values


def _broadcast_round(bus: SyncBus, parties, mtype: str):
    inboxes = bus.deliver()
    # Each party's own message is not delivered to itself; reconstruct the
    # full per-sender view from any recipient plus the sender's own copy.
    seen: dict[str, object] = {}
    for pid, envs in inboxes.items():
        for env in envs:
            if env.mtype == mtype and env.sender not in seen:
                seen[env.sender] = env
    expected = {p.party_id for p in parties}
    missing = expected - set(seen)
    if missing:
        raise MpcError(f"missing {mtype} from {sorted(missing)}")
    return seen


def _combination_coefficients(seed: int, count: int, q: int) -> list[int]:
    """Nonzero coefficients for the random linear combination."""
    out = []
    for j in range(count):
        digest = hashlib.sha256(
            b"privess/mac-comb|" + seed.to_bytes(32, "big") + j.to_bytes(4, "big")
        ).digest()
        out.append(1 + int.from_bytes(digest, "big") % (q - 1))
    return out


def mac_check(
    parties: Sequence[SpdzParty],
    bus: SyncBus,
    label: str = "mac-check",
    mac_tamper: Optional[dict[int, int]] = None,
) -> None:
    """Batch MAC verification of all pending opened values.

    Tosses a fresh coin, combines the per-value MAC residues with nonzero
    pseudorandom coefficients, and aborts unless the residues sum to zero.
    """
    count = len(parties[0].pending_opens)
    if count == 0:
        return
    q = parties[0].q
    seed = coin_toss(parties, bus, label + "/coin")
    coeffs = _combination_coefficients(seed, count, q)

    contributions: dict[int, int] = {}
    for party in parties:
        acc = 0
        for coeff, (value, share) in zip(coeffs, party.pending_opens):
            acc = (acc + coeff * party.sigma(value, share)) % q
        if mac_tamper and party.index in mac_tamper:
            acc = (acc + mac_tamper[party.index]) % q
        contributions[party.index] = acc

    nonces = {p.index: p.rng.bytes(16) for p in parties}
    for party in parties:
        bus.send(
            party.party_id,
            "sigma-commit",
            {
                "label": label,
                "digest": reveal_digest(
                    party.party_id, label, [contributions[party.index]], nonces[party.index]
                ),
            },
        )
    commits = _broadcast_round(bus, parties, "sigma-commit")
    for party in parties:
        bus.send(
            party.party_id,
            "sigma-reveal",
            {
                "label": label,
                "values": [contributions[party.index]],
                "nonce": nonces[party.index].hex(),
            },
        )
    reveals = _broadcast_round(bus, parties, "sigma-reveal")
    for party in parties:
        pid = party.party_id
        if commits[pid].payload["digest"] != reveal_digest(
            pid, label, reveals[pid].payload["values"], bytes.fromhex(reveals[pid].payload["nonce"])
        ):
            raise OpenBindingError(f"{pid} sigma reveal mismatch")
    total = sum(reveals[p.party_id].payload["values"][0] for p in parties) % q
    for party in parties:
        party.pending_opens.clear()
    if total != 0:
        raise MacCheckFailed(f"MAC residues sum to {total}, not 0 ({label})")


def coin_toss(
    parties: Sequence[SpdzParty],
    bus: SyncBus,
    label: str,
    count: int = 1,
    cheat: Optional[dict[int, int]] = None,
) -> int | list[int]:
    """Commit-then-reveal joint randomness: beta = sum of contributions.

    ``cheat[i] = delta`` makes party i reveal a value different from its
    commitment, which must abort.
    """
    q = parties[0].q
    draws = {p.index: [p.rng.field_element(q) for _ in range(count)] for p in parties}
    nonces = {p.index: p.rng.bytes(16) for p in parties}
    for party in parties:
        bus.send(
            party.party_id,
            "coin-commit",
            {
                "label": label,
                "digest": reveal_digest(party.party_id, label, draws[party.index], nonces[party.index]),
            },
        )
    commits = _broadcast_round(bus, parties, "coin-commit")

    for party in parties:
        values = list(draws[party.index])
        if cheat and party.index in cheat:
            values[0] = (values[0] + cheat[party.index]) % q
        bus.send(
            party.party_id,
            "coin-reveal",
            {"label": label, "values": values, "nonce": nonces[party.index].hex()},
        )
    reveals = _broadcast_round(bus, parties, "coin-reveal")

    for party in parties:
        pid = party.party_id
        if commits[pid].payload["digest"] != reveal_digest(
            pid, label, reveals[pid].payload["values"], bytes.fromhex(reveals[pid].payload["nonce"])
        ):
            raise CoinTossError(f"{pid} coin reveal does not match its commitment")
    outs = []
    for k in range(count):
        outs.append(sum(reveals[p.party_id].payload["values"][k] for p in parties) % q)
    return outs[0] if count == 1 else outs


def input_round(
    parties: Sequence[SpdzParty],
    bus: SyncBus,
    inputs: dict[int, Sequence[int]],
    label: str,
    equivocate: Optional[dict[int, tuple[int, int, set[int]]]] = None,
) -> dict[int, list[list[AuthShare]]]:
    """Mask-based input of private vectors, all owners in one round.

    Each owner broadcasts z_k = x_k - r_k for a fresh mask r_k; every
    party locally sets <x_k> = z_k + <r_k>.  ``equivocate[owner] =
    (k, delta, victims)`` makes the owner send z_k + delta to the victim
    parties only (an inconsistent broadcast, caught later by MAC checks).

    Returns {owner: per-party share vectors} aligned by party index.
    """
    q = parties[0].q
    masks: dict[int, dict[int, list[InputMask]]] = {}
    for owner, secrets in inputs.items():
        masks[owner] = {
            p.index: [p.take_mask(owner) for _ in secrets] for p in parties
        }

    for owner, secrets in inputs.items():
        own_masks = masks[owner][owner]
        zs = [
            (int(x) - m.plain_for_owner) % q for x, m in zip(secrets, own_masks)
        ]
        owner_id = parties[owner].party_id
        if equivocate and owner in equivocate:
            k, delta, victims = equivocate[owner]
            bad = list(zs)
            bad[k] = (bad[k] + delta) % q
            for party in parties:
                if party.index == owner:
                    continue
                payload = {"label": label, "owner": owner, "z": bad if party.index in victims else zs}
                bus.send(owner_id, "input-z", payload, recipient=party.party_id)
        else:
            bus.send(owner_id, "input-z", {"label": label, "owner": owner, "z": zs})
    inboxes = bus.deliver()

    out: dict[int, list[list[AuthShare]]] = {}
    for owner, secrets in inputs.items():
        per_party: list[list[AuthShare]] = [None] * len(parties)  # type: ignore
        for party in parties:
            if party.index == owner:
                zs = [
                    (int(x) - m.plain_for_owner) % q
                    for x, m in zip(secrets, masks[owner][owner])
                ]
            else:
                env = next(
                    e
                    for e in inboxes[party.party_id]
                    if e.mtype == "input-z" and e.payload["owner"] == owner
                )
                zs = env.payload["z"]
            shares = [
                party.add_const(z, mask.shared)
                for z, mask in zip(zs, masks[owner][party.index])
            ]
            per_party[party.index] = shares
        out[owner] = per_party
    return out


def beaver_mul(
    parties: Sequence[SpdzParty],
    bus: SyncBus,
    xs: Sequence[Sequence[AuthShare]],
    ys: Sequence[Sequence[AuthShare]],
    label: str = "beaver",
) -> list[list[AuthShare]]:
    """Batch multiplication of shared vectors via fresh triples.

    xs[i][k] is party i's share of the k-th left factor.  Returns the
    per-party shares of the products.
    """
    q = parties[0].q
    count = len(xs[0])
    triples = {p.index: [p.take_triple() for _ in range(count)] for p in parties}

    eps_shares = [
        [parties[i].sub(xs[i][k], triples[i][k].a) for k in range(count)]
        for i in range(len(parties))
    ]
    delta_shares = [
        [parties[i].sub(ys[i][k], triples[i][k].b) for k in range(count)]
        for i in range(len(parties))
    ]
    eps = open_batch(parties, bus, eps_shares, label + "/eps")
    delta = open_batch(parties, bus, delta_shares, label + "/delta")

    out: list[list[AuthShare]] = []
    for party in parties:
        row = []
        for k in range(count):
            t = triples[party.index][k]
            acc = t.c
            acc = party.add(acc, party.scale_const(eps[k], t.b))
            acc = party.add(acc, party.scale_const(delta[k], t.a))
            acc = party.add_const(eps[k] * delta[k] % q, acc)
            row.append(acc)
        out.append(row)
    return out


# ---------------------------------------------------------------------------
# SPDZ-distributed proof constructions


def distributed_prove_cm(
    parties: Sequence[SpdzParty],
    bus: SyncBus,
    params: GroupParams,
    owner: int,
    value_shares: Sequence[AuthShare],
    rand_shares: Sequence[AuthShare],
    public_commitment: Commitment,
    label: str = "dist-cm",
    value_override: Optional[int] = None,
) -> list[bool]:
    """Prove consistency of a shared value with its public commitment.

    The owner shares a fresh masking pair and announces its commitment;
    a joint coin supplies the challenge; the response is computed as a
    shared linear combination, opened and MAC-checked; then each party
    checks the verification equation.  Returns per-party verdicts.
    """
    q = params.order_q
    rng = parties[owner].rng
    a_mask = rng.field_element(q)
    r_mask = rng.field_element(q)
    announce = Commitment(params.ops().commit(a_mask, r_mask))

    shared = input_round(
        parties, bus, {owner: [a_mask, r_mask]}, label + "/mask"
    )[owner]
    bus.send(parties[owner].party_id, "cm-announce", {"label": label, "announce": announce.point})
    bus.deliver()

    beta = coin_toss(parties, bus, label + "/beta")

    z_shares = []
    for party in parties:
        mask_a, mask_r = shared[party.index]
        z_a = party.add(mask_a, party.scale_const(beta, value_shares[party.index]))
        z_r = party.add(mask_r, party.scale_const(beta, rand_shares[party.index]))
        z_shares.append([z_a, z_r])
    z_a_val, z_r_val = open_batch(parties, bus, z_shares, label + "/z")
    mac_check(parties, bus, label + "/mac")

    return [
        zkp.check_cm_equation(public_commitment, announce, beta, z_a_val, z_r_val, params)
        for _ in parties
    ]


def distributed_prove_sum(
    parties: Sequence[SpdzParty],
    bus: SyncBus,
    params: GroupParams,
    value_commitments: Sequence[Commitment],
    rand_shares_by_owner: Sequence[Sequence[AuthShare]],
    public_total: int,
    label: str = "dist-sum",
) -> tuple[ProofSum, list[bool]]:
    """Jointly build a nzkpSum for committed per-party values.

    rand_shares_by_owner[i] is the per-party share vector of owner i's
    commitment randomness (aligned by party index).  The resulting proof
    verifies exactly like a locally generated zkp.prove_sum output.
    """
    q = params.order_q
    n = len(parties)

    mask_values = {p.index: p.rng.field_element(q) for p in parties}
    announces = {
        p.index: Commitment(params.ops().pow_h(mask_values[p.index])) for p in parties
    }
    shared_masks = input_round(
        parties,
        bus,
        {p.index: [mask_values[p.index]] for p in parties},
        label + "/mask",
    )
    for party in parties:
        bus.send(
            party.party_id,
            "sum-announce",
            {"label": label, "announce": announces[party.index].point},
        )
    bus.deliver()

    combined_announce = Commitment(
        params.ops().product(announces[i].point for i in range(n))
    )
    beta = zkp.sum_challenge(value_commitments, public_total, combined_announce, params)

    z_shares = []
    for party in parties:
        acc = party.zero()
        for owner in range(n):
            acc = party.add(acc, shared_masks[owner][party.index][0])
        rand_sum = party.zero()
        for owner in range(n):
            rand_sum = party.add(rand_sum, rand_shares_by_owner[owner][party.index])
        acc = party.add(acc, party.scale_const(beta, rand_sum))
        z_shares.append([acc])
    (z_rand,) = open_batch(parties, bus, z_shares, label + "/z")
    mac_check(parties, bus, label + "/mac")

    proof = ProofSum(combined_announce, z_rand, beta)
    verdicts = [
        zkp.verify_sum(value_commitments, public_total, proof, params) for _ in parties
    ]
    return proof, verdicts
