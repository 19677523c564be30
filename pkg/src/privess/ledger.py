"""Simulated privacy-preserving ledger.

Accounts hold committed balances only; balance openings live with their
owners.  Multi-transactions execute atomically behind proof gates (sum
proof against the public total, per-sender non-negative-balance range
proofs, multi-signature) and every state change is recorded in an
append-only hash-chained log from which the ledger can be rebuilt and
re-verified.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from . import zkp
from .commitments import Commitment, Opening, combine, commit, uncombine
from .groups import GroupParams, decode_raw
from .rng import StreamRng


class LedgerError(Exception):
    pass


class RejectedError(LedgerError):
    """A proof or signature gate failed; no state was changed."""


# ---------------------------------------------------------------------------
# signatures (contract: any EUF-CMA scheme; Ed25519 here)


class SigningKey:
    def __init__(self, private: Ed25519PrivateKey):
        self._private = private
        self.public_bytes = private.public_key().public_bytes_raw()

    @classmethod
    def from_seed(cls, seed: bytes) -> "SigningKey":
        material = hashlib.sha256(b"privess/sig/v1|" + seed).digest()
        return cls(Ed25519PrivateKey.from_private_bytes(material))

    def sign(self, message: bytes) -> bytes:
        return self._private.sign(message)


def verify_signature(public_key: bytes, message: bytes, signature: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


def address_of(public_key: bytes) -> str:
    return hashlib.sha256(public_key).hexdigest()


# ---------------------------------------------------------------------------
# owner-side wallet


@dataclass
class Wallet:
    """Keys plus the privately tracked opening of the on-ledger balance."""

    key: SigningKey
    balance_value: int = 0
    balance_randomness: int = 0

    @property
    def address(self) -> str:
        return address_of(self.key.public_bytes)

    def apply_credit(self, value: int, randomness: int, q: int) -> None:
        self.balance_value = (self.balance_value + value) % q
        self.balance_randomness = (self.balance_randomness + randomness) % q

    def apply_debit(self, value: int, randomness: int, q: int) -> None:
        self.balance_value = (self.balance_value - value) % q
        self.balance_randomness = (self.balance_randomness - randomness) % q

    def opening(self) -> Opening:
        return Opening(self.balance_value, self.balance_randomness)


# ---------------------------------------------------------------------------
# ledger records


@dataclass
class AccountRecord:
    address: str
    public_key: bytes
    balance_commitment: Commitment
    nonce: int = 0


@dataclass(frozen=True)
class MtxEntry:
    sender: str
    recipient: str
    value_commitment: Commitment


@dataclass(frozen=True)
class MultiTransaction:
    entries: tuple[MtxEntry, ...]
    public_total: int  # field element (payments at scale^2)
    sum_proof: zkp.ProofSum
    nonces: tuple[int, ...]  # per-sender account nonces at submission

    def canonical(self, params: GroupParams) -> bytes:
        blob = {
            "entries": [
                [e.sender, e.recipient, e.value_commitment.point] for e in self.entries
            ],
            "public_total": self.public_total,
            "sum_proof": self.sum_proof.to_bytes(params).hex(),
            "nonces": list(self.nonces),
        }
        return json.dumps(blob, sort_keys=True, separators=(",", ":")).encode()

    def mtx_id(self, params: GroupParams) -> str:
        return hashlib.sha256(b"privess/mtx/v1|" + self.canonical(params)).hexdigest()


@dataclass(frozen=True)
class Receipt:
    user_address: str
    slot: int
    commitment: Commitment
    signature: bytes

    def message(self, params: GroupParams) -> bytes:
        return receipt_message(self.user_address, self.slot, self.commitment, params)


def receipt_message(user_address: str, slot: int, commitment: Commitment, params: GroupParams) -> bytes:
    return (
        b"privess/receipt/v1|"
        + user_address.encode()
        + b"|"
        + slot.to_bytes(4, "big")
        + b"|"
        + commitment.to_bytes(params)
    )


@dataclass
class _PendingMtx:
    mtx: MultiTransaction
    submitted: set[str] = field(default_factory=set)
    confirmations: dict[str, tuple[zkp.ProofNN, bytes]] = field(default_factory=dict)


class Ledger:
    """Single-writer deterministic ledger state machine."""

    def __init__(self, params: GroupParams, nn_bit_width: int = zkp.DEFAULT_BIT_WIDTH):
        self.params = params
        self.nn_bit_width = nn_bit_width
        self.accounts: dict[str, AccountRecord] = {}
        self.receipts: dict[tuple[str, int], Receipt] = {}
        self.pending: dict[str, _PendingMtx] = {}
        self.executed: set[str] = set()
        self.log: list[dict] = []
        self._log_head = "0" * 64

    # --- log plumbing

    def _append_log(self, entry: dict) -> None:
        body = dict(entry)
        body["prev"] = self._log_head
        digest = hashlib.sha256(
            b"privess/ledger/v1|"
            + json.dumps(body, sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest()
        body["hash"] = digest
        self.log.append(body)
        self._log_head = digest

    def dump_log(self) -> str:
        return "\n".join(
            json.dumps(e, sort_keys=True, separators=(",", ":")) for e in self.log
        ) + ("\n" if self.log else "")

    # --- accounts

    def create_account(self, public_key: bytes) -> AccountRecord:
        addr = address_of(public_key)
        if addr in self.accounts:
            raise LedgerError(f"account {addr} already exists")
        record = AccountRecord(addr, public_key, Commitment(1))
        self.accounts[addr] = record
        self._append_log({"type": "account", "address": addr, "public_key": public_key.hex()})
        return record

    def top_up(self, address: str, amount: int, rng: StreamRng) -> Opening:
        """Homomorphically add a public deposit; the fresh opening delta is
        handed back to the account owner."""
        if amount < 0:
            raise LedgerError("top-up amount must be non-negative")
        record = self._account(address)
        randomness = rng.field_element(self.params.order_q)
        delta = commit(amount, randomness, self.params)
        record.balance_commitment = combine(record.balance_commitment, delta, self.params)
        self._append_log(
            {
                "type": "top_up",
                "address": address,
                "amount": amount,
                "commitment": record.balance_commitment.point,
            }
        )
        return Opening(amount % self.params.order_q, randomness)

    def _account(self, address: str) -> AccountRecord:
        try:
            return self.accounts[address]
        except KeyError:
            raise LedgerError(f"unknown account {address}") from None

    def balance_commitment_product(self) -> int:
        ops = self.params.ops()
        return ops.product(a.balance_commitment.point for a in self.accounts.values())

    # --- multi-transaction lifecycle

    def submit_mtx(self, sender_address: str, mtx: MultiTransaction) -> str:
        """Each sender submits the jointly agreed transaction; submissions
        must be bit-identical."""
        senders = [e.sender for e in mtx.entries]
        if sender_address not in senders:
            raise LedgerError("submitter is not a sender of this transaction")
        if len(set(senders)) != len(senders):
            raise RejectedError("duplicate sender in multi-transaction")
        for entry, nonce in zip(mtx.entries, mtx.nonces):
            record = self._account(entry.sender)
            if record.nonce != nonce:
                raise RejectedError(f"stale nonce for {entry.sender}")
        mtx_id = mtx.mtx_id(self.params)
        if mtx_id in self.executed:
            raise RejectedError("transaction already executed")
        pend = self.pending.get(mtx_id)
        if pend is None:
            pend = _PendingMtx(mtx)
            self.pending[mtx_id] = pend
        elif pend.mtx.canonical(self.params) != mtx.canonical(self.params):
            raise RejectedError("conflicting submission for the same id")
        pend.submitted.add(sender_address)
        self._append_log({"type": "submit", "mtx_id": mtx_id, "sender": sender_address})
        return mtx_id

    def confirm_mtx(
        self,
        sender_address: str,
        mtx_id: str,
        balance_proof: zkp.ProofNN,
        signature: bytes,
    ) -> None:
        pend = self._pending(mtx_id)
        if sender_address not in {e.sender for e in pend.mtx.entries}:
            raise LedgerError("confirmer is not a sender")
        pend.confirmations[sender_address] = (balance_proof, signature)
        self._append_log(
            {
                "type": "confirm",
                "mtx_id": mtx_id,
                "sender": sender_address,
                "balance_proof": balance_proof.to_bytes(self.params).hex(),
                "signature": signature.hex(),
            }
        )

    def _pending(self, mtx_id: str) -> _PendingMtx:
        try:
            return self.pending[mtx_id]
        except KeyError:
            raise LedgerError(f"unknown pending transaction {mtx_id}") from None

    def execute_mtx(self, mtx_id: str) -> None:
        """Verify every gate, then apply all balance updates atomically."""
        pend = self._pending(mtx_id)
        mtx = pend.mtx
        if mtx_id in self.executed:
            raise RejectedError("transaction already executed")
        params = self.params
        senders = [e.sender for e in mtx.entries]
        missing = set(senders) - pend.submitted
        if missing:
            raise RejectedError(f"missing submissions: {sorted(missing)}")
        missing = set(senders) - set(pend.confirmations)
        if missing:
            raise RejectedError(f"missing confirmations: {sorted(missing)}")
        if decode_raw(mtx.public_total, params) <= 0:
            raise RejectedError("public total must be positive")

        recipients = {e.recipient for e in mtx.entries}
        if len(recipients) != 1:
            raise RejectedError("multi-transaction must pay a single recipient")
        recipient = self._account(next(iter(recipients)))

        value_commitments = [e.value_commitment for e in mtx.entries]
        if not zkp.verify_sum(value_commitments, mtx.public_total, mtx.sum_proof, params):
            raise RejectedError("sum proof failed")

        message = mtx_id.encode()
        for entry, nonce in zip(mtx.entries, mtx.nonces):
            record = self._account(entry.sender)
            if record.nonce != nonce:
                raise RejectedError(f"stale nonce for {entry.sender}")
            proof, signature = pend.confirmations[entry.sender]
            if not verify_signature(record.public_key, message, signature):
                raise RejectedError(f"bad signature from {entry.sender}")
            residual = uncombine(record.balance_commitment, entry.value_commitment, params)
            if not zkp.verify_nn(residual, self.nn_bit_width, proof, params):
                raise RejectedError(f"balance proof failed for {entry.sender}")

        # All gates passed: apply updates.
        ops = params.ops()
        credit_point = 1
        for entry in mtx.entries:
            record = self.accounts[entry.sender]
            record.balance_commitment = uncombine(
                record.balance_commitment, entry.value_commitment, params
            )
            record.nonce += 1
            credit_point = ops.mul(credit_point, entry.value_commitment.point)
        recipient.balance_commitment = combine(
            recipient.balance_commitment, Commitment(credit_point), params
        )
        self.executed.add(mtx_id)
        del self.pending[mtx_id]
        self._append_log(
            {
                "type": "execute",
                "mtx_id": mtx_id,
                "mtx": mtx.canonical(params).decode(),
                "balances": {
                    a.address: a.balance_commitment.point for a in self.accounts.values()
                },
            }
        )

    # --- receipts

    def attach_receipt(
        self,
        operator_address: str,
        user_address: str,
        slot: int,
        commitment: Commitment,
        signature: bytes,
        service_mtx_id: str,
    ) -> Receipt:
        if service_mtx_id not in self.executed:
            raise RejectedError("service transaction has not executed")
        operator = self._account(operator_address)
        message = receipt_message(user_address, slot, commitment, self.params)
        if not verify_signature(operator.public_key, message, signature):
            raise RejectedError("receipt signature invalid")
        self._account(user_address)
        receipt = Receipt(user_address, slot, commitment, signature)
        self.receipts[(user_address, slot)] = receipt
        self._append_log(
            {
                "type": "receipt",
                "operator": operator_address,
                "user": user_address,
                "slot": slot,
                "commitment": commitment.point,
                "signature": signature.hex(),
                "mtx_id": service_mtx_id,
            }
        )
        return receipt

    def receipts_for(self, user_address: str) -> dict[int, Receipt]:
        return {
            slot: r for (addr, slot), r in self.receipts.items() if addr == user_address
        }


# ---------------------------------------------------------------------------
# virtual-net-metering audit (grid-operator side)


@dataclass
class AuditOutcome:
    approved: bool
    credit: Fraction  # $ credited when approved
    reason: str = ""
    code: str = ""  # "receipt" (provenance failure) | "claim" (content failure)


class VnmAuditor:
    """Verifies user reimbursement claims against signed receipts and the
    operator-declared aggregate export, slot by slot."""

    def __init__(
        self,
        params: GroupParams,
        operator_public_key: bytes,
        export_caps: Sequence[int],  # per-slot aggregate export, scale^2 raw
        prices: Sequence[Fraction],
        scale: int,
    ):
        self.params = params
        self.operator_public_key = operator_public_key
        self.export_caps = list(export_caps)
        self.prices = list(prices)
        self.scale = scale
        self.claimed: list[int] = [0] * len(export_caps)

    def audit_claim(
        self,
        user_address: str,
        receipts: dict[int, Receipt],
        openings: dict[int, Opening],
    ) -> AuditOutcome:
        """All-or-nothing per-user claim across the horizon."""
        total_raw = []
        for t in range(len(self.export_caps)):
            receipt = receipts.get(t)
            if receipt is None:
                return AuditOutcome(False, Fraction(0), f"missing receipt for slot {t}", "receipt")
            if receipt.user_address != user_address:
                return AuditOutcome(
                    False, Fraction(0), f"receipt at slot {t} names another account", "receipt"
                )
            if not verify_signature(
                self.operator_public_key, receipt.message(self.params), receipt.signature
            ):
                return AuditOutcome(
                    False, Fraction(0), f"receipt signature invalid at slot {t}", "receipt"
                )
            opening = openings.get(t)
            if opening is None:
                return AuditOutcome(False, Fraction(0), f"missing opening for slot {t}", "claim")
            if commit(opening.value, opening.randomness, self.params) != receipt.commitment:
                return AuditOutcome(
                    False, Fraction(0), f"opening does not match receipt at slot {t}", "claim"
                )
            value = decode_raw(opening.value, self.params)
            if value < 0:
                return AuditOutcome(False, Fraction(0), f"negative export claim at slot {t}", "claim")
            if self.claimed[t] + value > self.export_caps[t]:
                return AuditOutcome(
                    False, Fraction(0), f"claims exceed aggregate export at slot {t}", "claim"
                )
            total_raw.append(value)
        for t, value in enumerate(total_raw):
            self.claimed[t] += value
        credit = sum(
            (Fraction(v, self.scale * self.scale) * self.prices[t] for t, v in enumerate(total_raw)),
            Fraction(0),
        )
        return AuditOutcome(True, credit)


# ---------------------------------------------------------------------------
# log replay


def replay_log(
    lines: Sequence[str], params: GroupParams, nn_bit_width: int = zkp.DEFAULT_BIT_WIDTH
) -> "Ledger":
    """Rebuild a ledger from its log, re-verifying the hash chain, every
    proof and signature, and every recorded balance snapshot."""
    head = "0" * 64
    ledger = Ledger(params, nn_bit_width)
    confirmations: dict[tuple[str, str], tuple[zkp.ProofNN, bytes]] = {}
    for line in lines:
        if not line.strip():
            continue
        entry = json.loads(line)
        claimed_hash = entry.pop("hash")
        prev = entry.pop("prev")
        if prev != head:
            raise LedgerError("broken hash chain")
        digest = hashlib.sha256(
            b"privess/ledger/v1|"
            + json.dumps(dict(entry, prev=prev), sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest()
        if digest != claimed_hash:
            raise LedgerError("log entry hash mismatch")
        head = claimed_hash

        kind = entry["type"]
        if kind == "account":
            addr = entry["address"]
            pub = bytes.fromhex(entry["public_key"])
            if address_of(pub) != addr:
                raise LedgerError("account address does not hash its public key")
            ledger.accounts[addr] = AccountRecord(addr, pub, Commitment(1))
        elif kind == "top_up":
            record = ledger._account(entry["address"])
            record.balance_commitment = Commitment(entry["commitment"])
        elif kind == "submit":
            pass  # canonical payload arrives with the execute entry
        elif kind == "confirm":
            proof = zkp.ProofNN.from_bytes(bytes.fromhex(entry["balance_proof"]), params)
            confirmations[(entry["mtx_id"], entry["sender"])] = (
                proof,
                bytes.fromhex(entry["signature"]),
            )
        elif kind == "execute":
            blob = json.loads(entry["mtx"])
            mtx_id = entry["mtx_id"]
            commitments = [Commitment(point) for _, _, point in blob["entries"]]
            proof = zkp.ProofSum.from_bytes(bytes.fromhex(blob["sum_proof"]), params)
            if not zkp.verify_sum(commitments, blob["public_total"], proof, params):
                raise LedgerError("replayed sum proof failed verification")
            ops = params.ops()
            credit_point = 1
            recipient = None
            for (sender, rcpt, point), nonce in zip(blob["entries"], blob["nonces"]):
                record = ledger._account(sender)
                if record.nonce != nonce:
                    raise LedgerError("replayed nonce mismatch")
                conf = confirmations.get((mtx_id, sender))
                if conf is None:
                    raise LedgerError(f"execute without confirmation from {sender}")
                nn_proof, signature = conf
                if not verify_signature(record.public_key, mtx_id.encode(), signature):
                    raise LedgerError(f"replayed signature invalid for {sender}")
                residual = uncombine(record.balance_commitment, Commitment(point), params)
                if not zkp.verify_nn(residual, nn_bit_width, nn_proof, params):
                    raise LedgerError(f"replayed balance proof failed for {sender}")
                record.balance_commitment = residual
                record.nonce += 1
                credit_point = ops.mul(credit_point, point)
                recipient = rcpt
            rec = ledger._account(recipient)
            rec.balance_commitment = combine(rec.balance_commitment, Commitment(credit_point), params)
            for addr, point in entry["balances"].items():
                if ledger._account(addr).balance_commitment.point != point:
                    raise LedgerError("replayed balances do not match the log snapshot")
            ledger.executed.add(mtx_id)
        elif kind == "receipt":
            operator = ledger._account(entry["operator"])
            commitment = Commitment(entry["commitment"])
            message = receipt_message(entry["user"], entry["slot"], commitment, params)
            signature = bytes.fromhex(entry["signature"])
            if not verify_signature(operator.public_key, message, signature):
                raise LedgerError("replayed receipt signature invalid")
            if entry["mtx_id"] not in ledger.executed:
                raise LedgerError("receipt references an unexecuted transaction")
            ledger.receipts[(entry["user"], entry["slot"])] = Receipt(
                entry["user"], entry["slot"], commitment, signature
            )
        else:
            raise LedgerError(f"unknown log entry type {kind!r}")
        ledger.log.append(dict(entry, prev=prev, hash=claimed_hash))
        ledger._log_head = claimed_hash
    return ledger
