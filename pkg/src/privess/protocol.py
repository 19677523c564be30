"""Multi-party protocol runner: scheduling, payment and settlement stages.

Simulates N user parties, the storage operator, the grid operator and the
ledger over a synchronous bus.  Honest runs settle; every deviation a
scripted adversary can make maps to exactly one abort kind.  All
randomness derives from the run seed, so a (config, seed) pair produces a
byte-identical transcript.

Adversary scripts are declarative (party, stage, step, kind, params)
tuples; the runner translates them into concrete deviations at the
single point where each behavior happens.
"""

from __future__ import annotations

import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

from . import ledger as ledger_mod
from . import mpc, scheduler, zkp
from .bus import SyncBus
from .commitments import Commitment, Opening, commit, scale as scale_commitment
from .groups import GroupParams, decode_raw, get_profile
from .ledger import (
    Ledger,
    MtxEntry,
    MultiTransaction,
    SigningKey,
    VnmAuditor,
    Wallet,
    receipt_message,
)
from .plaintext import PlainResult, run_plaintext
from .rng import StreamRng
from .scheduler import DemandProfile, PricePlan, StorageParams

# Abort kinds (exactly one per deviation class).
NN_PROOF_FAILED = "NN-proof-failed"
ZKPCM_FAILED = "zkpCm-failed"
MAC_FAILED = "MAC-failed"
COST_MISMATCH = "cost-mismatch"
SUM_PROOF_FAILED = "sum-proof-failed"
BALANCE_PROOF_FAILED = "balance-proof-failed"
COIN_TOSS_MISMATCH = "coin-toss-mismatch"
RECEIPT_INVALID = "receipt-invalid"
VNM_REJECTED = "vnm-rejected"

ABORT_KINDS = (
    NN_PROOF_FAILED,
    ZKPCM_FAILED,
    MAC_FAILED,
    COST_MISMATCH,
    SUM_PROOF_FAILED,
    BALANCE_PROOF_FAILED,
    COIN_TOSS_MISMATCH,
    RECEIPT_INVALID,
    VNM_REJECTED,
)


@dataclass(frozen=True)
class AbortReason:
    stage: str
    step: str
    kind: str


class ProtocolAbort(Exception):
    def __init__(self, reason: AbortReason, detail: str = ""):
        super().__init__(f"{reason.kind} at {reason.stage}/{reason.step}: {detail}")
        self.reason = reason


@dataclass(frozen=True)
class Directive:
    party: int
    stage: str
    step: str
    kind: str
    params: dict = field(default_factory=dict)


@dataclass
class AdversaryScript:
    directives: tuple[Directive, ...] = ()

    def find(self, party: int, stage: str, step: str) -> Optional[Directive]:
        for d in self.directives:
            if d.party == party and d.stage == stage and d.step == step:
                return d
        return None

    def any_for(self, stage: str, step: str) -> list[Directive]:
        return [d for d in self.directives if d.stage == stage and d.step == step]


@dataclass
class ProtocolConfig:
    group: GroupParams
    demands: tuple[DemandProfile, ...]
    prices: PricePlan
    storage: StorageParams
    scheme: str = scheduler.PROPORTIONAL
    seed: bytes = b"privess"
    initial_balances: tuple[Fraction, ...] = ()  # $ per user; defaulted if empty
    nn_bit_width: int = zkp.DEFAULT_BIT_WIDTH
    epsilon_raw: Optional[int] = None  # |cost_ess - sum P_i| bound, scale^2 units
    adversary: AdversaryScript = field(default_factory=AdversaryScript)
    share_verification_work: bool = True

    def __post_init__(self):
        if len(self.demands) < 3:
            raise ValueError("at least 3 users required")
        horizons = {len(p.demand) for p in self.demands}
        if horizons != {self.prices.horizon}:
            raise ValueError("demand and price horizons disagree")
        if self.scheme not in scheduler.SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme}")
        if not self.initial_balances:
            exposure = sum(
                sum(p.demand[t] * self.prices.prices[t] for t in range(self.prices.horizon))
                for p in self.demands
            )
            default = Fraction(2) * exposure + 1
            self.initial_balances = tuple(default for _ in self.demands)
        if len(self.initial_balances) != len(self.demands):
            raise ValueError("initial balances must match user count")

    @property
    def n_users(self) -> int:
        return len(self.demands)

    @property
    def horizon(self) -> int:
        return self.prices.horizon

    @property
    def scale(self) -> int:
        return self.group.fixed_point_scale

    def epsilon(self) -> int:
        """Raw tolerance at scale^2: (N + T) / scale real units."""
        if self.epsilon_raw is not None:
            return self.epsilon_raw
        return (self.n_users + self.horizon) * self.scale


@dataclass
class PartyView:
    payment_raw: Optional[int] = None  # scale^2 field units (signed)
    payment: Optional[Fraction] = None  # $
    credit: Optional[Fraction] = None  # $ reimbursed via net metering
    credit_raw: Optional[int] = None  # scale^2
    vnm_outcome: Optional[str] = None  # "approved" | rejection kind
    aggregate_demand: Optional[tuple[Fraction, ...]] = None
    cost_ess: Optional[Fraction] = None
    cost_org: Optional[Fraction] = None


@dataclass
class ProtocolRun:
    outcome: str  # "settled" | "aborted"
    abort: Optional[AbortReason]
    views: list[PartyView]
    transcript: str  # bus log, JSON lines
    ledger_log: str
    traffic: dict[str, tuple[int, int]]  # stage -> (messages, bytes)
    party_seconds: dict[str, dict[str, float]]  # stage -> party -> seconds
    plain: Optional[PlainResult] = None

    @property
    def settled(self) -> bool:
        return self.outcome == "settled"


# ---------------------------------------------------------------------------
# work metering with shared-verification attribution


class Meter:
    """Per-party per-stage compute time; identical verifications done once
    are charged to every party that would have performed them."""

    def __init__(self, share_work: bool):
        self.seconds: dict[str, dict[str, float]] = defaultdict(lambda: defaultdict(float))
        self._cache: dict = {}
        self.share_work = share_work

    @contextmanager
    def measure(self, stage: str, party: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[stage][party] += time.perf_counter() - t0

    def shared(self, stage: str, party: str, key, fn: Callable[[], object]):
        if not self.share_work:
            with self.measure(stage, party):
                return fn()
        hit = self._cache.get(key)
        if hit is not None:
            result, cost = hit
            self.seconds[stage][party] += cost
            return result
        t0 = time.perf_counter()
        result = fn()
        cost = time.perf_counter() - t0
        self._cache[key] = (result, cost)
        self.seconds[stage][party] += cost
        return result


# ---------------------------------------------------------------------------
# parties


class UserParty:
    def __init__(
        self,
        index: int,
        config: ProtocolConfig,
        prep_view: mpc.PartyPrep,
        rng: StreamRng,
    ):
        self.index = index
        self.config = config
        self.params = config.group
        self.rng = rng
        self.spdz = mpc.SpdzParty(
            index, config.n_users, config.group.order_q, prep_view, rng.child("spdz")
        )
        self.wallet = Wallet(SigningKey.from_seed(rng.child("sig").bytes(32)))
        self.demand = config.demands[index]
        self.demand_raw = list(scheduler.quantize_demand(self.demand, config.scale))
        self.commit_rands: list[int] = []
        self.payment_raw: Optional[int] = None
        self.payment_opening: Optional[Opening] = None
        self.view = PartyView()

    @property
    def party_id(self) -> str:
        return f"user{self.index}"

    def directive(self, stage: str, step: str) -> Optional[Directive]:
        return self.config.adversary.find(self.index, stage, step)


class OperatorParty:
    def __init__(self, rng: StreamRng):
        self.rng = rng
        self.wallet = Wallet(SigningKey.from_seed(rng.child("sig").bytes(32)))
        self.schedule: Optional[dict] = None

    party_id = "operator"


class GridParty:
    def __init__(self, rng: StreamRng):
        self.rng = rng
        self.auditor: Optional[VnmAuditor] = None

    party_id = "grid"


def _frac_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


# ---------------------------------------------------------------------------
# the runner


class Runner:
    def __init__(self, config: ProtocolConfig):
        self.config = config
        self.params = config.group
        self.q = config.group.order_q
        self.meter = Meter(config.share_verification_work)
        self.root_rng = StreamRng(config.seed)

        n = config.n_users
        masks_per_party = 4 * config.horizon + 4
        self.pool = mpc.deal_preprocessing(
            n, 0, masks_per_party, self.q, self.root_rng.child("dealer")
        )
        self.users = [
            UserParty(i, config, self.pool.view(i), self.root_rng.child(f"user{i}"))
            for i in range(n)
        ]
        self.operator = OperatorParty(self.root_rng.child("operator"))
        self.grid = GridParty(self.root_rng.child("grid"))
        self.ledger = Ledger(self.params, config.nn_bit_width)
        party_ids = [u.party_id for u in self.users] + ["operator", "grid", "ledger"]
        self.bus = SyncBus(party_ids)
        self.spdz_parties = [u.spdz for u in self.users]

        # Stage products shared by later stages.
        self.demand_commitments: list[list[Commitment]] = []
        self.demand_shares: dict[int, list[list[mpc.AuthShare]]] = {}
        self.rand_shares: dict[int, list[list[mpc.AuthShare]]] = {}
        self.aggregate_raw: list[int] = []
        self.solution: Optional[scheduler.ScheduleSolution] = None
        self.breakdown: Optional[scheduler.CostBreakdown] = None
        self.weights: tuple[int, ...] = ()
        self.rebate: int = 0
        self.ratios: tuple[int, ...] = ()
        self.cost_ess_raw: int = 0
        self.payment_commitments: list[Commitment] = []
        self.payment_rand_shares: list[list[mpc.AuthShare]] = []
        self.payment_total_raw: int = 0
        self.sum_proof: Optional[zkp.ProofSum] = None
        self.service_mtx_id: Optional[str] = None

    # -- plumbing

    def _abort(self, stage: str, step: str, kind: str, detail: str = "") -> None:
        reason = AbortReason(stage, step, kind)
        self.bus.begin(stage, "abort")
        self.bus.send("ledger" if kind == BALANCE_PROOF_FAILED else "user0", "abort", {
            "stage": stage, "step": step, "kind": kind, "detail": detail,
        })
        self.bus.deliver()
        raise ProtocolAbort(reason, detail)

    def run(self) -> ProtocolRun:
        abort: Optional[AbortReason] = None
        try:
            self._stage0()
            self._stage1()
            self._stage2()
            self._stage3()
            outcome = "settled"
        except ProtocolAbort as exc:
            abort = exc.reason
            outcome = "aborted"
        traffic = {
            stage: (t.messages, t.bytes) for stage, t in self.bus.traffic.items()
        }
        party_seconds = {
            stage: dict(per_party) for stage, per_party in self.meter.seconds.items()
        }
        plain = None
        if outcome == "settled":
            plain = run_plaintext(
                self.config.demands,
                self.config.prices,
                self.config.storage,
                self.config.scheme,
                self.config.scale,
            )
        return ProtocolRun(
            outcome=outcome,
            abort=abort,
            views=[u.view for u in self.users],
            transcript=self.bus.dump_log(),
            ledger_log=self.ledger.dump_log(),
            traffic=traffic,
            party_seconds=party_seconds,
            plain=plain,
        )

    # -- stage 0: parameters, accounts, preprocessing

    def _stage0(self) -> None:
        cfg = self.config
        self.bus.begin("stage0", "params")
        self.bus.send(
            "operator",
            "public-params",
            {
                "group": self.params.to_config(),
                "service_fee": _frac_str(cfg.storage.service_fee),
                "eff_charge": _frac_str(cfg.storage.eff_charge),
                "eff_discharge": _frac_str(cfg.storage.eff_discharge),
                "rate_charge": _frac_str(cfg.storage.rate_charge),
                "rate_discharge": _frac_str(cfg.storage.rate_discharge),
                "vnm_fee_fraction": _frac_str(cfg.storage.vnm_fee_fraction),
                "prices": [_frac_str(p) for p in cfg.prices.prices],
                "capacity": [_frac_str(b) for b in cfg.storage.capacity],
                "scheme": cfg.scheme,
                "nn_bit_width": cfg.nn_bit_width,
            },
        )
        self.bus.deliver()

        self.bus.begin("stage0", "accounts")
        for party in [*self.users, self.operator]:
            wallet = party.wallet
            self.ledger.create_account(wallet.key.public_bytes)
            self.bus.send(
                party.party_id if isinstance(party, UserParty) else "operator",
                "account",
                {"address": wallet.address},
                recipient="ledger",
            )
        self.bus.deliver()

        for i, user in enumerate(self.users):
            directive = user.directive("stage2", "balance")
            balance = self.config.initial_balances[i]
            if directive is not None and directive.kind == "overdraw":
                balance = Fraction(directive.params.get("balance", 0))
            raw = scheduler.round_half_away(balance * cfg.scale * cfg.scale)
            opening = self.ledger.top_up(
                user.wallet.address, raw, self.root_rng.child(f"topup{i}")
            )
            user.wallet.apply_credit(opening.value, opening.randomness, self.q)

    # -- stage 1: demand commitments, shared aggregation, scheduling

    def _stage1(self) -> None:
        cfg = self.config
        T = cfg.horizon
        n = cfg.n_users
        params = self.params
        stage = "stage1"

        # Step 1: commit demands, announce with range proofs.
        self.bus.begin(stage, "commit-demands")
        announced: dict[int, dict] = {}
        for user in self.users:
            with self.meter.measure(stage, user.party_id):
                directive = user.directive(stage, "commit-demands")
                if directive is not None and directive.kind == "negative-demand":
                    slot = directive.params.get("slot", 0)
                    user.demand_raw[slot] = -abs(directive.params.get("value", 1))
                user.commit_rands = [
                    user.rng.field_element(self.q) for _ in range(T)
                ]
                commitments_i, proofs_i = [], []
                for t in range(T):
                    value = user.demand_raw[t] % self.q
                    opening = Opening(value, user.commit_rands[t])
                    commitments_i.append(commit(value, user.commit_rands[t], params))
                    if 0 <= user.demand_raw[t] < (1 << cfg.nn_bit_width):
                        proof = zkp.prove_nn(opening, cfg.nn_bit_width, params, user.rng)
                    else:
                        bits = [
                            (value >> i) & 1 for i in range(cfg.nn_bit_width)
                        ]
                        proof = zkp.prove_nn_with_bits(opening, bits, params, user.rng)
                    proofs_i.append(proof)
                announced[user.index] = {
                    "commitments": [c.point for c in commitments_i],
                    "nn_proofs": [p.to_bytes(params).hex() for p in proofs_i],
                }
                self.bus.send(user.party_id, "demand-commit", announced[user.index])
        self.bus.deliver()
        self.demand_commitments = [
            [Commitment(pt) for pt in announced[i]["commitments"]] for i in range(n)
        ]
        proofs_by_user = [
            [
                zkp.ProofNN.from_bytes(bytes.fromhex(blob), params)
                for blob in announced[i]["nn_proofs"]
            ]
            for i in range(n)
        ]
        for verifier in self.users:
            for i in range(n):
                if i == verifier.index:
                    continue
                for t in range(T):
                    ok = self.meter.shared(
                        stage,
                        verifier.party_id,
                        ("nn", i, t),
                        lambda i=i, t=t: zkp.verify_nn(
                            self.demand_commitments[i][t],
                            cfg.nn_bit_width,
                            proofs_by_user[i][t],
                            params,
                        ),
                    )
                    if not ok:
                        self._abort(stage, "commit-demands", NN_PROOF_FAILED,
                                    f"user{i} slot {t}")

        # Step 2: secret-share demands and commitment randomness.
        self.bus.begin(stage, "share-demands")
        secrets: dict[int, list[int]] = {}
        equivocate: dict[int, tuple[int, int, set[int]]] = {}
        for user in self.users:
            vals = [v % self.q for v in user.demand_raw]
            directive = user.directive(stage, "share-demands")
            if directive is not None and directive.kind == "input-shift":
                slot = directive.params.get("slot", 0)
                vals[slot] = (vals[slot] + directive.params.get("delta", 1)) % self.q
            if directive is not None and directive.kind == "input-equivocate":
                equivocate[user.index] = (
                    directive.params.get("slot", 0),
                    directive.params.get("delta", 1),
                    set(directive.params.get("victims", [0])) - {user.index},
                )
            secrets[user.index] = vals + list(user.commit_rands)
        with self.meter.measure(stage, "user0"):
            shared = mpc.input_round(
                self.spdz_parties, self.bus, secrets, "demands",
                equivocate=equivocate or None,
            )
        for owner in range(n):
            per_party = shared[owner]
            self.demand_shares[owner] = [row[:T] for row in per_party]
            self.rand_shares[owner] = [row[T:] for row in per_party]

        # Step 3: distributed consistency proofs for every (user, slot).
        self.bus.begin(stage, "zkpcm")
        mask_secrets = {}
        masks_plain = {}
        for user in self.users:
            a_masks = [user.rng.field_element(self.q) for _ in range(T)]
            r_masks = [user.rng.field_element(self.q) for _ in range(T)]
            masks_plain[user.index] = (a_masks, r_masks)
            mask_secrets[user.index] = a_masks + r_masks
        shared_masks = mpc.input_round(
            self.spdz_parties, self.bus, mask_secrets, "cm-masks"
        )
        announces: dict[int, list[Commitment]] = {}
        for user in self.users:
            with self.meter.measure(stage, user.party_id):
                a_masks, r_masks = masks_plain[user.index]
                ann = [
                    Commitment(params.ops().commit(a_masks[t], r_masks[t]))
                    for t in range(T)
                ]
                announces[user.index] = ann
                self.bus.send(
                    user.party_id,
                    "cm-announce",
                    {"announces": [c.point for c in ann]},
                )
        self.bus.deliver()

        cheat = {}
        for user in self.users:
            directive = user.directive(stage, "coin-toss")
            if directive is not None and directive.kind == "coin-cheat":
                cheat[user.index] = directive.params.get("delta", 1)
        try:
            betas = mpc.coin_toss(
                self.spdz_parties, self.bus, "stage1/beta", count=T,
                cheat=cheat or None,
            )
        except mpc.CoinTossError as exc:
            self._abort(stage, "coin-toss", COIN_TOSS_MISMATCH, str(exc))
        betas = betas if isinstance(betas, list) else [betas]

        z_shares: list[list[mpc.AuthShare]] = [[] for _ in range(n)]
        for party in self.spdz_parties:
            with self.meter.measure(stage, party.party_id):
                row = []
                for owner in range(n):
                    mask_row = shared_masks[owner][party.index]
                    for t in range(T):
                        z_a = party.add(
                            mask_row[t],
                            party.scale_const(betas[t], self.demand_shares[owner][party.index][t]),
                        )
                        z_r = party.add(
                            mask_row[T + t],
                            party.scale_const(betas[t], self.rand_shares[owner][party.index][t]),
                        )
                        row.append(z_a)
                        row.append(z_r)
                z_shares[party.index] = row
        opened = mpc.open_batch(self.spdz_parties, self.bus, z_shares, "stage1/z")
        try:
            mpc.mac_check(self.spdz_parties, self.bus, "stage1/zkpcm-mac")
        except mpc.MacCheckFailed as exc:
            self._abort(stage, "zkpcm", MAC_FAILED, str(exc))
        except mpc.OpenBindingError as exc:
            self._abort(stage, "zkpcm", MAC_FAILED, str(exc))

        for verifier in self.users:
            pos = 0
            for owner in range(n):
                for t in range(T):
                    z_a, z_r = opened[pos], opened[pos + 1]
                    pos += 2
                    ok = self.meter.shared(
                        stage,
                        verifier.party_id,
                        ("cm", owner, t),
                        lambda owner=owner, t=t, z_a=z_a, z_r=z_r: zkp.check_cm_equation(
                            self.demand_commitments[owner][t],
                            announces[owner][t],
                            betas[t],
                            z_a,
                            z_r,
                            params,
                        ),
                    )
                    if not ok:
                        self._abort(stage, "zkpcm", ZKPCM_FAILED, f"user{owner} slot {t}")

        # Step 4: aggregate demand, open, check its MAC.
        self.bus.begin(stage, "aggregate")
        agg_shares = []
        for party in self.spdz_parties:
            row = []
            for t in range(T):
                acc = party.zero()
                for owner in range(n):
                    acc = party.add(acc, self.demand_shares[owner][party.index][t])
                row.append(acc)
            agg_shares.append(row)
        tamper = {}
        for user in self.users:
            directive = user.directive(stage, "aggregate")
            if directive is not None and directive.kind == "open-tamper":
                tamper[user.index] = (
                    directive.params.get("slot", 0),
                    directive.params.get("delta", 1),
                    directive.params.get("mac_delta", 0),
                )
        self.aggregate_raw = mpc.open_batch(
            self.spdz_parties, self.bus, agg_shares, "stage1/aggregate",
            tamper=tamper or None,
        )
        try:
            mpc.mac_check(self.spdz_parties, self.bus, "stage1/agg-mac")
        except mpc.MacCheckFailed as exc:
            self._abort(stage, "aggregate", MAC_FAILED, str(exc))

        # Steps 5-6: every party independently solves the schedule and
        # derives costs (identical inputs give identical results; the work
        # is attributed to each party).
        aggregate = tuple(
            Fraction(decode_raw(v, params), cfg.scale) for v in self.aggregate_raw
        )
        if any(a < 0 for a in aggregate):
            self._abort(stage, "solve", MAC_FAILED, "negative aggregate demand")
        result = None
        for user in self.users:
            result = self.meter.shared(
                stage,
                user.party_id,
                ("solve", tuple(self.aggregate_raw)),
                lambda: self._derive_schedule(aggregate),
            )
        (
            self.solution,
            self.breakdown,
            self.weights,
            self.rebate,
            self.ratios,
            self.cost_ess_raw,
        ) = result
        for user in self.users:
            user.view.aggregate_demand = aggregate
            user.view.cost_ess = self.breakdown.cost_ess
            user.view.cost_org = self.breakdown.cost_org

    def _derive_schedule(self, aggregate: tuple[Fraction, ...]):
        cfg = self.config
        solution = scheduler.solve_p2(aggregate, cfg.prices, cfg.storage)
        breakdown = scheduler.cost_sharing(
            solution, cfg.demands, cfg.prices, cfg.storage, cfg.scheme
        )
        weights, rebate = scheduler.payment_weights(breakdown, cfg.n_users, cfg.scale)
        ratios = scheduler.quantize_ratios(solution, cfg.scale)
        cost_ess_raw = scheduler.round_half_away(breakdown.cost_ess * cfg.scale * cfg.scale)
        return solution, breakdown, weights, rebate, ratios, cost_ess_raw

    # -- stage 2: cost sharing, payment, execution

    def _stage2(self) -> None:
        cfg = self.config
        n = cfg.n_users
        params = self.params
        stage = "stage2"

        # Step 1: per-user payments, committed and shared.
        self.bus.begin(stage, "payment")
        secrets = {}
        announced: dict[int, int] = {}
        for user in self.users:
            with self.meter.measure(stage, user.party_id):
                weights = list(self.weights)
                directive = user.directive(stage, "payment")
                if directive is not None and directive.kind == "stale-weights":
                    delta = directive.params.get("delta", 1)
                    weights = [w + delta for w in weights]
                payment = scheduler.quantized_payment(
                    user.demand_raw, weights, self.rebate
                )
                user.payment_raw = payment
                randomness = user.rng.field_element(self.q)
                commit_value = payment % self.q
                if directive is not None and directive.kind == "understate-commit":
                    commit_value = (payment - directive.params.get("delta", 1)) % self.q
                user.payment_opening = Opening(payment % self.q, randomness)
                c = commit(commit_value, randomness, params)
                announced[user.index] = c.point
                self.bus.send(user.party_id, "payment-commit", {"commitment": c.point})
                secrets[user.index] = [payment % self.q, randomness]
        self.bus.deliver()
        self.payment_commitments = [Commitment(announced[i]) for i in range(n)]
        shared = mpc.input_round(self.spdz_parties, self.bus, secrets, "payments")
        payment_shares = {i: [row[0] for row in shared[i]] for i in range(n)}
        self.payment_rand_shares = [
            [shared[i][p][1] for p in range(n)] for i in range(n)
        ]

        # Step 2: total-payment consistency check.
        self.bus.begin(stage, "total-check")
        total_shares = []
        for party in self.spdz_parties:
            acc = party.zero()
            for owner in range(n):
                acc = party.add(acc, payment_shares[owner][party.index])
            total_shares.append([acc])
        (total_raw_field,) = mpc.open_batch(
            self.spdz_parties, self.bus, total_shares, "stage2/total"
        )
        try:
            mpc.mac_check(self.spdz_parties, self.bus, "stage2/total-mac")
        except mpc.MacCheckFailed as exc:
            self._abort(stage, "total-check", MAC_FAILED, str(exc))
        total_signed = decode_raw(total_raw_field, params)
        if abs(total_signed - self.cost_ess_raw) >= cfg.epsilon():
            self._abort(
                stage,
                "total-check",
                COST_MISMATCH,
                f"|{total_signed} - {self.cost_ess_raw}| >= {cfg.epsilon()}",
            )
        self.payment_total_raw = total_raw_field

        # Step 3: distributed sum proof against the adopted total.
        self.bus.begin(stage, "sum-proof")
        proof, verdicts = mpc.distributed_prove_sum(
            self.spdz_parties,
            self.bus,
            params,
            self.payment_commitments,
            self.payment_rand_shares,
            total_raw_field,
            label="stage2/sum",
        )
        if not all(verdicts):
            self._abort(stage, "sum-proof", SUM_PROOF_FAILED, "joint sum proof rejected")
        self.sum_proof = proof

        # Steps 4-6: balance range proofs, multi-transaction, execution.
        self.bus.begin(stage, "ledger")
        entries = tuple(
            MtxEntry(
                self.users[i].wallet.address,
                self.operator.wallet.address,
                self.payment_commitments[i],
            )
            for i in range(n)
        )
        nonces = tuple(
            self.ledger.accounts[self.users[i].wallet.address].nonce for i in range(n)
        )
        mtx = MultiTransaction(entries, total_raw_field, proof, nonces)
        mtx_id = None
        for user in self.users:
            mtx_id = self.ledger.submit_mtx(user.wallet.address, mtx)
            self.bus.send(
                user.party_id, "mtx-submit", {"mtx_id": mtx_id}, recipient="ledger"
            )
        self.bus.deliver()

        self.bus.begin(stage, "confirm")
        for user in self.users:
            with self.meter.measure(stage, user.party_id):
                wallet = user.wallet
                residual_value = (wallet.balance_value - user.payment_opening.value) % self.q
                residual_rand = (
                    wallet.balance_randomness - user.payment_opening.randomness
                ) % self.q
                opening = Opening(residual_value, residual_rand)
                signed = decode_raw(residual_value, params)
                if 0 <= signed < (1 << cfg.nn_bit_width):
                    nn = zkp.prove_nn(Opening(signed % self.q, residual_rand), cfg.nn_bit_width, params, user.rng)
                else:
                    bits = [(residual_value >> i) & 1 for i in range(cfg.nn_bit_width)]
                    nn = zkp.prove_nn_with_bits(opening, bits, params, user.rng)
                signature = wallet.key.sign(mtx_id.encode())
                self.ledger.confirm_mtx(wallet.address, mtx_id, nn, signature)
                self.bus.send(
                    user.party_id,
                    "mtx-confirm",
                    {"mtx_id": mtx_id, "proof": nn.to_bytes(params).hex()},
                    recipient="ledger",
                )
        self.bus.deliver()

        self.bus.begin(stage, "execute")
        try:
            with self.meter.measure(stage, "ledger"):
                self.ledger.execute_mtx(mtx_id)
        except ledger_mod.RejectedError as exc:
            detail = str(exc)
            kind = SUM_PROOF_FAILED if "sum proof" in detail else BALANCE_PROOF_FAILED
            self._abort(stage, "execute", kind, detail)
        self.bus.send("ledger", "mtx-executed", {"mtx_id": mtx_id})
        self.bus.deliver()
        self.service_mtx_id = mtx_id

        # Step 7: hand the aggregate schedule to the operator; reveal the
        # summed payment randomness so the operator can track its balance.
        self.bus.begin(stage, "settle")
        schedule_msg = {
            "aggregate": [_frac_str(a) for a in self.solution.total_demand],
            "charge": [_frac_str(v) for v in self.solution.charge],
            "discharge": [_frac_str(v) for v in self.solution.discharge],
            "residual": [_frac_str(v) for v in self.solution.residual],
        }
        self.bus.send("user0", "schedule", schedule_msg, recipient="operator")
        rand_sum_shares = []
        for party in self.spdz_parties:
            acc = party.zero()
            for owner in range(n):
                acc = party.add(acc, self.payment_rand_shares[owner][party.index])
            rand_sum_shares.append([acc])
        (rand_sum,) = mpc.open_batch(
            self.spdz_parties, self.bus, rand_sum_shares, "stage2/rand-sum"
        )
        try:
            mpc.mac_check(self.spdz_parties, self.bus, "stage2/rand-mac")
        except mpc.MacCheckFailed as exc:
            self._abort(stage, "settle", MAC_FAILED, str(exc))
        self.operator.schedule = schedule_msg
        self.operator.wallet.apply_credit(total_raw_field, rand_sum, self.q)
        for user in self.users:
            user.wallet.apply_debit(
                user.payment_opening.value, user.payment_opening.randomness, self.q
            )
            user.view.payment_raw = decode_raw(user.payment_opening.value, params)
            user.view.payment = Fraction(
                user.view.payment_raw, cfg.scale * cfg.scale
            )

    # -- stage 3: receipts and virtual-net-metering settlement

    def _stage3(self) -> None:
        cfg = self.config
        n = cfg.n_users
        T = cfg.horizon
        params = self.params
        stage = "stage3"

        # Step 1: users upload their demand commitments to the ledger.
        self.bus.begin(stage, "upload")
        for user in self.users:
            self.bus.send(
                user.party_id,
                "upload-commitments",
                {"commitments": [c.point for c in self.demand_commitments[user.index]]},
                recipient="ledger",
            )
        self.bus.deliver()

        # Steps 2-3: operator derives per-user discharge commitments by
        # scaling the demand commitments and signs them as receipts.
        self.bus.begin(stage, "receipts")
        with self.meter.measure(stage, "operator"):
            for user in self.users:
                for t in range(T):
                    c = scale_commitment(
                        self.demand_commitments[user.index][t], self.ratios[t], params
                    )
                    signature = self.operator.wallet.key.sign(
                        receipt_message(user.wallet.address, t, c, params)
                    )
                    self.ledger.attach_receipt(
                        self.operator.wallet.address,
                        user.wallet.address,
                        t,
                        c,
                        signature,
                        self.service_mtx_id,
                    )
                    self.bus.send(
                        "operator",
                        "receipt",
                        {"user": user.wallet.address, "slot": t, "commitment": c.point},
                        recipient="ledger",
                    )
        self.bus.deliver()

        # Step 4: operator provides the export profile to the grid.
        self.bus.begin(stage, "export")
        caps = [
            decode_raw(self.aggregate_raw[t], params) * self.ratios[t] for t in range(T)
        ]
        self.bus.send(
            "operator",
            "export-profile",
            {
                "discharge": [_frac_str(v) for v in self.solution.discharge],
                "ratios": list(self.ratios),
                "caps_raw": caps,
            },
            recipient="grid",
        )
        self.bus.deliver()
        self.grid.auditor = VnmAuditor(
            params,
            self.operator.wallet.key.public_bytes,
            caps,
            cfg.prices.prices,
            cfg.scale,
        )

        # Steps 5-6: users claim reimbursements; the grid audits each claim.
        self.bus.begin(stage, "claims")
        for user in self.users:
            directive = user.directive(stage, "claims")
            claim_address = user.wallet.address
            openings = {}
            for t in range(T):
                value = user.demand_raw[t] * self.ratios[t]
                randomness = user.commit_rands[t] * self.ratios[t] % self.q
                openings[t] = Opening(value % self.q, randomness)
            if directive is not None and directive.kind == "inflate-claim":
                slot = directive.params.get("slot", 0)
                delta = directive.params.get("delta", 1)
                o = openings[slot]
                openings[slot] = Opening((o.value + delta) % self.q, o.randomness)
            if directive is not None and directive.kind == "steal-receipt":
                victim = directive.params.get("victim", (user.index + 1) % n)
                claim_address = self.users[victim].wallet.address
            self.bus.send(
                user.party_id,
                "vnm-claim",
                {
                    "address": claim_address,
                    "openings": {
                        str(t): [o.value, o.randomness] for t, o in openings.items()
                    },
                },
                recipient="grid",
            )
            receipts = self.ledger.receipts_for(claim_address)
            with self.meter.measure(stage, "grid"):
                outcome = self.grid.auditor.audit_claim(
                    user.wallet.address, receipts, openings
                )
            if outcome.approved:
                user.view.vnm_outcome = "approved"
                user.view.credit = outcome.credit
                user.view.credit_raw = sum(
                    decode_raw(openings[t].value, params) for t in range(T)
                )
            else:
                user.view.vnm_outcome = (
                    RECEIPT_INVALID if outcome.code == "receipt" else VNM_REJECTED
                )
                user.view.credit = Fraction(0)
        self.bus.deliver()


def run_full(config: ProtocolConfig) -> ProtocolRun:
    """Execute the whole protocol; deterministic for a fixed config/seed."""
    return Runner(config).run()
