"""Transcript replay: re-verify every proof and binding in a recorded run.

Walks the bus log of a protocol run, reconstructs all public state
(announced commitments, joint coins, opened values) and re-checks:

* open/coin/sigma commit-then-reveal hash bindings,
* every demand range proof,
* every distributed commitment-consistency equation,
* the joint payment sum proof,
* the ledger log (hash chain, balance proofs, signatures, receipts).
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from . import ledger as ledger_mod
from . import zkp
from .bus import Envelope
from .commitments import Commitment
from .groups import GroupParams
from .mpc import reveal_digest


@dataclass
class ReplayReport:
    ok: bool
    checks: dict[str, int] = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)

    def summary(self) -> str:
        lines = [f"replay {'OK' if self.ok else 'FAILED'}"]
        for name, count in sorted(self.checks.items()):
            lines.append(f"  {name}: {count}")
        for err in self.errors:
            lines.append(f"  error: {err}")
        return "\n".join(lines)


def verify_transcript(
    transcript_lines: list[str], ledger_lines: list[str] | None = None
) -> ReplayReport:
    envelopes = [Envelope.from_json(line) for line in transcript_lines if line.strip()]
    checks: dict[str, int] = defaultdict(int)
    errors: list[str] = []

    header = _find(envelopes, "public-params")
    if header is None:
        return ReplayReport(False, {}, ["missing public-params announcement"])
    params = GroupParams.from_config(header.payload["group"])
    bit_width = int(header.payload["nn_bit_width"])
    horizon = len(header.payload["prices"])

    # 1. Commit-then-reveal bindings.
    commits: dict[tuple[str, str, str], str] = {}
    for env in envelopes:
        if env.mtype in ("open-commit", "coin-commit", "sigma-commit"):
            commits[(env.mtype, env.payload["label"], env.sender)] = env.payload["digest"]
    for env in envelopes:
        if env.mtype not in ("open-reveal", "coin-reveal", "sigma-reveal"):
            continue
        kind = env.mtype.replace("reveal", "commit")
        label = env.payload["label"]
        expected = commits.get((kind, label, env.sender))
        got = reveal_digest(
            env.sender, label, env.payload["values"], bytes.fromhex(env.payload["nonce"])
        )
        if expected is None:
            errors.append(f"{env.mtype} {label} from {env.sender} without a commitment")
        elif expected != got:
            errors.append(f"binding mismatch for {label} from {env.sender}")
        else:
            checks["bindings"] += 1

    # 2. Demand commitments and range proofs.
    demand_commitments: dict[str, list[Commitment]] = {}
    for env in envelopes:
        if env.mtype != "demand-commit":
            continue
        cms = [Commitment(pt) for pt in env.payload["commitments"]]
        demand_commitments[env.sender] = cms
        for t, blob in enumerate(env.payload["nn_proofs"]):
            proof = zkp.ProofNN.from_bytes(bytes.fromhex(blob), params)
            if zkp.verify_nn(cms[t], bit_width, proof, params):
                checks["nn_proofs"] += 1
            else:
                errors.append(f"demand range proof failed: {env.sender} slot {t}")
    users = sorted(demand_commitments, key=lambda s: int(s.removeprefix("user")))

    # 3. Distributed commitment-consistency equations.
    announces: dict[str, list[Commitment]] = {}
    for env in envelopes:
        if env.mtype == "cm-announce" and "announces" in env.payload:
            announces[env.sender] = [Commitment(pt) for pt in env.payload["announces"]]
    betas = _reveal_sums(envelopes, "coin-reveal", "stage1/beta", params)
    z_values = _reveal_sums(envelopes, "open-reveal", "stage1/z", params)
    if users and betas and z_values:
        pos = 0
        for owner in users:
            for t in range(horizon):
                if pos + 1 >= len(z_values):
                    errors.append("stage1/z opening shorter than expected")
                    break
                ok = zkp.check_cm_equation(
                    demand_commitments[owner][t],
                    announces[owner][t],
                    betas[t],
                    z_values[pos],
                    z_values[pos + 1],
                    params,
                )
                pos += 2
                if ok:
                    checks["cm_equations"] += 1
                else:
                    errors.append(f"commitment-consistency failed: {owner} slot {t}")

    # 4. Payment sum proof.
    payment_commitments = {
        env.sender: Commitment(env.payload["commitment"])
        for env in envelopes
        if env.mtype == "payment-commit"
    }
    sum_announces = {
        env.sender: Commitment(env.payload["announce"])
        for env in envelopes
        if env.mtype == "sum-announce"
    }
    totals = _reveal_sums(envelopes, "open-reveal", "stage2/total", params)
    z_sum = _reveal_sums(envelopes, "open-reveal", "stage2/sum/z", params)
    if payment_commitments and sum_announces and totals and z_sum:
        cms = [payment_commitments[u] for u in users]
        announce = Commitment(
            params.ops().product(sum_announces[u].point for u in users)
        )
        proof = zkp.ProofSum(announce, z_sum[0], None)
        if zkp.verify_sum(cms, totals[0], proof, params):
            checks["sum_proofs"] += 1
        else:
            errors.append("payment sum proof failed")

    # 5. Ledger log.
    if ledger_lines:
        try:
            ledger_mod.replay_log(ledger_lines, params, bit_width)
            checks["ledger_entries"] = len([l for l in ledger_lines if l.strip()])
        except ledger_mod.LedgerError as exc:
            errors.append(f"ledger replay failed: {exc}")

    return ReplayReport(not errors, dict(checks), errors)


def _find(envelopes: list[Envelope], mtype: str) -> Envelope | None:
    for env in envelopes:
        if env.mtype == mtype:
            return env
    return None


def _reveal_sums(
    envelopes: list[Envelope], mtype: str, label: str, params: GroupParams
) -> list[int]:
    """Sum revealed share vectors (one per sender) for a given label."""
    vectors = [
        env.payload["values"]
        for env in envelopes
        if env.mtype == mtype and env.payload.get("label") == label
    ]
    if not vectors:
        return []
    q = params.order_q
    return [sum(col) % q for col in zip(*vectors)]
