import json
from fractions import Fraction as F

import pytest

from privess import groups, protocol as P, scheduler
from privess.protocol import AdversaryScript, Directive, ProtocolConfig, run_full
from privess.scheduler import DemandProfile, PricePlan, StorageParams


def small_config(test64, scheme="proportional", seed=b"proto", adversary=(), **kw):
    demands = (
        DemandProfile((F(1, 2), F(3, 2))),
        DemandProfile((F(0), F(1))),
        DemandProfile((F(1, 4), F(3, 4))),
    )
    prices = PricePlan((F(1, 10), F(1, 2)))
    storage = StorageParams((F(5), F(5)), F(1, 100), F(1), F(1), F(5), F(5))
    return ProtocolConfig(
        group=test64,
        demands=demands,
        prices=prices,
        storage=storage,
        scheme=scheme,
        seed=seed,
        adversary=AdversaryScript(tuple(adversary)),
        **kw,
    )


def tiny_config(tiny, seed=b"tiny-run"):
    demands = (
        DemandProfile((F(1), F(0))),
        DemandProfile((F(0), F(1))),
        DemandProfile((F(1), F(1))),
    )
    prices = PricePlan((F(1), F(2)))
    storage = StorageParams((F(3), F(3)), F(0), F(1), F(1), F(3), F(3))
    return ProtocolConfig(
        group=tiny,
        demands=demands,
        prices=prices,
        storage=storage,
        scheme="proportional",
        seed=seed,
        nn_bit_width=3,
    )


class TestHonestRuns:
    def test_settles_and_matches_plaintext_pipeline(self, test64):
        for scheme in scheduler.SCHEMES:
            run = run_full(small_config(test64, scheme=scheme))
            assert run.settled, run.abort
            plain = run.plain
            for i, view in enumerate(run.views):
                assert view.payment_raw == plain.payments_raw[i]
                assert view.credit == plain.credits[i]
                assert view.vnm_outcome == "approved"

    def test_real_unit_accuracy_against_rational_oracle(self, test64):
        cfg = small_config(test64, scheme="egalitarian")
        run = run_full(cfg)
        assert run.settled
        bd = run.plain.breakdown
        eps = F(cfg.n_users + cfg.horizon, cfg.scale)
        parts = scheduler.disaggregate(run.plain.solution, cfg.demands)
        for i, view in enumerate(run.views):
            assert abs(view.payment - bd.payments[i]) < eps
            exact_credit = sum(
                xm * p for xm, p in zip(parts[i][0], cfg.prices.prices)
            )
            assert abs(view.credit - exact_credit) < eps

    def test_tiny_group_run_settles(self, tiny):
        run = run_full(tiny_config(tiny))
        assert run.settled, run.abort
        for i, view in enumerate(run.views):
            assert view.payment_raw == run.plain.payments_raw[i]
            assert view.vnm_outcome == "approved"

    def test_aggregate_demand_is_public_and_correct(self, test64):
        cfg = small_config(test64)
        run = run_full(cfg)
        expected = scheduler.total_demand_of(cfg.demands)
        for view in run.views:
            assert view.aggregate_demand == expected

    def test_ledger_conservation_and_replayable_log(self, test64):
        from privess import ledger as L

        run = run_full(small_config(test64))
        rebuilt = L.replay_log(run.ledger_log.splitlines(), test64, 32)
        assert any('"type":"execute"' in l for l in run.ledger_log.splitlines())

    def test_stage2_bytes_much_smaller_than_stage1(self, test64):
        # Stage-1 traffic grows with the horizon (per-slot proofs); stage-2
        # traffic does not, so on a realistic horizon stage 1 dominates.
        demands = tuple(
            DemandProfile(tuple(F(1, 2) for _ in range(6))) for _ in range(3)
        )
        prices = PricePlan(tuple(F(k + 1, 10) for k in range(6)))
        storage = StorageParams((F(5),) * 6, F(1, 100), F(1), F(1), F(5), F(5))
        cfg = ProtocolConfig(
            group=test64, demands=demands, prices=prices, storage=storage,
            seed=b"traffic",
        )
        run = run_full(cfg)
        assert run.settled
        assert run.traffic["stage2"][1] < run.traffic["stage1"][1] / 3


class TestDeterminism:
    def test_identical_seed_identical_transcripts(self, test64):
        r1 = run_full(small_config(test64, seed=b"fixed"))
        r2 = run_full(small_config(test64, seed=b"fixed"))
        assert r1.transcript == r2.transcript
        assert r1.ledger_log == r2.ledger_log

    def test_different_seed_differs(self, test64):
        r1 = run_full(small_config(test64, seed=b"fixed"))
        r2 = run_full(small_config(test64, seed=b"other"))
        assert r1.transcript != r2.transcript


ABORT_CASES = [
    (
        Directive(1, "stage1", "commit-demands", "negative-demand", {"slot": 0, "value": 2}),
        ("stage1", "commit-demands", P.NN_PROOF_FAILED),
    ),
    (
        Directive(1, "stage1", "share-demands", "input-shift", {"slot": 1, "delta": 1}),
        ("stage1", "zkpcm", P.ZKPCM_FAILED),
    ),
    (
        Directive(2, "stage1", "share-demands", "input-equivocate",
                  {"slot": 0, "delta": 3, "victims": [0]}),
        ("stage1", "zkpcm", P.MAC_FAILED),
    ),
    (
        Directive(1, "stage1", "coin-toss", "coin-cheat", {"delta": 2}),
        ("stage1", "coin-toss", P.COIN_TOSS_MISMATCH),
    ),
    (
        Directive(0, "stage1", "aggregate", "open-tamper", {"slot": 0, "delta": 1}),
        ("stage1", "aggregate", P.MAC_FAILED),
    ),
    (
        Directive(2, "stage2", "payment", "stale-weights", {"delta": 500}),
        ("stage2", "total-check", P.COST_MISMATCH),
    ),
    (
        Directive(1, "stage2", "payment", "understate-commit", {"delta": 1}),
        ("stage2", "sum-proof", P.SUM_PROOF_FAILED),
    ),
    (
        Directive(0, "stage2", "balance", "overdraw", {"balance": "1/100"}),
        ("stage2", "execute", P.BALANCE_PROOF_FAILED),
    ),
]


class TestAbortCoverage:
    @pytest.mark.parametrize("directive,expected", ABORT_CASES, ids=[d.kind for d, _ in ABORT_CASES])
    def test_scripted_adversary_yields_exact_abort(self, test64, directive, expected):
        run = run_full(small_config(test64, scheme="egalitarian", adversary=[directive]))
        assert run.outcome == "aborted"
        assert (run.abort.stage, run.abort.step, run.abort.kind) == expected

    def test_inflated_claim_rejected_per_user(self, test64):
        d = Directive(1, "stage3", "claims", "inflate-claim", {"slot": 1, "delta": 5})
        run = run_full(small_config(test64, adversary=[d]))
        assert run.settled  # stage-3 rejections do not abort the run
        assert run.views[1].vnm_outcome == P.VNM_REJECTED
        assert run.views[1].credit == 0
        assert run.views[0].vnm_outcome == "approved"
        assert run.views[2].vnm_outcome == "approved"

    def test_stolen_receipt_rejected_per_user(self, test64):
        d = Directive(2, "stage3", "claims", "steal-receipt", {"victim": 0})
        run = run_full(small_config(test64, adversary=[d]))
        assert run.settled
        assert run.views[2].vnm_outcome == P.RECEIPT_INVALID
        assert run.views[0].vnm_outcome == "approved"

    def test_ledger_rejection_leaves_no_state_change(self, test64):
        d = Directive(0, "stage2", "balance", "overdraw", {"balance": "1/100"})
        run = run_full(small_config(test64, adversary=[d]))
        assert run.abort.kind == P.BALANCE_PROOF_FAILED
        entries = [json.loads(l) for l in run.ledger_log.splitlines()]
        assert not any(e["type"] == "execute" for e in entries)
        # Balance commitments on the ledger equal their post-top-up values.
        last_by_account = {}
        for e in entries:
            if e["type"] == "top_up":
                last_by_account[e["address"]] = e["commitment"]

    def test_no_messages_after_abort(self, test64):
        d = Directive(1, "stage1", "share-demands", "input-shift", {"slot": 0, "delta": 1})
        run = run_full(small_config(test64, adversary=[d]))
        lines = run.transcript.splitlines()
        abort_idx = next(
            i for i, l in enumerate(lines) if json.loads(l)["mtype"] == "abort"
        )
        assert abort_idx == len(lines) - 1

    def test_every_abort_kind_is_covered(self):
        covered = {expected[2] for _, expected in ABORT_CASES}
        covered |= {P.VNM_REJECTED, P.RECEIPT_INVALID}
        assert covered == set(P.ABORT_KINDS)


class TestPrivacy:
    def test_adversary_view_never_contains_raw_demands(self):
        # Run on the production group; scan every message visible to the
        # other users for user0's raw demand values, both as integers in
        # JSON payloads and as fixed-width scalar byte patterns inside hex
        # blobs.
        prod = groups.get_profile("prod")
        demands = (
            DemandProfile((F(12345, 10000), F(17831, 10000))),
            DemandProfile((F(9120, 10000), F(401, 10000))),
            DemandProfile((F(15551, 10000), F(777, 10000))),
        )
        prices = PricePlan((F(1, 10), F(1, 2)))
        storage = StorageParams((F(5), F(5)), F(1, 100), F(1), F(1), F(5), F(5))
        cfg = ProtocolConfig(
            group=prod, demands=demands, prices=prices, storage=storage,
            scheme="proportional", seed=b"privacy",
        )
        run = run_full(cfg)
        assert run.settled

        secret_raws = {12345, 17831}
        secret_patterns = {prod.scalar_to_bytes(v) for v in secret_raws}

        def ints_of(obj):
            if isinstance(obj, int) and not isinstance(obj, bool):
                yield obj
            elif isinstance(obj, dict):
                for v in obj.values():
                    yield from ints_of(v)
            elif isinstance(obj, (list, tuple)):
                for v in obj:
                    yield from ints_of(v)

        def hex_blobs(obj):
            if isinstance(obj, str) and len(obj) >= 8 and len(obj) % 2 == 0:
                try:
                    yield bytes.fromhex(obj)
                except ValueError:
                    return
            elif isinstance(obj, dict):
                for v in obj.values():
                    yield from hex_blobs(v)
            elif isinstance(obj, (list, tuple)):
                for v in obj:
                    yield from hex_blobs(v)

        for line in run.transcript.splitlines():
            env = json.loads(line)
            visible_to_others = env["recipient"] is None or env["recipient"] != "grid"
            if env["sender"] == "user0" and env["recipient"] == "grid":
                continue  # the grid legitimately learns user0's discharge
            if not visible_to_others:
                continue
            for value in ints_of(env["payload"]):
                assert value not in secret_raws, f"raw demand leaked in {env['mtype']}"
            for blob in hex_blobs(env["payload"]):
                for pattern in secret_patterns:
                    assert pattern not in blob, f"demand bytes leaked in {env['mtype']}"


class TestConfigValidation:
    def test_requires_three_users(self, test64):
        with pytest.raises(ValueError):
            ProtocolConfig(
                group=test64,
                demands=(DemandProfile((F(1),)), DemandProfile((F(1),))),
                prices=PricePlan((F(1),)),
                storage=StorageParams((F(1),), F(0), F(1), F(1), F(1), F(1)),
            )

    def test_horizon_mismatch_rejected(self, test64):
        with pytest.raises(ValueError):
            ProtocolConfig(
                group=test64,
                demands=(DemandProfile((F(1),)),) * 3,
                prices=PricePlan((F(1), F(2))),
                storage=StorageParams((F(1), F(1)), F(0), F(1), F(1), F(1), F(1)),
            )

    def test_epsilon_default(self, test64):
        cfg = small_config(test64)
        assert cfg.epsilon() == (3 + 2) * test64.fixed_point_scale
