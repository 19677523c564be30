import pytest

from privess import mpc, zkp
from privess.bus import SyncBus
from privess.commitments import Opening, commit
from privess.mpc import AuthShare
from privess.rng import StreamRng


def make_parties(q, n=3, triples=8, masks=24, seed=b"mpc", rngs=None):
    rng = StreamRng(seed)
    pool = mpc.deal_preprocessing(n, triples, masks, q, rng.child("dealer"))
    parties = [
        mpc.SpdzParty(i, n, q, pool.view(i), rng.child(f"party{i}")) for i in range(n)
    ]
    bus = SyncBus([p.party_id for p in parties])
    bus.begin("test", "step")
    return pool, parties, bus


def fresh_shared(parties, pool, value, rng):
    """Authenticated shares of a value generated directly (dealer style)."""
    q = parties[0].q
    alpha = pool.reconstruct_alpha()
    shares = mpc._share_authenticated(value, alpha, len(parties), q, rng)
    return shares


class TestDealer:
    def test_triples_multiply(self, tiny):
        q = tiny.order_q
        pool, _, _ = make_parties(q)
        for k in range(8):
            a, b, c = pool.reconstruct_triple(k)
            assert c == a * b % q

    def test_mac_key_definition(self, tiny):
        q = tiny.order_q
        pool, _, _ = make_parties(q)
        alpha = pool.reconstruct_alpha()
        for k in range(8):
            views = pool.views
            a_val = sum(v.triples[k].a.value_share for v in views) % q
            a_mac = sum(v.triples[k].a.mac_share for v in views) % q
            assert a_mac == alpha * a_val % q

    def test_masks_known_to_owner_only(self, tiny):
        q = tiny.order_q
        pool, _, _ = make_parties(q)
        for owner in range(3):
            for i, view in enumerate(pool.views):
                mask = view.masks[owner][0]
                if i == owner:
                    assert mask.plain_for_owner == pool.reconstruct_mask(owner, 0)
                else:
                    assert mask.plain_for_owner is None

    def test_different_seeds_disjoint_shares(self, test64):
        q = test64.order_q
        pool1, _, _ = make_parties(q, seed=b"a")
        pool2, _, _ = make_parties(q, seed=b"b")
        shares1 = {v.triples[k].a.value_share for v in pool1.views for k in range(8)}
        shares2 = {v.triples[k].a.value_share for v in pool2.views for k in range(8)}
        assert not (shares1 & shares2)

    def test_requires_three_parties(self, tiny):
        with pytest.raises(mpc.MpcError):
            mpc.deal_preprocessing(2, 1, 1, tiny.order_q, StreamRng(b"x"))


class TestLocalOps:
    def test_add_reconstructs_with_valid_mac(self, tiny):
        q = tiny.order_q
        pool, parties, bus = make_parties(q)
        rng = StreamRng(b"vals")
        xs = fresh_shared(parties, pool, 3, rng)
        ys = fresh_shared(parties, pool, 4, rng)
        sums = [parties[i].add(xs[i], ys[i]) for i in range(3)]
        assert mpc.reconstruct(q, sums) == 7
        alpha = pool.reconstruct_alpha()
        assert mpc.reconstruct_mac(q, sums) == alpha * 7 % q

    def test_add_const_on_zero(self, tiny):
        q = tiny.order_q
        pool, parties, bus = make_parties(q)
        zeros = [p.zero() for p in parties]
        shifted = [parties[i].add_const(5, zeros[i]) for i in range(3)]
        assert mpc.reconstruct(q, shifted) == 5
        alpha = pool.reconstruct_alpha()
        assert mpc.reconstruct_mac(q, shifted) == 5 * alpha % q

    def test_scale_by_zero(self, tiny):
        q = tiny.order_q
        pool, parties, bus = make_parties(q)
        xs = fresh_shared(parties, pool, 9, StreamRng(b"v"))
        scaled = [parties[i].scale_const(0, xs[i]) for i in range(3)]
        assert mpc.reconstruct(q, scaled) == 0
        assert mpc.reconstruct_mac(q, scaled) == 0


class TestInput:
    def test_masked_input_example(self, tiny):
        # secret 7 with mask 3: broadcast z = 4, reconstruction 7.
        q = tiny.order_q
        pool, parties, bus = make_parties(q, seed=b"fixed-mask")
        plain_mask = pool.reconstruct_mask(0, 0)
        shared = mpc.input_round(parties, bus, {0: [7]}, "x")
        z_env = next(e for e in bus.log if e.mtype == "input-z")
        assert z_env.payload["z"][0] == (7 - plain_mask) % q
        shares = [shared[0][i][0] for i in range(3)]
        assert mpc.reconstruct(q, shares) == 7
        alpha = pool.reconstruct_alpha()
        assert mpc.reconstruct_mac(q, shares) == alpha * 7 % q

    def test_zero_input(self, tiny):
        q = tiny.order_q
        _, parties, bus = make_parties(q)
        shared = mpc.input_round(parties, bus, {1: [0]}, "z")
        assert mpc.reconstruct(q, [shared[1][i][0] for i in range(3)]) == 0

    def test_mask_exhaustion_raises(self, tiny):
        q = tiny.order_q
        _, parties, bus = make_parties(q, masks=1)
        mpc.input_round(parties, bus, {0: [1]}, "a")
        with pytest.raises(mpc.PoolExhausted):
            mpc.input_round(parties, bus, {0: [2]}, "b")

    def test_equivocated_input_fails_mac_on_dependent_opening(self, tiny):
        q = tiny.order_q
        _, parties, bus = make_parties(q)
        shared = mpc.input_round(
            parties, bus, {0: [7]}, "x", equivocate={0: (0, 3, {1})}
        )
        shares = [[shared[0][i][0]] for i in range(3)]
        mpc.open_batch(parties, bus, shares, "open-x")
        with pytest.raises(mpc.MacCheckFailed):
            mpc.mac_check(parties, bus)

    def test_privacy_views_independent_of_secret(self, tiny):
        # The adversary (parties 1- and 2-) view of an input consists of
        # its mask shares and the broadcast z = x - r.  Over the dealer's
        # choice of r (exhausted below) the view multiset is identical for
        # every secret.
        q = tiny.order_q
        n = 3
        views_by_secret = {}
        for secret in range(q):
            views = []
            for r in range(q):
                # Fix the adversary's mask shares; the honest share absorbs r.
                adv_shares = (4, 9)
                z = (secret - r) % q
                views.append((adv_shares, z))
            views_by_secret[secret] = sorted(views)
        baseline = views_by_secret[0]
        for secret in range(1, q):
            assert views_by_secret[secret] == baseline


class TestBeaver:
    def test_examples(self, tiny):
        q = tiny.order_q
        pool, parties, bus = make_parties(q)
        rng = StreamRng(b"bv")
        xs = fresh_shared(parties, pool, 3, rng)
        ys = fresh_shared(parties, pool, 4, rng)
        prod = mpc.beaver_mul(parties, bus, [[xs[i]] for i in range(3)], [[ys[i]] for i in range(3)])
        vals = mpc.open_batch(parties, bus, [[prod[i][0]] for i in range(3)], "p")
        assert vals[0] == 12 % q
        mpc.mac_check(parties, bus)

    def test_multiply_by_zero(self, tiny):
        q = tiny.order_q
        pool, parties, bus = make_parties(q)
        rng = StreamRng(b"bz")
        xs = fresh_shared(parties, pool, 8, rng)
        ys = fresh_shared(parties, pool, 0, rng)
        prod = mpc.beaver_mul(parties, bus, [[xs[i]] for i in range(3)], [[ys[i]] for i in range(3)])
        vals = mpc.open_batch(parties, bus, [[prod[i][0]] for i in range(3)], "p")
        assert vals[0] == 0
        mpc.mac_check(parties, bus)

    def test_hundred_random_pairs_match_plaintext(self, tiny):
        q = tiny.order_q
        pool, parties, bus = make_parties(q, triples=100, masks=4)
        rng = StreamRng(b"pairs")
        expected = []
        xs_all, ys_all = [[], [], []], [[], [], []]
        for _ in range(100):
            a, b = rng.field_element(q), rng.field_element(q)
            expected.append(a * b % q)
            sa = fresh_shared(parties, pool, a, rng)
            sb = fresh_shared(parties, pool, b, rng)
            for i in range(3):
                xs_all[i].append(sa[i])
                ys_all[i].append(sb[i])
        prod = mpc.beaver_mul(parties, bus, xs_all, ys_all)
        vals = mpc.open_batch(parties, bus, prod, "prods")
        assert vals == expected
        mpc.mac_check(parties, bus)

    def test_triple_exhaustion(self, tiny):
        q = tiny.order_q
        pool, parties, bus = make_parties(q, triples=1)
        rng = StreamRng(b"ex")
        xs = fresh_shared(parties, pool, 2, rng)
        ys = fresh_shared(parties, pool, 3, rng)
        mpc.beaver_mul(parties, bus, [[xs[i]] for i in range(3)], [[ys[i]] for i in range(3)])
        with pytest.raises(mpc.PoolExhausted):
            mpc.beaver_mul(parties, bus, [[xs[i]] for i in range(3)], [[ys[i]] for i in range(3)])


class TestOpenAndMacCheck:
    def test_honest_open(self, tiny):
        q = tiny.order_q
        pool, parties, bus = make_parties(q)
        xs = fresh_shared(parties, pool, 7, StreamRng(b"o"))
        vals = mpc.open_batch(parties, bus, [[xs[i]] for i in range(3)], "x")
        assert vals[0] == 7
        mpc.mac_check(parties, bus)  # must not raise

    def test_value_only_tamper_aborts(self, tiny):
        q = tiny.order_q
        pool, parties, bus = make_parties(q)
        xs = fresh_shared(parties, pool, 7, StreamRng(b"o"))
        mpc.open_batch(
            parties, bus, [[xs[i]] for i in range(3)], "x", tamper={1: (0, 1, 0)}
        )
        with pytest.raises(mpc.MacCheckFailed):
            mpc.mac_check(parties, bus)

    def test_local_alpha_tamper_still_aborts(self, tiny):
        # Adjusting the MAC share with only the party's own key share
        # cannot satisfy the global key relation.
        q = tiny.order_q
        pool, parties, bus = make_parties(q)
        xs = fresh_shared(parties, pool, 7, StreamRng(b"o"))
        delta = 2
        dm = parties[1].alpha_share * delta % q
        mpc.open_batch(
            parties, bus, [[xs[i]] for i in range(3)], "x", tamper={1: (0, delta, dm)}
        )
        with pytest.raises(mpc.MacCheckFailed):
            mpc.mac_check(parties, bus)

    def test_exhaustive_detection_probability(self, tiny):
        # For a fixed value shift, exactly one of the q possible MAC-share
        # adjustments passes: the one equal to alpha * delta.
        q = tiny.order_q
        pool, parties, bus = make_parties(q)
        alpha = pool.reconstruct_alpha()
        delta = 3
        accepted = []
        for dm in range(q):
            xs = fresh_shared(parties, pool, 5, StreamRng(b"det" + bytes([dm])))
            mpc.open_batch(
                parties, bus, [[xs[i]] for i in range(3)], f"x{dm}",
                tamper={2: (0, delta, dm)},
            )
            try:
                mpc.mac_check(parties, bus, label=f"mc{dm}")
                accepted.append(dm)
            except mpc.MacCheckFailed:
                pass
        assert accepted == [alpha * delta % q]

    def test_binding_violation_detected(self, tiny):
        # Revealing a value that does not match the prior hash commitment
        # aborts immediately.
        q = tiny.order_q
        pool, parties, bus = make_parties(q)
        xs = fresh_shared(parties, pool, 7, StreamRng(b"o"))

        # Manually run the two rounds with a mismatched reveal.
        shares = [[xs[i]] for i in range(3)]
        import privess.mpc as m

        nonces = {p.index: p.rng.bytes(16) for p in parties}
        for p in parties:
            vals = [shares[p.index][0].value_share]
            bus.send(p.party_id, "open-commit", {
                "label": "bad", "digest": m.reveal_digest(p.party_id, "bad", vals, nonces[p.index]),
            })
        bus.deliver()
        for p in parties:
            vals = [shares[p.index][0].value_share]
            if p.index == 1:
                vals = [(vals[0] + 1) % q]  # reveal differs from commitment
            bus.send(p.party_id, "open-reveal", {
                "label": "bad", "values": vals, "nonce": nonces[p.index].hex(),
            })
        inboxes = bus.deliver()
        reveals = {}
        for envs in inboxes.values():
            for env in envs:
                if env.mtype == "open-reveal":
                    reveals[env.sender] = env
        commits = {env.sender: env for env in bus.log if env.mtype == "open-commit"}
        mismatch = False
        for p in parties:
            pid = p.party_id
            got = m.reveal_digest(
                pid, "bad", reveals[pid].payload["values"],
                bytes.fromhex(reveals[pid].payload["nonce"]),
            )
            if got != commits[pid].payload["digest"]:
                mismatch = True
        assert mismatch


class TestCoinToss:
    def test_deterministic_for_seed(self, tiny):
        q = tiny.order_q
        _, parties, bus = make_parties(q, seed=b"coin")
        beta1 = mpc.coin_toss(parties, bus, "b")
        _, parties2, bus2 = make_parties(q, seed=b"coin")
        beta2 = mpc.coin_toss(parties2, bus2, "b")
        assert beta1 == beta2

    def test_reveal_mismatch_aborts(self, tiny):
        q = tiny.order_q
        _, parties, bus = make_parties(q)
        with pytest.raises(mpc.CoinTossError):
            mpc.coin_toss(parties, bus, "b", cheat={1: 1})

    def test_uniformity_chi_squared(self, tiny):
        q = tiny.order_q
        counts = [0] * q
        _, parties, bus = make_parties(q, seed=b"chi")
        trials = 10_000
        betas = mpc.coin_toss(parties, bus, "chi", count=trials)
        for beta in betas:
            counts[beta] += 1
        expected = trials / q
        chi2 = sum((c - expected) ** 2 / expected for c in counts)
        # 0.999 quantile of chi-squared with 10 degrees of freedom.
        assert chi2 < 29.59


class TestStraightLinePrograms:
    def test_random_programs_match_plaintext_oracle(self, tiny):
        q = tiny.order_q
        rng = StreamRng(b"programs")
        n_programs = 60
        for prog_idx in range(n_programs):
            pool, parties, bus = make_parties(
                q, triples=6, masks=6, seed=b"prog%d" % prog_idx
            )
            prng = rng.child(f"p{prog_idx}")
            regs_plain = [prng.field_element(q) for _ in range(3)]
            regs_shared = [
                fresh_shared(parties, pool, v, prng.child(f"s{k}"))
                for k, v in enumerate(regs_plain)
            ]
            n_ops = 4 + prng.randbelow(5)
            mul_done = False
            for step in range(n_ops):
                op = prng.choice(["add", "scale", "addc", "mul"])
                if step == n_ops - 1 and not mul_done:
                    op = "mul"
                i, j = prng.randbelow(3), prng.randbelow(3)
                if op == "add":
                    regs_plain[i] = (regs_plain[i] + regs_plain[j]) % q
                    regs_shared[i] = [
                        parties[k].add(regs_shared[i][k], regs_shared[j][k])
                        for k in range(3)
                    ]
                elif op == "scale":
                    c = prng.field_element(q)
                    regs_plain[i] = c * regs_plain[i] % q
                    regs_shared[i] = [
                        parties[k].scale_const(c, regs_shared[i][k]) for k in range(3)
                    ]
                elif op == "addc":
                    c = prng.field_element(q)
                    regs_plain[i] = (c + regs_plain[i]) % q
                    regs_shared[i] = [
                        parties[k].add_const(c, regs_shared[i][k]) for k in range(3)
                    ]
                else:
                    mul_done = True
                    regs_plain[i] = regs_plain[i] * regs_plain[j] % q
                    out = mpc.beaver_mul(
                        parties,
                        bus,
                        [[regs_shared[i][k]] for k in range(3)],
                        [[regs_shared[j][k]] for k in range(3)],
                        label=f"m{step}",
                    )
                    regs_shared[i] = [out[k][0] for k in range(3)]
            opened = mpc.open_batch(
                parties,
                bus,
                [[regs_shared[r][k] for r in range(3)] for k in range(3)],
                "final",
            )
            mpc.mac_check(parties, bus)
            assert opened == regs_plain


class TestDistributedProofs:
    def test_distributed_cm_honest(self, tiny):
        q = tiny.order_q
        _, parties, bus = make_parties(q)
        a_val, r_val = 6, 3
        c = commit(a_val, r_val, tiny)
        shared = mpc.input_round(parties, bus, {1: [a_val, r_val]}, "w")
        verdicts = mpc.distributed_prove_cm(
            parties, bus, tiny, 1,
            [shared[1][i][0] for i in range(3)],
            [shared[1][i][1] for i in range(3)],
            c,
        )
        assert verdicts == [True, True, True]

    def test_distributed_cm_inconsistent_share_rejected_whp(self, tiny):
        # Commit to 5 but share 6: accepted only when the joint coin is 0,
        # so the acceptance rate over many runs is about 1/q.
        q = tiny.order_q
        accepts = 0
        runs = 220
        for k in range(runs):
            _, parties, bus = make_parties(q, seed=b"cheat%d" % k)
            c = commit(5, 3, tiny)
            shared = mpc.input_round(parties, bus, {1: [6, 3]}, "w")
            verdicts = mpc.distributed_prove_cm(
                parties, bus, tiny, 1,
                [shared[1][i][0] for i in range(3)],
                [shared[1][i][1] for i in range(3)],
                c,
                label=f"cheat{k}",
            )
            if all(verdicts):
                accepts += 1
        rate = accepts / runs
        assert rate <= 1 / q + 3 * (1 / q * (1 - 1 / q) / runs) ** 0.5

    def test_distributed_cm_wrong_randomness_rejected(self, tiny):
        q = tiny.order_q
        _, parties, bus = make_parties(q, seed=b"wrong-r")
        c = commit(5, 3, tiny)
        shared = mpc.input_round(parties, bus, {1: [5, 4]}, "w")  # r mismatch
        verdicts = mpc.distributed_prove_cm(
            parties, bus, tiny, 1,
            [shared[1][i][0] for i in range(3)],
            [shared[1][i][1] for i in range(3)],
            c,
        )
        assert not any(verdicts)

    def test_distributed_sum_honest_and_ledger_verifiable(self, tiny):
        q = tiny.order_q
        _, parties, bus = make_parties(q)
        openings = [(2, 5), (3, 1), (4, 9)]
        cs = [commit(v, r, tiny) for v, r in openings]
        total = sum(v for v, _ in openings) % q
        shared = mpc.input_round(parties, bus, {i: [openings[i][1]] for i in range(3)}, "r")
        rand_by_owner = [[shared[i][p][0] for p in range(3)] for i in range(3)]
        proof, verdicts = mpc.distributed_prove_sum(
            parties, bus, tiny, cs, rand_by_owner, total
        )
        assert all(verdicts)
        assert zkp.verify_sum(cs, total, proof, tiny)

    def test_distributed_sum_understated_value_rejected(self, tiny):
        q = tiny.order_q
        _, parties, bus = make_parties(q, seed=b"under")
        openings = [(2, 5), (3, 1), (4, 9)]
        # Party 0's commitment understates its value by one field unit.
        cs = [commit(1, 5, tiny)] + [commit(v, r, tiny) for v, r in openings[1:]]
        total = sum(v for v, _ in openings) % q
        shared = mpc.input_round(parties, bus, {i: [openings[i][1]] for i in range(3)}, "r")
        rand_by_owner = [[shared[i][p][0] for p in range(3)] for i in range(3)]
        proof, verdicts = mpc.distributed_prove_sum(
            parties, bus, tiny, cs, rand_by_owner, total
        )
        assert not any(verdicts)

    def test_distributed_sum_negative_member_accepts(self, tiny):
        # An egalitarian-style negative payment encodes as q - |v| and the
        # sum proof still verifies when the total matches.
        q = tiny.order_q
        _, parties, bus = make_parties(q, seed=b"neg")
        values = [5, 4, q - 2]  # -2 encoded
        rands = [1, 2, 3]
        cs = [commit(v, r, tiny) for v, r in zip(values, rands)]
        total = sum(values) % q
        shared = mpc.input_round(parties, bus, {i: [rands[i]] for i in range(3)}, "r")
        rand_by_owner = [[shared[i][p][0] for p in range(3)] for i in range(3)]
        proof, verdicts = mpc.distributed_prove_sum(
            parties, bus, tiny, cs, rand_by_owner, total
        )
        assert all(verdicts)
        assert zkp.verify_sum(cs, total, proof, tiny)
