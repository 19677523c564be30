import json
from pathlib import Path

import pytest

from privess import cli, iofiles, replay


@pytest.fixture()
def datadir(tmp_path):
    (tmp_path / "demands.csv").write_text(
        "user0_kwh,user1_kwh,user2_kwh\n0.5,0,0.25\n1.5,1,0.75\n"
    )
    (tmp_path / "prices.csv").write_text("price_usd_per_kwh\n0.1\n0.5\n")
    (tmp_path / "storage.json").write_text(
        json.dumps(
            {
                "capacity": "5",
                "service_fee": "0.01",
                "eff_charge": "1",
                "eff_discharge": "1",
                "rate_charge": "5",
                "rate_discharge": "5",
            }
        )
    )
    scenario = {
        "group": "test64",
        "scheme": "proportional",
        "seed": "cli-test",
        "demands_file": "demands.csv",
        "prices_file": "prices.csv",
        "storage_file": "storage.json",
    }
    (tmp_path / "scenario.json").write_text(json.dumps(scenario))
    return tmp_path


class TestSchedule:
    def test_toy_objective(self, datadir, capsys):
        # Same two-slot arbitrage construction as the scheduler toy case.
        (datadir / "d2.csv").write_text("u0,u1,u2\n0,0,0\n3,1,1\n")
        (datadir / "p2.csv").write_text("p\n1\n10\n")
        (datadir / "s2.json").write_text(
            json.dumps({"capacity": "10", "service_fee": "0",
                        "eff_charge": "1", "eff_discharge": "1",
                        "rate_charge": "10", "rate_discharge": "10"})
        )
        rc = cli.main([
            "schedule", "--demands", str(datadir / "d2.csv"),
            "--prices", str(datadir / "p2.csv"),
            "--storage", str(datadir / "s2.json"),
            "--out", str(datadir / "out"),
        ])
        assert rc == cli.EXIT_OK
        report = json.loads((datadir / "out" / "schedule_report.json").read_text())
        assert report["schedule"]["objective"] == "5/1"

    def test_schemes_share_cost_ess_but_not_payments(self, datadir):
        outs = {}
        for scheme in ("proportional", "egalitarian"):
            rc = cli.main([
                "schedule", "--demands", str(datadir / "demands.csv"),
                "--prices", str(datadir / "prices.csv"),
                "--storage", str(datadir / "storage.json"),
                "--scheme", scheme,
                "--out", str(datadir / f"out-{scheme}"),
            ])
            assert rc == cli.EXIT_OK
            outs[scheme] = json.loads(
                (datadir / f"out-{scheme}" / "schedule_report.json").read_text()
            )
        assert (
            outs["proportional"]["costs"]["cost_ess"]
            == outs["egalitarian"]["costs"]["cost_ess"]
        )
        assert (
            outs["proportional"]["costs"]["payments"]
            != outs["egalitarian"]["costs"]["payments"]
        )

    def test_empty_demand_file_is_usage_error(self, datadir, capsys):
        (datadir / "empty.csv").write_text("")
        rc = cli.main([
            "schedule", "--demands", str(datadir / "empty.csv"),
            "--prices", str(datadir / "prices.csv"),
            "--storage", str(datadir / "storage.json"),
        ])
        assert rc == cli.EXIT_USAGE

    def test_parse_error_reports_line(self, datadir, capsys):
        (datadir / "bad.csv").write_text("u0,u1,u2\n0.5,x,0.25\n")
        rc = cli.main([
            "schedule", "--demands", str(datadir / "bad.csv"),
            "--prices", str(datadir / "prices.csv"),
            "--storage", str(datadir / "storage.json"),
        ])
        assert rc == cli.EXIT_USAGE
        assert ":2" in capsys.readouterr().err


class TestRun:
    def test_honest_scenario_settles(self, datadir, capsys):
        out = datadir / "run-out"
        rc = cli.main(["run", "--scenario", str(datadir / "scenario.json"), "--out", str(out)])
        assert rc == cli.EXIT_OK
        report = json.loads((out / "report.json").read_text())
        assert report["outcome"] == "settled"
        assert (out / "transcript.jsonl").exists()
        assert (out / "ledger.jsonl").exists()

    def test_adversarial_scenario_exits_nonzero_with_reason(self, datadir, capsys):
        scenario = json.loads((datadir / "scenario.json").read_text())
        scenario["adversary"] = [
            {"party": 1, "stage": "stage1", "step": "share-demands",
             "kind": "input-shift", "params": {"slot": 0, "delta": 1}}
        ]
        (datadir / "bad_scenario.json").write_text(json.dumps(scenario))
        rc = cli.main([
            "run", "--scenario", str(datadir / "bad_scenario.json"),
            "--out", str(datadir / "bad-out"),
        ])
        assert rc == cli.EXIT_ABORTED
        assert "zkpCm-failed" in capsys.readouterr().err

    def test_schedule_and_run_agree_on_costs(self, datadir):
        out = datadir / "agree-run"
        assert cli.main(["run", "--scenario", str(datadir / "scenario.json"), "--out", str(out)]) == cli.EXIT_OK
        run_report = json.loads((out / "report.json").read_text())
        out2 = datadir / "agree-sched"
        assert cli.main([
            "schedule", "--demands", str(datadir / "demands.csv"),
            "--prices", str(datadir / "prices.csv"),
            "--storage", str(datadir / "storage.json"),
            "--out", str(out2),
        ]) == cli.EXIT_OK
        sched_report = json.loads((out2 / "schedule_report.json").read_text())
        assert run_report["costs"]["cost_ess"] == sched_report["costs"]["cost_ess"]
        # Owner payments match the plaintext payments within the tolerance.
        from fractions import Fraction as F

        eps = F(3 + 2, 10_000)
        for i in range(3):
            got = F(run_report["owner_views"][f"user{i}"]["payment"])
            want = F(sched_report["costs"]["payments"][i])
            assert abs(got - want) < eps

    def test_env_var_output_dir(self, datadir, monkeypatch):
        target = datadir / "env-out"
        monkeypatch.setenv("PRIVESS_OUT_DIR", str(target))
        rc = cli.main(["run", "--scenario", str(datadir / "scenario.json")])
        assert rc == cli.EXIT_OK
        assert (target / "report.json").exists()


class TestReplay:
    def test_replay_of_honest_run_verifies(self, datadir, capsys):
        out = datadir / "replay-out"
        assert cli.main(["run", "--scenario", str(datadir / "scenario.json"), "--out", str(out)]) == cli.EXIT_OK
        rc = cli.main([
            "replay", "--transcript", str(out / "transcript.jsonl"),
            "--ledger", str(out / "ledger.jsonl"),
        ])
        assert rc == cli.EXIT_OK
        text = capsys.readouterr().out
        assert "replay OK" in text
        assert "nn_proofs" in text

    def test_replay_detects_tampered_transcript(self, datadir):
        out = datadir / "tamper-out"
        assert cli.main(["run", "--scenario", str(datadir / "scenario.json"), "--out", str(out)]) == cli.EXIT_OK
        lines = (out / "transcript.jsonl").read_text().splitlines()
        for i, line in enumerate(lines):
            env = json.loads(line)
            if env["mtype"] == "demand-commit":
                env["payload"]["commitments"][0] += 1
                lines[i] = json.dumps(env, sort_keys=True, separators=(",", ":"))
                break
        (out / "transcript.jsonl").write_text("\n".join(lines) + "\n")
        rc = cli.main(["replay", "--transcript", str(out / "transcript.jsonl")])
        assert rc == cli.EXIT_VERIFY_FAILED


class TestBenchCommand:
    def test_small_sweep_smoke(self, datadir, capsys):
        rc = cli.main([
            "bench", "--users", "3,4", "--slots", "2", "--reps", "1",
            "--group", "test64", "--skip-kernels", "--out", str(datadir / "bench"),
        ])
        assert rc == cli.EXIT_OK
        blob = json.loads((datadir / "bench" / "bench.json").read_text())
        assert [r["n_users"] for r in blob["rows"]] == [3, 4]
        assert all(r["settled"] for r in blob["rows"])
