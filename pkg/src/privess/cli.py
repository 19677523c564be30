"""Command-line entry points.

Subcommands:
  schedule  solve the storage schedule and cost sharing from data files
            (no cryptography involved)
  run       execute a full multi-party scenario; emits report, transcript
            and ledger log
  replay    re-verify every proof and binding in an emitted transcript
  bench     user-count scaling sweep and kernel backend comparison
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench as bench_mod
from . import iofiles, replay
from .groups import GroupSetupError
from .plaintext import run_plaintext
from .protocol import run_full
from .scheduler import SCHEMES, SchedulerError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_ABORTED = 3
EXIT_VERIFY_FAILED = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="privess",
        description="Privacy-preserving shared energy-storage scheduling and settlement",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sched = sub.add_parser("schedule", help="plaintext schedule and cost sharing")
    p_sched.add_argument("--demands", required=True, help="CSV, one row per timeslot, one column per user")
    p_sched.add_argument("--prices", required=True, help="CSV, one row per timeslot, single column")
    p_sched.add_argument("--storage", required=True, help="JSON storage parameters")
    p_sched.add_argument("--scheme", choices=SCHEMES, default="proportional")
    p_sched.add_argument("--scale", type=int, default=10_000, help="fixed-point scale")
    p_sched.add_argument("--out", help="output directory (or $PRIVESS_OUT_DIR)")

    p_run = sub.add_parser("run", help="execute a protocol scenario")
    p_run.add_argument("--scenario", required=True, help="scenario JSON file")
    p_run.add_argument("--seed", help="override the scenario seed")
    p_run.add_argument("--scheme", choices=SCHEMES, help="override the cost-sharing scheme")
    p_run.add_argument("--group", help="override the group profile (tiny|test64|prod)")
    p_run.add_argument("--epsilon", type=int, help="override the payment tolerance (raw units)")
    p_run.add_argument("--out", help="output directory (or $PRIVESS_OUT_DIR)")

    p_replay = sub.add_parser("replay", help="re-verify an emitted transcript")
    p_replay.add_argument("--transcript", required=True)
    p_replay.add_argument("--ledger", help="ledger log emitted alongside the transcript")

    p_bench = sub.add_parser("bench", help="scaling sweep and kernel comparison")
    p_bench.add_argument("--users", default="5,10,15,20,25", help="comma-separated user counts")
    p_bench.add_argument("--slots", type=int, default=144, help="timeslots per day")
    p_bench.add_argument("--reps", type=int, default=1, help="repetitions to average")
    p_bench.add_argument("--group", default="prod")
    p_bench.add_argument("--seed", default="bench")
    p_bench.add_argument(
        "--full-verify",
        action="store_true",
        help="re-run identical verifications per party instead of attributing shared work",
    )
    p_bench.add_argument("--skip-kernels", action="store_true", help="skip the backend microbench")
    p_bench.add_argument("--out", help="output directory (or $PRIVESS_OUT_DIR)")
    return parser


def cmd_schedule(args) -> int:
    try:
        demands = iofiles.read_demands(args.demands)
        prices = iofiles.read_prices(args.prices)
        storage = iofiles.read_storage(args.storage, prices.horizon)
        plain = run_plaintext(demands, prices, storage, args.scheme, args.scale)
    except (iofiles.InputError, SchedulerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = iofiles.schedule_report(plain, args.scheme)
    out = iofiles.output_dir(args.out)
    iofiles.write_json(out / "schedule_report.json", report)
    print(json.dumps(report["costs"], indent=2))
    print(f"objective: {report['schedule']['objective']} $")
    print(f"report: {out / 'schedule_report.json'}")
    return EXIT_OK


def cmd_run(args) -> int:
    overrides = {
        "seed": args.seed,
        "scheme": args.scheme,
        "group": args.group,
        "epsilon": args.epsilon,
    }
    try:
        config = iofiles.load_scenario(args.scenario, overrides)
    except (iofiles.InputError, GroupSetupError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    run = run_full(config)
    out = iofiles.output_dir(args.out)
    (out / "transcript.jsonl").write_text(run.transcript)
    (out / "ledger.jsonl").write_text(run.ledger_log)
    iofiles.write_json(out / "report.json", iofiles.run_report(run, config))
    if run.settled:
        print(f"settled; outputs in {out}")
        return EXIT_OK
    print(
        f"aborted: {run.abort.kind} at {run.abort.stage}/{run.abort.step}; outputs in {out}",
        file=sys.stderr,
    )
    return EXIT_ABORTED


def cmd_replay(args) -> int:
    transcript = Path(args.transcript).read_text().splitlines()
    ledger_lines = None
    if args.ledger:
        ledger_lines = Path(args.ledger).read_text().splitlines()
    report = replay.verify_transcript(transcript, ledger_lines)
    print(report.summary())
    return EXIT_OK if report.ok else EXIT_VERIFY_FAILED


def cmd_bench(args) -> int:
    users = [int(x) for x in args.users.split(",") if x.strip()]
    rows = bench_mod.run_sweep(
        users,
        args.slots,
        profile=args.group,
        reps=args.reps,
        seed=args.seed.encode(),
        share_verification_work=not args.full_verify,
    )
    print(f"{'N':>4} {'stage1 s/user':>14} {'stage1 B/user':>14} {'stage2 B/user':>14} {'wall s':>8}")
    for row in rows:
        print(
            f"{row.n_users:>4}"
            f" {row.stage_user_seconds.get('stage1', 0.0):>14.3f}"
            f" {row.stage_user_bytes.get('stage1', 0.0):>14.0f}"
            f" {row.stage_user_bytes.get('stage2', 0.0):>14.0f}"
            f" {row.wall_seconds:>8.1f}"
        )
    fits = bench_mod.sweep_fits(rows)
    for metric, (slope, intercept, r2) in fits.items():
        print(f"stage1 {metric}: slope={slope:.6g} intercept={intercept:.6g} R^2={r2:.4f}")
    blob = {
        "rows": [
            {
                "n_users": r.n_users,
                "settled": r.settled,
                "stage_user_seconds": r.stage_user_seconds,
                "stage_total_bytes": r.stage_total_bytes,
                "stage_user_bytes": r.stage_user_bytes,
                "wall_seconds": r.wall_seconds,
            }
            for r in rows
        ],
        "fits": {k: {"slope": v[0], "intercept": v[1], "r2": v[2]} for k, v in fits.items()},
    }
    if not args.skip_kernels:
        kernels = bench_mod.kernel_compare(args.group)
        blob["kernels"] = kernels
        for row in kernels:
            print(
                f"kernel {row['backend']:>7}: powmod {row['powmod_us']:.1f} us"
                f" ({row['powmod_per_s']:.0f}/s), commit {row['commit_us']:.1f} us"
                f" ({row['commit_per_s']:.0f}/s)"
            )
    out = iofiles.output_dir(args.out)
    iofiles.write_json(out / "bench.json", blob)
    print(f"report: {out / 'bench.json'}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "schedule": cmd_schedule,
        "run": cmd_run,
        "replay": cmd_replay,
        "bench": cmd_bench,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
