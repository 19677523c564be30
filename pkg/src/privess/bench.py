"""Scaling benchmarks: per-user stage costs versus user count, and the
compiled-kernel / pure-Python comparison on the hot operations."""

from __future__ import annotations

import time
from dataclasses import dataclass
from fractions import Fraction

from . import kernel
from .groups import GroupParams, get_profile
from .protocol import ProtocolConfig, run_full
from .rng import StreamRng
from .scheduler import DemandProfile, PricePlan, StorageParams

# Three-tier time-of-use tariff stretched over the horizon.
_TOU_TIERS = (Fraction(8, 100), Fraction(18, 100), Fraction(45, 100))


def tou_prices(horizon: int) -> PricePlan:
    prices = []
    for t in range(horizon):
        frac = Fraction(t, horizon)
        if frac < Fraction(1, 3):
            prices.append(_TOU_TIERS[0])
        elif frac < Fraction(2, 3):
            prices.append(_TOU_TIERS[2])
        else:
            prices.append(_TOU_TIERS[1])
    return PricePlan(tuple(prices))


def synth_config(
    n_users: int,
    horizon: int,
    group: GroupParams,
    seed: bytes,
    share_verification_work: bool = True,
) -> ProtocolConfig:
    """Synthetic scenario sized so payments stay inside the proof range."""
    rng = StreamRng(seed)
    scale = group.fixed_point_scale
    demands = []
    for i in range(n_users):
        stream = rng.child(f"demand{i}")
        demands.append(
            DemandProfile(
                tuple(
                    Fraction(stream.randbelow(scale // 5 + 1), scale)
                    for _ in range(horizon)
                )
            )
        )
    prices = tou_prices(horizon)
    storage = StorageParams(
        capacity=tuple(Fraction(n_users, 10) for _ in range(horizon)),
        service_fee=Fraction(2, 100),
        eff_charge=Fraction(19, 20),
        eff_discharge=Fraction(21, 20),
        rate_charge=Fraction(n_users, 20),
        rate_discharge=Fraction(n_users, 20),
    )
    return ProtocolConfig(
        group=group,
        demands=tuple(demands),
        prices=prices,
        storage=storage,
        scheme="proportional",
        seed=seed,
        share_verification_work=share_verification_work,
    )


@dataclass
class BenchRow:
    n_users: int
    settled: bool
    stage_user_seconds: dict[str, float]  # average per user
    stage_total_bytes: dict[str, int]
    stage_user_bytes: dict[str, float]
    wall_seconds: float


def run_sweep(
    users: list[int],
    horizon: int,
    profile: str = "prod",
    reps: int = 1,
    seed: bytes = b"bench",
    share_verification_work: bool = True,
) -> list[BenchRow]:
    group = get_profile(profile)
    rows = []
    for n in users:
        stage_secs: dict[str, float] = {}
        stage_bytes: dict[str, int] = {}
        wall = 0.0
        settled = True
        for rep in range(reps):
            cfg = synth_config(
                n, horizon, group, seed + b"/%d/%d" % (n, rep), share_verification_work
            )
            t0 = time.perf_counter()
            run = run_full(cfg)
            wall += time.perf_counter() - t0
            settled = settled and run.settled
            for stage, per_party in run.party_seconds.items():
                user_total = sum(
                    sec for party, sec in per_party.items() if party.startswith("user")
                )
                stage_secs[stage] = stage_secs.get(stage, 0.0) + user_total / n
            for stage, (_m, nbytes) in run.traffic.items():
                stage_bytes[stage] = stage_bytes.get(stage, 0) + nbytes
        rows.append(
            BenchRow(
                n_users=n,
                settled=settled,
                stage_user_seconds={k: v / reps for k, v in stage_secs.items()},
                stage_total_bytes={k: v // reps for k, v in stage_bytes.items()},
                stage_user_bytes={k: v / reps / n for k, v in stage_bytes.items()},
                wall_seconds=wall / reps,
            )
        )
    return rows


def linear_fit(xs: list[float], ys: list[float]) -> tuple[float, float, float]:
    """Least squares y = a + b x; returns (slope, intercept, r_squared)."""
    n = len(xs)
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    sxx = sum((x - mean_x) ** 2 for x in xs)
    sxy = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    if sxx == 0:
        return 0.0, mean_y, 1.0
    slope = sxy / sxx
    intercept = mean_y - slope * mean_x
    ss_res = sum((y - (intercept + slope * x)) ** 2 for x, y in zip(xs, ys))
    ss_tot = sum((y - mean_y) ** 2 for y in ys)
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return slope, intercept, r2


def sweep_fits(rows: list[BenchRow], stage: str = "stage1") -> dict[str, tuple[float, float, float]]:
    xs = [float(r.n_users) for r in rows]
    return {
        "user_seconds": linear_fit(xs, [r.stage_user_seconds.get(stage, 0.0) for r in rows]),
        "user_bytes": linear_fit(xs, [r.stage_user_bytes.get(stage, 0.0) for r in rows]),
    }


def kernel_compare(profile: str = "prod", iters: int = 2000) -> list[dict]:
    """Throughput of the hot operations on each available backend."""
    group = get_profile(profile)
    p, q, g, h = group.modulus_p, group.order_q, group.gen_g, group.gen_h
    rng = StreamRng(b"kernel-bench")
    exps = [rng.field_element(q) for _ in range(iters)]
    bases = [rng.randrange(2, p) for _ in range(64)]
    results = []
    backends = ["python"] + (["native"] if kernel.native_available() else [])
    for backend in backends:
        ctx = kernel.get_context_named(p, backend)
        fg = ctx.fixed_base(g)
        fh = ctx.fixed_base(h)

        t0 = time.perf_counter()
        for i, e in enumerate(exps):
            ctx.powmod(bases[i % len(bases)], e)
        generic = (time.perf_counter() - t0) / iters

        t0 = time.perf_counter()
        for i, e in enumerate(exps):
            ctx.mul(fg.pow(e), fh.pow(exps[-1 - i]))
        commit = (time.perf_counter() - t0) / iters

        results.append(
            {
                "backend": backend,
                "powmod_us": generic * 1e6,
                "commit_us": commit * 1e6,
                "powmod_per_s": 1.0 / generic,
                "commit_per_s": 1.0 / commit,
            }
        )
    return results
