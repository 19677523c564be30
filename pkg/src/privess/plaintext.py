"""Plaintext scheduling/cost pipeline: no crypto, same arithmetic.

Computes everything the multi-party protocol computes -- schedule, both
cost shares, quantized payment and discharge integers -- directly from
the cleartext demands.  Serves as the settlement oracle for protocol
tests and as the engine behind the schedule-only CLI command.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from . import scheduler
from .scheduler import (
    CostBreakdown,
    DemandProfile,
    PricePlan,
    ScheduleSolution,
    StorageParams,
)


@dataclass(frozen=True)
class PlainResult:
    solution: ScheduleSolution
    breakdown: CostBreakdown
    demand_raw: tuple[tuple[int, ...], ...]  # per user, scale units
    weights: tuple[int, ...]  # payment coefficients W(t)
    rebate: int  # egalitarian rebate D (scale^2), 0 for proportional
    payments_raw: tuple[int, ...]  # per user, scale^2 units
    cost_ess_raw: int  # scale^2 units
    ratios: tuple[int, ...]  # discharge ratios rho(t), scale units
    discharge_raw: tuple[tuple[int, ...], ...]  # per user per slot, scale^2
    credits: tuple[Fraction, ...]  # $ reimbursed per user via net metering
    export_caps_raw: tuple[int, ...]  # per slot aggregate export, scale^2

    @property
    def horizon(self) -> int:
        return self.solution.horizon


def run_plaintext(
    profiles: Sequence[DemandProfile],
    prices: PricePlan,
    storage: StorageParams,
    scheme: str,
    scale: int,
) -> PlainResult:
    total = scheduler.total_demand_of(profiles)
    solution = scheduler.solve_p2(total, prices, storage)
    breakdown = scheduler.cost_sharing(solution, profiles, prices, storage, scheme)

    demand_raw = tuple(scheduler.quantize_demand(p, scale) for p in profiles)
    weights, rebate = scheduler.payment_weights(breakdown, len(profiles), scale)
    payments_raw = tuple(
        scheduler.quantized_payment(dr, weights, rebate) for dr in demand_raw
    )
    cost_ess_raw = scheduler.round_half_away(breakdown.cost_ess * scale * scale)
    ratios = scheduler.quantize_ratios(solution, scale)
    discharge_raw = tuple(
        tuple(dr[t] * ratios[t] for t in range(solution.horizon)) for dr in demand_raw
    )
    credits = tuple(
        sum(
            (
                Fraction(row[t], scale * scale) * prices.prices[t]
                for t in range(solution.horizon)
            ),
            Fraction(0),
        )
        for row in discharge_raw
    )
    total_raw = tuple(
        sum(dr[t] for dr in demand_raw) for t in range(solution.horizon)
    )
    export_caps_raw = tuple(
        total_raw[t] * ratios[t] for t in range(solution.horizon)
    )
    return PlainResult(
        solution=solution,
        breakdown=breakdown,
        demand_raw=demand_raw,
        weights=weights,
        rebate=rebate,
        payments_raw=payments_raw,
        cost_ess_raw=cost_ess_raw,
        ratios=ratios,
        discharge_raw=discharge_raw,
        credits=credits,
        export_caps_raw=export_caps_raw,
    )
