"""Storage schedule optimization and fair cost sharing.

Solves the aggregate-demand storage scheduling LP exactly (rational
arithmetic), disaggregates the optimum back to per-user schedules by
demand share, derives both cost-sharing schemes, and quantizes the
resulting ratios/prices onto the fixed-point grid used by the
commitment-and-proof layer.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from . import simplex

Frac = Fraction

PROPORTIONAL = "proportional"
EGALITARIAN = "egalitarian"
SCHEMES = (PROPORTIONAL, EGALITARIAN)


class SchedulerError(Exception):
    pass


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def _frac_tuple(xs) -> tuple[Fraction, ...]:
    return tuple(_frac(x) for x in xs)


@dataclass(frozen=True)
class PricePlan:
    prices: tuple[Fraction, ...]  # $/kWh per timeslot

    def __post_init__(self):
        object.__setattr__(self, "prices", _frac_tuple(self.prices))
        if len(self.prices) < 1:
            raise SchedulerError("price plan needs at least one timeslot")
        if any(p < 0 for p in self.prices):
            raise SchedulerError("prices must be non-negative")

    @property
    def horizon(self) -> int:
        return len(self.prices)


@dataclass(frozen=True)
class StorageParams:
    capacity: tuple[Fraction, ...]  # B(t), kWh
    service_fee: Fraction  # p_s, $/kWh charged
    eff_charge: Fraction  # e_c in (0, 1]
    eff_discharge: Fraction  # e_d >= 1
    rate_charge: Fraction  # r_c > 0
    rate_discharge: Fraction  # r_d > 0
    vnm_fee_fraction: Fraction = Fraction(0)  # s_vnm in [0, 1)

    def __post_init__(self):
        object.__setattr__(self, "capacity", _frac_tuple(self.capacity))
        for name in ("service_fee", "eff_charge", "eff_discharge",
                     "rate_charge", "rate_discharge", "vnm_fee_fraction"):
            object.__setattr__(self, name, _frac(getattr(self, name)))
        if any(b < 0 for b in self.capacity):
            raise SchedulerError("capacity must be non-negative")
        if self.service_fee < 0:
            raise SchedulerError("service fee must be non-negative")
        if not (0 < self.eff_charge <= 1):
            raise SchedulerError("charging efficiency must be in (0, 1]")
        if self.eff_discharge < 1:
            raise SchedulerError("discharging efficiency must be >= 1")
        if self.rate_charge <= 0 or self.rate_discharge <= 0:
            raise SchedulerError("rate limits must be positive")
        if not (0 <= self.vnm_fee_fraction < 1):
            raise SchedulerError("vnm fee fraction must be in [0, 1)")

    def discharge_drain(self) -> Fraction:
        """Storage drained per kWh delivered: e_d / (1 - s_vnm)."""
        return self.eff_discharge / (1 - self.vnm_fee_fraction)


@dataclass(frozen=True)
class DemandProfile:
    demand: tuple[Fraction, ...]  # a_i(t), kWh

    def __post_init__(self):
        object.__setattr__(self, "demand", _frac_tuple(self.demand))
        if any(a < 0 for a in self.demand):
            raise SchedulerError("demands must be non-negative")


@dataclass(frozen=True)
class ScheduleSolution:
    charge: tuple[Fraction, ...]  # x+(t)
    discharge: tuple[Fraction, ...]  # x-(t)
    residual: tuple[Fraction, ...]  # y(t)
    soc: tuple[Fraction, ...]  # b(0..T+1), both ends zero
    objective: Fraction  # $ total including residual consumption
    total_demand: tuple[Fraction, ...]

    @property
    def horizon(self) -> int:
        return len(self.charge)


@dataclass(frozen=True)
class CostBreakdown:
    scheme: str
    cost_ess: Fraction
    cost_org: Fraction
    effective_prices: tuple[Fraction, ...]  # p_hat(t)
    per_user_cost: tuple[Fraction, ...]  # Cost_i
    payments: tuple[Fraction, ...]  # P_i
    savings: tuple[Fraction, ...]  # Delta_i


def total_demand_of(profiles: Sequence[DemandProfile]) -> tuple[Fraction, ...]:
    horizons = {len(p.demand) for p in profiles}
    if len(horizons) != 1:
        raise SchedulerError("demand profiles disagree on horizon")
    T = horizons.pop()
    return tuple(sum((p.demand[t] for p in profiles), Frac(0)) for t in range(T))


def solve_p2(
    total_demand: Sequence[Fraction],
    prices: PricePlan,
    storage: StorageParams,
    force_exact: bool = False,
) -> ScheduleSolution:
    """Exact optimum of the aggregate scheduling LP.

    Residual consumption is eliminated via y(t) = a(t) - x-(t), leaving
    charge, discharge and the state-of-charge chain as variables; the
    returned solution always satisfies every constraint exactly.
    """
    a = _frac_tuple(total_demand)
    T = prices.horizon
    if len(a) != T or len(storage.capacity) != T:
        raise SchedulerError("demand/price/capacity horizons disagree")
    if any(v < 0 for v in a):
        raise SchedulerError("total demand must be non-negative")

    p = prices.prices
    drain = storage.discharge_drain()
    e_c = storage.eff_charge

    # Variable layout: x+(t) | x-(t) | level(t) = b(t+1) for t = 1..T-1.
    n = 2 * T + (T - 1)
    idx_xp = lambda t: t
    idx_xm = lambda t: T + t
    idx_lv = lambda t: 2 * T + t  # t in 0..T-2 holds b(t+2)

    c = [p[t] + storage.service_fee for t in range(T)]
    c += [-p[t] for t in range(T)]
    c += [Frac(0)] * (T - 1)

    rows = []
    for t in range(T):
        row = [Frac(0)] * n
        row[idx_xp(t)] = -e_c
        row[idx_xm(t)] = drain
        if t <= T - 2:
            row[idx_lv(t)] = Frac(1)
        if t >= 1:
            row[idx_lv(t - 1)] = Frac(-1)
        rows.append(row)
    b = [Frac(0)] * T

    upper: list[Fraction | None] = []
    upper += [storage.rate_charge] * T
    upper += [min(storage.rate_discharge, a[t]) for t in range(T)]
    upper += [storage.capacity[t + 1] for t in range(T - 1)]  # b(t+2) <= B(t+2)

    basis0 = [idx_lv(t) for t in range(T - 1)] + [idx_xm(T - 1)]
    prog = simplex.make_program(c, rows, b, upper)
    res = simplex.solve_bounded(prog, basis0, force_exact=force_exact)
    if res.status != "optimal":
        raise SchedulerError(f"LP solve failed: {res.status}")

    charge = tuple(res.x[idx_xp(t)] for t in range(T))
    discharge = tuple(res.x[idx_xm(t)] for t in range(T))
    residual = tuple(a[t] - discharge[t] for t in range(T))
    levels = [res.x[idx_lv(t)] for t in range(T - 1)]
    soc = (Frac(0), Frac(0)) + tuple(levels) + (Frac(0),)
    base_cost = sum((p[t] * a[t] for t in range(T)), Frac(0))
    return ScheduleSolution(
        charge=charge,
        discharge=discharge,
        residual=residual,
        soc=soc,
        objective=res.objective + base_cost,
        total_demand=a,
    )


def disaggregate(
    solution: ScheduleSolution, profiles: Sequence[DemandProfile]
) -> list[tuple[tuple[Fraction, ...], tuple[Fraction, ...]]]:
    """Per-user (x-_i, y_i) via demand shares a_i(t)/a(t)."""
    a = solution.total_demand
    T = solution.horizon
    if total_demand_of(profiles) != a:
        raise SchedulerError("profiles do not sum to the solved total demand")
    out = []
    for prof in profiles:
        xm_i = []
        y_i = []
        for t in range(T):
            if a[t] == 0:
                xm_i.append(Frac(0))
                y_i.append(Frac(0))
            else:
                share = prof.demand[t] / a[t]
                xm_i.append(share * solution.discharge[t])
                y_i.append(share * solution.residual[t])
        out.append((tuple(xm_i), tuple(y_i)))
    return out


def effective_prices(solution: ScheduleSolution, prices: PricePlan) -> tuple[Fraction, ...]:
    """p_hat(t) = x-(t) p(t) / a(t), zero on slots with no demand."""
    out = []
    for t in range(solution.horizon):
        a_t = solution.total_demand[t]
        if a_t == 0:
            out.append(Frac(0))
        else:
            out.append(solution.discharge[t] * prices.prices[t] / a_t)
    return tuple(out)


def service_cost(solution: ScheduleSolution, prices: PricePlan, storage: StorageParams) -> Fraction:
    return sum(
        ((prices.prices[t] + storage.service_fee) * solution.charge[t]
         for t in range(solution.horizon)),
        Frac(0),
    )


def displaced_cost(solution: ScheduleSolution, prices: PricePlan) -> Fraction:
    return sum(
        (prices.prices[t] * solution.discharge[t] for t in range(solution.horizon)),
        Frac(0),
    )


def cost_sharing(
    solution: ScheduleSolution,
    profiles: Sequence[DemandProfile],
    prices: PricePlan,
    storage: StorageParams,
    scheme: str,
) -> CostBreakdown:
    """Budget-balanced, individually rational split of the service cost."""
    if scheme not in SCHEMES:
        raise SchedulerError(f"unknown cost-sharing scheme {scheme!r}")
    n_users = len(profiles)
    T = solution.horizon
    cost_ess = service_cost(solution, prices, storage)
    cost_org = displaced_cost(solution, prices)
    p_hat = effective_prices(solution, prices)
    per_user_cost = tuple(
        sum((prof.demand[t] * p_hat[t] for t in range(T)), Frac(0))
        for prof in profiles
    )
    if cost_org == 0:
        payments = tuple(Frac(0) for _ in profiles)
    elif scheme == PROPORTIONAL:
        ratio = cost_ess / cost_org
        payments = tuple(ratio * ci for ci in per_user_cost)
    else:
        rebate = (cost_org - cost_ess) / n_users
        payments = tuple(ci - rebate for ci in per_user_cost)
    savings = tuple(ci - pi for ci, pi in zip(per_user_cost, payments))
    return CostBreakdown(
        scheme=scheme,
        cost_ess=cost_ess,
        cost_org=cost_org,
        effective_prices=p_hat,
        per_user_cost=per_user_cost,
        payments=payments,
        savings=savings,
    )


# ---------------------------------------------------------------------------
# fixed-point bridges into the commitment layer


def round_half_away(x: Fraction) -> int:
    n, d = x.numerator, x.denominator
    if n >= 0:
        return (2 * n + d) // (2 * d)
    return -((-2 * n + d) // (2 * d))


def quantize_ratios(solution: ScheduleSolution, scale: int) -> tuple[int, ...]:
    """Integer discharge ratios rho(t) ~ scale * x-(t)/a(t), 0 where a(t)=0.

    A user's committed discharge at t is a_i_raw(t) * rho(t), i.e. the
    per-user discharge carried at scale^2.
    """
    out = []
    for t in range(solution.horizon):
        a_t = solution.total_demand[t]
        if a_t == 0:
            out.append(0)
        else:
            out.append(round_half_away(solution.discharge[t] / a_t * scale))
    return tuple(out)


def payment_weights(
    breakdown: CostBreakdown, n_users: int, scale: int
) -> tuple[tuple[int, ...], int]:
    """Public integer payment coefficients (W(t), rebate D).

    Proportional: P_i_raw = sum_t a_i_raw(t) * W(t) with
    W(t) ~ scale * cost_ess * p_hat(t) / cost_org.  Egalitarian:
    P_i_raw = sum_t a_i_raw(t) * W(t) - D with W(t) ~ scale * p_hat(t)
    and D ~ scale^2 * (cost_org - cost_ess) / N.  Payment raws therefore
    live at scale^2 field units per dollar.
    """
    if breakdown.scheme == PROPORTIONAL:
        if breakdown.cost_org == 0:
            weights = tuple(0 for _ in breakdown.effective_prices)
        else:
            ratio = breakdown.cost_ess / breakdown.cost_org
            weights = tuple(
                round_half_away(ratio * ph * scale) for ph in breakdown.effective_prices
            )
        return weights, 0
    weights = tuple(round_half_away(ph * scale) for ph in breakdown.effective_prices)
    if breakdown.cost_org == 0:
        return tuple(0 for _ in weights), 0
    rebate = round_half_away(
        (breakdown.cost_org - breakdown.cost_ess) / n_users * scale * scale
    )
    return weights, rebate


def quantized_payment(
    demand_raw: Sequence[int], weights: Sequence[int], rebate: int
) -> int:
    """Per-user payment raw at scale^2: sum_t a_i_raw(t) W(t) - D."""
    return sum(a * w for a, w in zip(demand_raw, weights)) - rebate


def quantize_demand(profile: DemandProfile, scale: int) -> tuple[int, ...]:
    return tuple(round_half_away(a * scale) for a in profile.demand)
