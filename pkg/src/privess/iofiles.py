"""File ingestion and report emission for the CLI.

Demand and price inputs are delimited text, one row per timeslot (demand
columns are users); storage parameters and scenarios are JSON.  Rationals
are written as "num/den" or decimal strings and parsed exactly.
"""

from __future__ import annotations

import csv
import json
import os
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .groups import GroupParams, get_profile
from .protocol import AdversaryScript, Directive, ProtocolConfig, ProtocolRun
from .scheduler import DemandProfile, PricePlan, StorageParams


class InputError(Exception):
    pass


def parse_fraction(text: str, where: str = "") -> Fraction:
    try:
        return Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise InputError(f"bad rational {text!r}{' at ' + where if where else ''}") from exc


def frac_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def read_demands(path: str | Path) -> list[DemandProfile]:
    """One row per timeslot, one column per user, header row with labels."""
    rows = _read_rows(path)
    if len(rows) < 2:
        raise InputError(f"{path}: need a header row and at least one timeslot")
    width = len(rows[0])
    if width < 1:
        raise InputError(f"{path}: no user columns")
    columns: list[list[Fraction]] = [[] for _ in range(width)]
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise InputError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
        for u, cell in enumerate(row):
            columns[u].append(parse_fraction(cell, f"{path}:{lineno}"))
    return [DemandProfile(tuple(col)) for col in columns]


def read_prices(path: str | Path) -> PricePlan:
    """One row per timeslot, single price column, header row."""
    rows = _read_rows(path)
    if len(rows) < 2:
        raise InputError(f"{path}: need a header row and at least one timeslot")
    prices = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 1:
            raise InputError(f"{path}:{lineno}: expected a single price column")
        prices.append(parse_fraction(row[0], f"{path}:{lineno}"))
    return PricePlan(tuple(prices))


def _read_rows(path: str | Path) -> list[list[str]]:
    try:
        with open(path, newline="") as fh:
            return [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def read_storage(path: str | Path, horizon: int) -> StorageParams:
    try:
        with open(path) as fh:
            blob = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read storage config {path}: {exc}") from exc
    return storage_from_dict(blob, horizon, where=str(path))


def storage_from_dict(blob: dict, horizon: int, where: str = "storage") -> StorageParams:
    cap = blob.get("capacity")
    if cap is None:
        raise InputError(f"{where}: missing capacity")
    if isinstance(cap, (str, int, float)):
        capacity = tuple(parse_fraction(cap, where) for _ in range(horizon))
    else:
        if len(cap) != horizon:
            raise InputError(f"{where}: capacity has {len(cap)} slots, expected {horizon}")
        capacity = tuple(parse_fraction(c, where) for c in cap)
    return StorageParams(
        capacity=capacity,
        service_fee=parse_fraction(blob.get("service_fee", "0"), where),
        eff_charge=parse_fraction(blob.get("eff_charge", "1"), where),
        eff_discharge=parse_fraction(blob.get("eff_discharge", "1"), where),
        rate_charge=parse_fraction(blob.get("rate_charge", "1"), where),
        rate_discharge=parse_fraction(blob.get("rate_discharge", "1"), where),
        vnm_fee_fraction=parse_fraction(blob.get("vnm_fee_fraction", "0"), where),
    )


def group_from_spec(spec) -> GroupParams:
    if isinstance(spec, str):
        return get_profile(spec)
    return GroupParams.from_config(spec)


def load_scenario(path: str | Path, overrides: Optional[dict] = None) -> ProtocolConfig:
    """Build a protocol config from a scenario file plus CLI overrides."""
    base = Path(path).parent
    try:
        with open(path) as fh:
            blob = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read scenario {path}: {exc}") from exc
    overrides = overrides or {}

    demands = read_demands(base / blob["demands_file"])
    prices = read_prices(base / blob["prices_file"])
    if "storage_file" in blob:
        storage = read_storage(base / blob["storage_file"], prices.horizon)
    else:
        storage = storage_from_dict(blob.get("storage", {}), prices.horizon)

    group = group_from_spec(overrides.get("group") or blob.get("group", "test64"))
    seed_text = str(overrides.get("seed") or blob.get("seed", "privess"))
    adversary = AdversaryScript(
        tuple(
            Directive(
                party=int(d["party"]),
                stage=d["stage"],
                step=d["step"],
                kind=d["kind"],
                params=d.get("params", {}),
            )
            for d in blob.get("adversary", [])
        )
    )
    balances = tuple(
        parse_fraction(b, "initial_balances") for b in blob.get("initial_balances", [])
    )
    epsilon = overrides.get("epsilon") or blob.get("epsilon_raw")
    return ProtocolConfig(
        group=group,
        demands=tuple(demands),
        prices=prices,
        storage=storage,
        scheme=overrides.get("scheme") or blob.get("scheme", "proportional"),
        seed=seed_text.encode(),
        initial_balances=balances,
        nn_bit_width=int(blob.get("nn_bit_width", 32 if group.order_q > (1 << 40) else 3)),
        epsilon_raw=int(epsilon) if epsilon is not None else None,
        adversary=adversary,
    )


def output_dir(flag_value: Optional[str]) -> Path:
    out = flag_value or os.environ.get("PRIVESS_OUT_DIR") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def run_report(run: ProtocolRun, config: ProtocolConfig) -> dict:
    """Structured scenario report (regenerable from the transcript)."""
    report: dict = {
        "outcome": run.outcome,
        "abort": None
        if run.abort is None
        else {"stage": run.abort.stage, "step": run.abort.step, "kind": run.abort.kind},
        "scheme": config.scheme,
        "group": config.group.to_config(),
        "n_users": config.n_users,
        "horizon": config.horizon,
        "traffic": {
            stage: {"messages": m, "bytes": b} for stage, (m, b) in sorted(run.traffic.items())
        },
        "timings": {
            stage: {party: round(sec, 6) for party, sec in sorted(per.items())}
            for stage, per in sorted(run.party_seconds.items())
        },
    }
    if run.plain is not None:
        sol = run.plain.solution
        bd = run.plain.breakdown
        report["schedule"] = {
            "aggregate_demand": [frac_str(a) for a in sol.total_demand],
            "charge": [frac_str(v) for v in sol.charge],
            "discharge": [frac_str(v) for v in sol.discharge],
            "residual": [frac_str(v) for v in sol.residual],
            "soc": [frac_str(v) for v in sol.soc],
            "objective": frac_str(sol.objective),
        }
        report["costs"] = {
            "cost_ess": frac_str(bd.cost_ess),
            "cost_org": frac_str(bd.cost_org),
            "effective_prices": [frac_str(v) for v in bd.effective_prices],
        }
    report["owner_views"] = {
        f"user{i}": {
            "payment": None if v.payment is None else frac_str(v.payment),
            "payment_raw": v.payment_raw,
            "credit": None if v.credit is None else frac_str(v.credit),
            "vnm_outcome": v.vnm_outcome,
        }
        for i, v in enumerate(run.views)
    }
    return report


def schedule_report(plain, scheme: str) -> dict:
    sol = plain.solution
    bd = plain.breakdown
    return {
        "scheme": scheme,
        "schedule": {
            "aggregate_demand": [frac_str(a) for a in sol.total_demand],
            "charge": [frac_str(v) for v in sol.charge],
            "discharge": [frac_str(v) for v in sol.discharge],
            "residual": [frac_str(v) for v in sol.residual],
            "soc": [frac_str(v) for v in sol.soc],
            "objective": frac_str(sol.objective),
        },
        "costs": {
            "cost_ess": frac_str(bd.cost_ess),
            "cost_org": frac_str(bd.cost_org),
            "effective_prices": [frac_str(v) for v in bd.effective_prices],
            "per_user_cost": [frac_str(v) for v in bd.per_user_cost],
            "payments": [frac_str(v) for v in bd.payments],
            "savings": [frac_str(v) for v in bd.savings],
        },
    }


def write_json(path: Path, blob: dict) -> None:
    with open(path, "w") as fh:
        json.dump(blob, fh, indent=2, sort_keys=True)
        fh.write("\n")
