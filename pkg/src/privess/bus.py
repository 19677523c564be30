"""Synchronous-round message bus for the in-process protocol simulator.

All party interaction flows through the bus: messages posted during a
round are delivered together at the round barrier, so no round-(k+1)
message is seen before every round-k message.  Every envelope is logged
(line-delimited JSON) for replay and byte accounting.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

BROADCAST = None


class BusError(Exception):
    pass


def canonical_payload(payload: dict) -> bytes:
    """Deterministic wire encoding used for logging and byte counts."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()


@dataclass
class Envelope:
    round: int
    stage: str
    step: str
    sender: str
    recipient: Optional[str]  # None = broadcast
    mtype: str
    payload: dict

    def wire_size(self) -> int:
        return len(canonical_payload(self.payload))

    def to_json(self) -> str:
        return json.dumps(
            {
                "round": self.round,
                "stage": self.stage,
                "step": self.step,
                "sender": self.sender,
                "recipient": self.recipient,
                "mtype": self.mtype,
                "payload": self.payload,
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "Envelope":
        d = json.loads(line)
        return cls(
            round=d["round"],
            stage=d["stage"],
            step=d["step"],
            sender=d["sender"],
            recipient=d["recipient"],
            mtype=d["mtype"],
            payload=d["payload"],
        )


@dataclass
class StageTraffic:
    messages: int = 0
    bytes: int = 0


class SyncBus:
    """Round-buffered message delivery between named parties."""

    def __init__(self, party_ids: list[str]):
        self.party_ids = list(party_ids)
        self.round = 0
        self.stage = ""
        self.step = ""
        self.log: list[Envelope] = []
        self.traffic: dict[str, StageTraffic] = defaultdict(StageTraffic)
        self._pending: list[Envelope] = []
        self._delivered: dict[str, list[Envelope]] = {}

    def begin(self, stage: str, step: str) -> None:
        if self._pending:
            raise BusError("previous round not delivered")
        self.stage = stage
        self.step = step

    def send(
        self,
        sender: str,
        mtype: str,
        payload: dict,
        recipient: Optional[str] = BROADCAST,
    ) -> None:
        env = Envelope(
            round=self.round,
            stage=self.stage,
            step=self.step,
            sender=sender,
            recipient=recipient,
            mtype=mtype,
            payload=payload,
        )
        self._pending.append(env)

    def deliver(self) -> dict[str, list[Envelope]]:
        """Close the round: log everything posted and hand out inboxes."""
        inboxes: dict[str, list[Envelope]] = {pid: [] for pid in self.party_ids}
        for env in self._pending:
            self.log.append(env)
            t = self.traffic[env.stage]
            t.messages += 1
            t.bytes += env.wire_size()
            if env.recipient is BROADCAST:
                for pid in self.party_ids:
                    if pid != env.sender:
                        inboxes[pid].append(env)
            else:
                if env.recipient not in inboxes:
                    raise BusError(f"unknown recipient {env.recipient!r}")
                inboxes[env.recipient].append(env)
        self._pending = []
        self._delivered = inboxes
        self.round += 1
        return inboxes

    def round_trip(self) -> dict[str, list[Envelope]]:
        return self.deliver()

    def dump_log(self) -> str:
        return "\n".join(env.to_json() for env in self.log) + ("\n" if self.log else "")

    def visible_to(self, party_id: str) -> list[Envelope]:
        """Every envelope the given party could observe (broadcasts + directed)."""
        return [
            env
            for env in self.log
            if env.sender == party_id
            or env.recipient is BROADCAST
            or env.recipient == party_id
        ]


def gather(inbox: list[Envelope], mtype: str) -> dict[str, Envelope]:
    """Index round messages of one type by sender, requiring uniqueness."""
    out: dict[str, Envelope] = {}
    for env in inbox:
        if env.mtype != mtype:
            continue
        if env.sender in out:
            raise BusError(f"duplicate {mtype} from {env.sender}")
        out[env.sender] = env
    return out
