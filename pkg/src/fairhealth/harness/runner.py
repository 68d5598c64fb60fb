"""Scenario driver: builds the world, runs the actors and writes the report."""

from __future__ import annotations

import dataclasses
import json
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

from .. import ledger as ledger_mod
from ..crypto import KeyPair
from ..ledger import jsonable, key_str
from ..registry import EntityKind
from ..suite import Suite
from .actors import ACTOR_TYPES, Government, flip_first_byte
from .scenario import CastMember, Scenario, Strategy, load_scenario

Hook = Callable[["World"], None]


def _corrupt_payload(kind: str):
    def mutate(payload: dict) -> dict:
        payload = dict(payload)
        if kind in ("encoding", "store"):
            enc = payload["encrypted"]
            payload["encrypted"] = enc.with_element(0, flip_first_byte(enc.cipher_elements[0]))
        elif kind == "claim_key":
            payload["K"] = flip_first_byte(payload["K"])
        elif kind == "enc_file":
            payload["chunks"] = [flip_first_byte(payload["chunks"][0])] + list(payload["chunks"][1:])
        elif kind == "dataset":
            payload["dataset"] = flip_first_byte(payload["dataset"])
        elif kind == "file_request":
            payload["cID"] = -1
        return payload
    return mutate


def install_fault(bus, fault: dict) -> None:
    kind = fault["message"]
    if fault["type"] == "drop":
        bus.faults.append(ledger_mod.drop(kind))
    elif fault["type"] == "delay":
        bus.faults.append(ledger_mod.delay(kind, fault.get("ticks", 0)))
    else:
        bus.faults.append(ledger_mod.corrupt(kind, _corrupt_payload(kind)))


class World:
    """Everything one run shares: contracts, bus, actors and observations."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.params = dict(scenario.params)
        p = self.params
        gov = KeyPair.from_seed(f"{scenario.seed}/government".encode())
        self.suite = Suite.deploy(gov.address, ttl=p["ttl"], penalty_pct=p["penalty_pct"],
                                  treatment_deadline=p["treatment_deadline"])
        self.ledger = self.suite.ledger
        self.bus = self.suite.bus
        self.facts: Dict[str, dict] = {}
        self.government = Government(CastMember("government", "government", 0, Strategy()), self)
        self.government.address = gov.address
        self.actors = [ACTOR_TYPES[m.role](m, self) for m in scenario.cast]
        for actor in self.actors:
            self.ledger.endow(actor.address, actor.member.endowment)
        for fault in scenario.faults:
            install_fault(self.bus, fault)
        self.initial_balances = dict(self.ledger.balances)
        self.supply_timeline: List[List[int]] = [[0, self.ledger.total_supply()]]
        self.record_timeline: Dict[str, List[list]] = {}
        self._seen: Dict[tuple, object] = {}

    # -- cast lookups -------------------------------------------------------

    def _role(self, role: str):
        return [a for a in self.actors if a.role == role]

    @property
    def patients(self):
        return self._role("patient")

    @property
    def insurer(self):
        found = self._role("insurer")
        return found[0] if found else None

    @property
    def dbo(self):
        found = self._role("dbo")
        return found[0] if found else None

    def by_kind_id(self, kind: EntityKind, entity_id: int):
        for actor in self.actors:
            if actor.kind == kind and actor.refresh_id(self) == entity_id:
                return actor
        raise KeyError(f"no {kind.value} {entity_id} in the cast")

    # -- time and transactions ----------------------------------------------

    def lapsed(self, anchor: int, ttl: Optional[int] = None, offset: int = 0) -> bool:
        """Would a deadline guard see ``anchor`` as expired in the next transaction?"""
        return self.ledger.expired(anchor, ttl, now=self.ledger.next_tick + offset)

    def call(self, actor, contract: str, fn: str, value: int = 0, **kwargs):
        receipt = self.ledger.submit(contract, fn, actor.address, value=value, **kwargs)
        self.observe()
        return receipt

    def observe(self) -> None:
        tick = self.ledger.tick
        supply = self.ledger.total_supply()
        if self.supply_timeline[-1] != [tick, supply]:
            self.supply_timeline.append([tick, supply])
        for key, rec in self.ledger.records.items():
            if self._seen.get(key) is not rec:
                self._seen[key] = rec
                self.record_timeline.setdefault(key_str(key), []).append(
                    [tick, jsonable(rec.value), rec.mutable])


@dataclass
class RunReport:
    data: dict

    @property
    def assertions(self) -> dict:
        return self.data["assertions"]

    @property
    def passed(self) -> bool:
        return all(v["passed"] for v in self.assertions.values())

    @property
    def op_counts(self) -> dict:
        return self.data["op_counts"]

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=1)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")


def drive(world: World, hooks: Sequence[Hook] = ()) -> bool:
    """Round-robin the actors until every client is done; False on tick budget exhaustion."""
    clients = [world.government] + [a for a in world.actors if a.client]
    order = [world.government] + world.actors
    budget = world.params["max_ticks"]
    while True:
        for hook in hooks:
            hook(world)
        world.observe()
        if all(a.done for a in clients):
            return True
        if world.ledger.tick >= budget:
            return False
        acted = False
        for actor in order:
            if actor.done:
                continue
            if actor.step(world):
                acted = True
            if world.ledger.tick >= budget:
                break
        if not acted:
            world.ledger.advance(1)


def op_table(log) -> Dict[str, dict]:
    table: Dict[str, dict] = defaultdict(lambda: {"calls": 0, "reverts": 0, "total": 0, "min": None, "max": 0})
    for r in log:
        row = table[f"{r.contract}.{r.function}"]
        if not r.ok:
            row["reverts"] += 1
            continue
        row["calls"] += 1
        row["total"] += r.op_count
        row["max"] = max(row["max"], r.op_count)
        row["min"] = r.op_count if row["min"] is None else min(row["min"], r.op_count)
    return dict(sorted(table.items()))


def _bus_summary(msg) -> dict:
    meta = {k: v for k, v in msg.payload.items() if k.endswith("ID")} if isinstance(msg.payload, dict) else {}
    return {"seq": msg.seq, "kind": msg.kind, "sender": msg.sender, "recipient": msg.recipient,
            "sent_at": msg.sent_at, "deliver_at": msg.deliver_at, **meta}


def build_report(world: World, terminated: bool) -> dict:
    led = world.ledger

    cast = []
    for actor in world.actors:
        cast.append({"role": actor.role, "name": actor.name, "strategy": str(actor.strategy),
                     "address": actor.address, "id": actor.refresh_id(world)})
    privacy = {
        "attributes": {p.name: {k: str(v) for k, v in p.member.attributes.items() if k != "condition"}
                       for p in world.patients},
        "info_digests": {p.name: p.info_digest.hex() for p in world.patients},
    }
    return {
        "scenario": world.scenario.to_json(),
        "government": world.government.address,
        "cast": cast,
        "trace": [r.to_json() for r in led.log],
        "bus": {"delivered": [_bus_summary(m) for m in world.bus.messages],
                "dropped": [_bus_summary(m) for m in world.bus.dropped]},
        "endowment": led.endowment,
        "initial_balances": dict(sorted(world.initial_balances.items())),
        "final_balances": dict(sorted(led.balances.items())),
        "supply_timeline": world.supply_timeline,
        "record_timeline": dict(sorted(world.record_timeline.items())),
        "chain_records": jsonable(led.state()["records"]),
        "live_escrows": [jsonable(e) for e in led.live_escrows()],
        "facts": jsonable(world.facts),
        "op_counts": op_table(led.log),
        "privacy": privacy,
        "ticks": led.tick,
        "terminated": terminated,
        "final_digest": led.state_digest(),
    }


def run(scenario, hooks: Sequence[Hook] = ()) -> RunReport:
    """Execute a scenario and audit the outcome."""
    from .audit import audit

    scenario = load_scenario(scenario)
    world = World(scenario)
    terminated = drive(world, hooks)
    data = build_report(world, terminated)
    data["assertions"] = audit(data)
    return RunReport(data)


def run_world(scenario, hooks: Sequence[Hook] = ()) -> World:
    """Like ``run`` but hands back the live world for inspection."""
    world = World(load_scenario(scenario))
    world.terminated = drive(world, hooks)
    return world
