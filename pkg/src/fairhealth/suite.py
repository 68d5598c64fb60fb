"""Wiring of the five contracts onto one ledger."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .insurance import Insurance
from .ledger import DEFAULT_TTL, Ledger, OfflineBus
from .registry import Registry
from .research import Research
from .storage import Storage
from .treatment import Treatment


@dataclass
class Suite:
    ledger: Ledger
    bus: OfflineBus
    registry: Registry
    treatment: Treatment
    storage: Storage
    insurance: Insurance
    research: Research

    @classmethod
    def deploy(cls, government: str, *, ttl: int = DEFAULT_TTL, penalty_pct: int = 100,
               treatment_deadline: Optional[int] = None) -> "Suite":
        ledger = Ledger(ttl=ttl)
        bus = OfflineBus(lambda: ledger.tick)
        registry = ledger.deploy(Registry(ledger, government))
        treatment = ledger.deploy(Treatment(ledger, registry, penalty_pct=penalty_pct,
                                            treatment_deadline=treatment_deadline))
        storage = ledger.deploy(Storage(ledger, registry, treatment, penalty_pct=penalty_pct))
        insurance = ledger.deploy(Insurance(ledger, registry, treatment, storage))
        research = ledger.deploy(Research(ledger, registry))
        return cls(ledger, bus, registry, treatment, storage, insurance, research)
