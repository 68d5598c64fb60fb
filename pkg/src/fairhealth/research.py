"""
Research-community data requests answered by a database owner.

The RC posts the hash of its query; the DBO answers within the TTL with the
hash of an aggregated dataset and its signature over that hash, and sends the
dataset itself offline. The RC checks the bytes against the chain.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional

from . import crypto
from .errors import CallerMismatch, Expired, NotResearchCommunity, UnknownId, WrongPhase
from .ledger import Contract, Ledger, Msg, transaction
from .registry import EntityKind, Registry


@dataclass(frozen=True)
class ResearchResponse:
    hash_Data: bytes
    sign: bytes
    t2: int


@dataclass(frozen=True)
class ResearchRequest:
    rdID: int
    dboID: int
    rcID: int
    hash_Query: bytes
    t1: int
    response: Optional[ResearchResponse] = None


def aggregate_counts(conditions: Iterable[str]) -> bytes:
    """Canonical dataset: sorted ``condition=count`` lines, one per condition."""
    counts = Counter(conditions)
    return "".join(f"{c}={counts[c]}\n" for c in sorted(counts)).encode()


def query_hash(query: str) -> bytes:
    return crypto.digest(query.encode())


class Research(Contract):
    name = "research"

    def __init__(self, ledger: Ledger, registry: Registry, *, ttl: Optional[int] = None):
        super().__init__(ledger)
        self.registry = registry
        self.ttl = ledger.ttl if ttl is None else ttl

    def request(self, rd_id: int) -> ResearchRequest:
        base = self.get("rd", rd_id)
        if base is None:
            raise UnknownId(f"no research request {rd_id}")
        resp = self.get("rd", rd_id, "response")
        return base if resp is None else ResearchRequest(**{**base.__dict__, "response": resp})

    def request_count(self) -> int:
        return self.get("idgen", "rd", default=0)

    @transaction
    def request_data_for_research(self, msg: Msg, rcID: int, dboID: int, hash_Query: bytes) -> int:
        rc = self.registry.entity(EntityKind.ResearchCommunity, rcID)
        if rc is None or rc.address != msg.caller:
            raise NotResearchCommunity()
        if self.registry.entity(EntityKind.DatabaseOwner, dboID) is None:
            raise UnknownId(f"no database owner {dboID}")
        rd_id = self.next_id("rd")
        self.put("rd", rd_id, ResearchRequest(rd_id, dboID, rcID, bytes(hash_Query), self.ledger.now))
        self.emit("ResearchRequested", rdID=rd_id, rcID=rcID, dboID=dboID)
        return rd_id

    @transaction
    def provide_data_for_research(self, msg: Msg, dboID: int, rdID: int, hash_Data: bytes, sign: bytes) -> None:
        req = self.request(rdID)
        if req.dboID != dboID:
            raise CallerMismatch()
        self.registry.require(EntityKind.DatabaseOwner, dboID, msg.caller)
        if req.response is not None:
            raise WrongPhase("request already answered")
        if self.ledger.expired(req.t1, self.ttl):
            raise Expired()
        self.put("rd", rdID, "response", ResearchResponse(bytes(hash_Data), bytes(sign), self.ledger.now))
        self.emit("ResearchProvided", rdID=rdID)

    def rc_verify_delivery(self, rdID: int, dataset: bytes) -> bool:
        """Offline check by the RC: the bytes hash to the chain value and the DBO signed it."""
        req = self.request(rdID)
        if req.response is None:
            return False
        dbo_addr = self.registry.address_of(EntityKind.DatabaseOwner, req.dboID)
        return (
            crypto.digest(bytes(dataset)) == req.response.hash_Data
            and crypto.verify_sig(crypto.address_key(dbo_addr), req.response.hash_Data, req.response.sign)
        )
