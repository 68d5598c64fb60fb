"""
Identity issuance, the access-control matrix and insurer security deposits.

Patients, hospitals and insurers register themselves; database owners and
research communities are onboarded by the government address that exists at
genesis. Chain state holds only a digest of each entity's identifying
information.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from . import crypto
from .errors import (
    AlreadyRegistered,
    BelowThreshold,
    CallerMismatch,
    Deregistered,
    NotGovernment,
    NotOwner,
    UnknownId,
    WrongValue,
)
from .ledger import Contract, Ledger, Msg, Purpose, transaction


class EntityKind(str, enum.Enum):
    Patient = "Patient"
    Hospital = "Hospital"
    InsuranceCo = "InsuranceCo"
    DatabaseOwner = "DatabaseOwner"
    ResearchCommunity = "ResearchCommunity"


GOVERNMENT_ONBOARDED = (EntityKind.DatabaseOwner, EntityKind.ResearchCommunity)


class Category(str, enum.Enum):
    General = "General"
    MedicalTreatment = "MedicalTreatment"
    MedicalExpenditure = "MedicalExpenditure"


@dataclass(frozen=True)
class EntityRecord:
    kind: EntityKind
    id: int
    address: str
    info_digest: bytes


@dataclass(frozen=True)
class AccessGrant:
    owner: int
    grantee: str
    category: Category
    active: bool


@dataclass(frozen=True)
class SecurityDeposit:
    ic_id: int
    locked: int
    costliest_policy_price: int


def patient_info_digest(name: str, age, mobile: str, address: str) -> bytes:
    """H(name || age || mobile || address), the only trace of a patient on chain."""
    return crypto.digest("\x1f".join([name, str(age), mobile, address]).encode())


def name_digest(name: str) -> bytes:
    return crypto.digest(name.encode())


class Registry(Contract):
    name = "registration"
    open_functions = frozenset({"register_entity"})

    def __init__(self, ledger: Ledger, government: str):
        super().__init__(ledger)
        self.government = government
        ledger.identity = self

    # -- identities ---------------------------------------------------------

    def is_known(self, address: str) -> bool:
        if address == self.government:
            return True
        return any(self.id_of(kind, address) is not None for kind in EntityKind)

    def id_of(self, kind: EntityKind, address: str) -> Optional[int]:
        return self.get("addr", EntityKind(kind), address)

    def entity(self, kind: EntityKind, entity_id: int) -> Optional[EntityRecord]:
        return self.get("entity", EntityKind(kind), entity_id)

    def address_of(self, kind: EntityKind, entity_id: int) -> str:
        rec = self.entity(kind, entity_id)
        if rec is None:
            raise UnknownId(f"no {EntityKind(kind).value} with id {entity_id}")
        return rec.address

    def require(self, kind: EntityKind, entity_id: int, caller: str) -> EntityRecord:
        """Guard shared by every contract: ``caller`` must hold ``entity_id``."""
        rec = self.entity(kind, entity_id)
        if rec is None:
            raise UnknownId(f"no {EntityKind(kind).value} with id {entity_id}")
        if rec.address != caller:
            raise CallerMismatch()
        if kind == EntityKind.InsuranceCo and self.is_deregistered(entity_id):
            raise Deregistered()
        return rec

    def count(self, kind: EntityKind) -> int:
        return self.get("idgen", EntityKind(kind).value, default=0)

    @transaction
    def register_entity(self, msg: Msg, kind, address: str, info_digest: bytes) -> int:
        kind = EntityKind(kind)
        if kind in GOVERNMENT_ONBOARDED:
            if msg.caller != self.government:
                raise NotGovernment()
        elif msg.caller != address:
            raise CallerMismatch()
        if self.id_of(kind, address) is not None:
            raise AlreadyRegistered()
        entity_id = self.next_id(kind.value)
        self.put("entity", kind, entity_id, EntityRecord(kind, entity_id, address, bytes(info_digest)))
        self.put("addr", kind, address, entity_id)
        self.emit("Registered", kind=kind, id=entity_id, address=address)
        return entity_id

    # -- access-control matrix ---------------------------------------------

    def has_access(self, owner: int, grantee: str, category) -> bool:
        return bool(self.get("grant", owner, grantee, Category(category), default=False))

    def grant(self, owner: int, grantee: str, category) -> None:
        """Contract-internal grant, used when an algorithm grants on the owner's behalf."""
        self.put("grant", owner, grantee, Category(category), True, mutable=True)
        self.emit("AccessGranted", owner=owner, grantee=grantee, category=Category(category))

    def _owner_check(self, msg: Msg, owner: int) -> None:
        rec = self.entity(EntityKind.Patient, owner)
        if rec is None or rec.address != msg.caller:
            raise NotOwner()

    @transaction
    def grant_access(self, msg: Msg, owner: int, grantee: str, category) -> None:
        self._owner_check(msg, owner)
        self.grant(owner, grantee, category)

    @transaction
    def revoke_access(self, msg: Msg, owner: int, grantee: str, category) -> None:
        self._owner_check(msg, owner)
        self.put("grant", owner, grantee, Category(category), False, mutable=True)
        self.emit("AccessRevoked", owner=owner, grantee=grantee, category=Category(category))

    # -- security deposits --------------------------------------------------

    def deposit(self, ic_id: int) -> SecurityDeposit:
        return self.get("deposit", ic_id, default=SecurityDeposit(ic_id, 0, 0))

    def security_money(self, ic_id: int) -> int:
        return self.deposit(ic_id).locked

    def is_deregistered(self, ic_id: int) -> bool:
        return self.get("deregistered", ic_id) is not None

    def _escrow_ids(self, ic_id: int) -> Tuple[int, ...]:
        return self.get("deposit_escrows", ic_id, default=())

    def _set_deposit(self, dep: SecurityDeposit, escrows: Tuple[int, ...]) -> None:
        self.put("deposit", dep.ic_id, dep, mutable=True)
        self.put("deposit_escrows", dep.ic_id, tuple(escrows), mutable=True)

    def _pay_out(self, ic_id: int, payouts: Sequence[Tuple[str, int]]) -> None:
        """Close every deposit escrow, paying ``payouts`` first and the rest to the insurer."""
        owner = self.address_of(EntityKind.InsuranceCo, ic_id)
        queue: List[List] = [[to, amt] for to, amt in payouts if amt > 0]
        for eid in self._escrow_ids(ic_id):
            remaining = self.ledger.escrows[eid].amount
            split = []
            while remaining and queue:
                take = min(remaining, queue[0][1])
                split.append((queue[0][0], take))
                queue[0][1] -= take
                remaining -= take
                if queue[0][1] == 0:
                    queue.pop(0)
            if remaining:
                split.append((owner, remaining))
            self.ledger.release_split(eid, split or [(owner, 0)], holder=self.name)

    @transaction
    def deposit_security(self, msg: Msg, ic_id: int) -> None:
        self.require(EntityKind.InsuranceCo, ic_id, msg.caller)
        if msg.value <= 0:
            raise WrongValue("deposit must be positive")
        eid = self.ledger.lock_value(msg, Purpose.SecurityDeposit, tag=("deposit", ic_id))
        dep = self.deposit(ic_id)
        self._set_deposit(
            SecurityDeposit(ic_id, dep.locked + msg.value, dep.costliest_policy_price),
            self._escrow_ids(ic_id) + (eid,),
        )

    @transaction
    def withdraw_security(self, msg: Msg, ic_id: int, amount: int) -> None:
        self.require(EntityKind.InsuranceCo, ic_id, msg.caller)
        dep = self.deposit(ic_id)
        if amount < 0 or amount > dep.locked:
            raise WrongValue("withdrawal exceeds the deposit")
        keep = dep.locked - amount
        if keep < dep.costliest_policy_price:
            raise BelowThreshold()
        self._pay_out(ic_id, [])
        escrows: Tuple[int, ...] = ()
        if keep:
            escrows = (self.ledger.lock(msg.caller, keep, Purpose.SecurityDeposit, tag=("deposit", ic_id), holder=self.name),)
        self._set_deposit(SecurityDeposit(ic_id, keep, dep.costliest_policy_price), escrows)

    def set_costliest(self, ic_id: int, price: int) -> None:
        """Raise the costliest listed price; the deposit must already cover it."""
        dep = self.deposit(ic_id)
        costliest = max(dep.costliest_policy_price, price)
        if dep.locked < costliest:
            raise BelowThreshold()
        self.put("deposit", ic_id, SecurityDeposit(ic_id, dep.locked, costliest), mutable=True)

    def compensate(self, ic_id: int, to: str, amount: int) -> None:
        """Pay ``amount`` out of the deposit, keeping the remainder locked."""
        dep = self.deposit(ic_id)
        owner = self.address_of(EntityKind.InsuranceCo, ic_id)
        keep = dep.locked - amount
        self._pay_out(ic_id, [(to, amount)])
        escrows: Tuple[int, ...] = ()
        if keep:
            escrows = (self.ledger.lock(owner, keep, Purpose.SecurityDeposit, tag=("deposit", ic_id), holder=self.name),)
        self._set_deposit(SecurityDeposit(ic_id, keep, dep.costliest_policy_price), escrows)
        self.emit("Compensated", ic_id=ic_id, to=to, amount=amount)

    def deregister_insurer(self, ic_id: int, obligations: Sequence[Tuple[str, int]] = ()) -> None:
        """Flag the insurer and drain its deposit toward ``obligations``, residue to the insurer."""
        if self.is_deregistered(ic_id):
            return
        dep = self.deposit(ic_id)
        self._pay_out(ic_id, obligations)
        self._set_deposit(SecurityDeposit(ic_id, 0, dep.costliest_policy_price), ())
        self.put("deregistered", ic_id, self.ledger.now)
        self.emit("Deregistered", ic_id=ic_id)
