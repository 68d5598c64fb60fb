"""
Patient / database-owner storage contract.

The patient resells the hospital's encrypted encoding to a database owner.
Because the application is bound to the treatment record, the roots the DBO
checks are the very M1/M2 the hospital signed. The patient pays a storage fee
that goes to the DBO on approval and is forfeited if the DBO proves the file
is bad.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields, replace
from typing import Optional, Union

from . import crypto
from .errors import (
    DuplicateApplication,
    Expired,
    KeyMismatch,
    NotFileOwner,
    NotYetExpired,
    RootMismatch,
    UnknownId,
    WrongPhase,
    WrongValue,
)
from .fairswap import Complaint
from .ledger import Contract, Ledger, Msg, Purpose, transaction
from .registry import EntityKind, Registry
from .treatment import Phase as CasePhase
from .treatment import Treatment, judge_complaint


class StoragePhase(str, enum.Enum):
    Applied = "Applied"
    Verified = "Verified"
    KeyRevealed = "KeyRevealed"
    Approved = "Approved"
    Rejected = "Rejected"
    Aborted = "Aborted"


@dataclass(frozen=True)
class ApplicationForStoring:
    asID: int
    pID: int
    dboID: int
    pAddr: str
    dboAddr: str
    msID: int
    fee: int
    MR_File: bytes
    MR_EncFile: bytes
    key: Optional[bytes] = None
    T_Application: int = 0
    T_VerificationMR: int = 0
    T_KeyReveal: int = 0
    T_Complain: int = 0
    T_Approval: int = 0
    T_UnlockingByP: int = 0
    T_UnlockingByDBO: int = 0


class Storage(Contract):
    name = "storage"

    def __init__(self, ledger: Ledger, registry: Registry, treatment: Treatment, *,
                 ttl: Optional[int] = None, penalty_pct: int = 100):
        super().__init__(ledger)
        self.registry = registry
        self.treatment = treatment
        self.ttl = ledger.ttl if ttl is None else ttl
        self.penalty_pct = penalty_pct

    def application(self, as_id: int) -> ApplicationForStoring:
        base = self.get("as", as_id)
        if base is None:
            raise UnknownId(f"no storage application {as_id}")
        stamps = {f.name: self.get("as", as_id, f.name, default=0)
                  for f in fields(base) if f.name.startswith("T_")}
        return replace(base, key=self.get("as", as_id, "key"), **stamps)

    def phase(self, as_id: int) -> StoragePhase:
        ph = self.get("phase", as_id)
        if ph is None:
            raise UnknownId(f"no storage application {as_id}")
        return ph

    def _set_phase(self, as_id: int, phase: StoragePhase) -> None:
        self.put("phase", as_id, phase, mutable=True)
        self.emit("StoragePhase", asID=as_id, phase=phase)

    def _stamp(self, as_id: int, fld: str) -> None:
        self.put("as", as_id, fld, self.ledger.now)

    def _in_phase(self, as_id: int, *phases: StoragePhase) -> None:
        if self.phase(as_id) not in phases:
            raise WrongPhase(f"application {as_id} is {self.phase(as_id).value}")

    def _within(self, anchor: int) -> None:
        if self.ledger.expired(anchor, self.ttl):
            raise Expired()

    def application_count(self) -> int:
        return self.get("idgen", "as", default=0)

    @transaction
    def apply_for_storing(self, msg: Msg, pID: int, dboID: int, msID: int) -> int:
        self.registry.require(EntityKind.Patient, pID, msg.caller)
        dbo_addr = self.registry.address_of(EntityKind.DatabaseOwner, dboID)
        ms = self.treatment.medical_file(msID)
        if ms.pID != pID:
            raise NotFileOwner()
        if self.treatment.phase(ms.ebID) != CasePhase.Settled:
            raise WrongPhase("only a settled treatment file can be stored")
        if self.get("by_file", msID, dboID) is not None:
            raise DuplicateApplication()
        if msg.value <= 0:
            raise WrongValue("storage fee must be attached")
        as_id = self.next_id("as")
        self.put("as", as_id, ApplicationForStoring(
            as_id, pID, dboID, msg.caller, dbo_addr, msID, msg.value, ms.mr_med_data, ms.mr_enc_data))
        self.put("by_file", msID, dboID, as_id)
        self.put("escrow", as_id, self.ledger.lock_value(msg, Purpose.StorageFee, tag=("storage", as_id)))
        self._stamp(as_id, "T_Application")
        self._set_phase(as_id, StoragePhase.Applied)
        return as_id

    def _require_dbo(self, msg: Msg, app: ApplicationForStoring) -> None:
        self.registry.require(EntityKind.DatabaseOwner, app.dboID, msg.caller)

    @transaction
    def dbo_verify_roots(self, msg: Msg, dboID: int, asID: int, MR_File: bytes, MR_EncFile: bytes) -> None:
        app = self.application(asID)
        self._require_dbo(msg, app)
        self._in_phase(asID, StoragePhase.Applied)
        self._within(app.T_Application)
        if (bytes(MR_File), bytes(MR_EncFile)) != (app.MR_File, app.MR_EncFile):
            raise RootMismatch()
        self._stamp(asID, "T_VerificationMR")
        self._set_phase(asID, StoragePhase.Verified)

    @transaction
    def storage_key_reveal(self, msg: Msg, pID: int, asID: int, key: bytes) -> None:
        app = self.application(asID)
        self.registry.require(EntityKind.Patient, app.pID, msg.caller)
        self._in_phase(asID, StoragePhase.Verified)
        self._within(app.T_VerificationMR)
        if not crypto.opens(self.treatment.medical_file(app.msID).key_hash, bytes(key)):
            raise KeyMismatch()
        self.put("as", asID, "key", bytes(key))
        self._stamp(asID, "T_KeyReveal")
        self._set_phase(asID, StoragePhase.KeyRevealed)

    @transaction
    def dbo_complain(self, msg: Msg, dboID: int, asID: int, complaint: Union[Complaint, bytes]) -> bool:
        app = self.application(asID)
        self._require_dbo(msg, app)
        self._in_phase(asID, StoragePhase.KeyRevealed)
        self._within(app.T_KeyReveal)
        valid = judge_complaint(complaint, app.MR_EncFile, app.key, app.MR_File)
        self.emit("StorageComplaintJudged", asID=asID, valid=valid)
        if valid:
            self._stamp(asID, "T_Complain")
            self.ledger.release(self.get("escrow", asID), app.dboAddr)
            self._stamp(asID, "T_UnlockingByDBO")
            self._close(asID, StoragePhase.Rejected, "patient_fault")
        else:
            # a false complaint costs the DBO its fee but the file stands
            self._stamp(asID, "T_Approval")
            self.ledger.release(self.get("escrow", asID), app.pAddr)
            self._stamp(asID, "T_UnlockingByP")
            self._close(asID, StoragePhase.Approved, "dbo_false_complaint")
        return valid

    @transaction
    def dbo_approve(self, msg: Msg, dboID: int, asID: int) -> None:
        app = self.application(asID)
        self._require_dbo(msg, app)
        self._in_phase(asID, StoragePhase.KeyRevealed)
        self._within(app.T_KeyReveal)
        self._stamp(asID, "T_Approval")
        self.ledger.release(self.get("escrow", asID), app.dboAddr)
        self._stamp(asID, "T_UnlockingByDBO")
        self._close(asID, StoragePhase.Approved, "approved")

    def deadline(self, as_id: int):
        """``(anchor, waiting_on)`` for the current phase, or None once closed."""
        app = self.application(as_id)
        return {
            StoragePhase.Applied: (app.T_Application, EntityKind.DatabaseOwner),
            StoragePhase.Verified: (app.T_VerificationMR, EntityKind.Patient),
            StoragePhase.KeyRevealed: (app.T_KeyReveal, EntityKind.DatabaseOwner),
        }.get(self.phase(as_id))

    @transaction
    def storage_withdraw(self, msg: Msg, asID: int) -> None:
        """Either party closes an application whose counterparty deadline lapsed."""
        app = self.application(asID)
        if msg.caller not in (app.pAddr, app.dboAddr):
            raise NotFileOwner("only the applicant or the DBO may withdraw")
        dl = self.deadline(asID)
        if dl is None:
            raise WrongPhase("application is closed")
        anchor, waiting_on = dl
        if not self.ledger.expired(anchor, self.ttl):
            raise NotYetExpired()
        eid = self.get("escrow", asID)
        if waiting_on == EntityKind.Patient:
            to_dbo = app.fee * self.penalty_pct // 100
            self.ledger.release_split(eid, [(app.dboAddr, to_dbo), (app.pAddr, app.fee - to_dbo)])
            outcome = "patient_fault"
        else:
            self.ledger.release(eid, app.pAddr)
            outcome = "dbo_fault"
        self._stamp(asID, "T_UnlockingByP")
        self._close(asID, StoragePhase.Aborted, outcome)

    def _close(self, as_id: int, phase: StoragePhase, outcome: str) -> None:
        self._set_phase(as_id, phase)
        self.put("outcome", as_id, outcome)
        self.emit("StorageClosed", asID=as_id, outcome=outcome)

    def is_approved(self, as_id: int) -> bool:
        return self.get("as", as_id, "T_Approval", default=0) != 0
