"""
Patient / hospital treatment contract.

Both parties stake the estimated cost up front. The hospital then commits to
the medical file (Merkle roots M1/M2, a hash binding the file to the patient
and treatment start, signatures and a key commitment), bills, and reveals the
key once the patient has consented to the bill. The patient either consents,
which settles, or files a complaint that the contract judges on its own.

Every waiting step has a deadline. When it lapses the waiting party can exit
and the party that went silent absorbs the penalty.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields, replace
from typing import Optional, Union

from . import crypto, fairswap
from .errors import (
    AlreadyComplained,
    BadSignature,
    CallerMismatch,
    Expired,
    HashMismatch,
    KeyMismatch,
    NotYetExpired,
    Overcharge,
    UnknownId,
    WrongPhase,
    WrongValue,
)
from .fairswap import Complaint, FileProperties
from .ledger import Contract, Ledger, Msg, Purpose, transaction
from .registry import EntityKind, Registry


class Phase(str, enum.Enum):
    Estimated = "Estimated"
    Locked = "Locked"
    InTreatment = "InTreatment"
    FileCommitted = "FileCommitted"
    FileVerified = "FileVerified"
    FinalBilled = "FinalBilled"
    Disputed = "Disputed"
    BillConsented = "BillConsented"
    KeyRevealed = "KeyRevealed"
    Settled = "Settled"
    Aborted = "Aborted"
    Complained = "Complained"


TERMINAL = (Phase.Settled, Phase.Aborted, Phase.Complained)


class Party(str, enum.Enum):
    Patient = "Patient"
    Hospital = "Hospital"


@dataclass(frozen=True)
class EstimatedCheckUpCost:
    ebID: int
    pID: int
    hID: int
    estimatedCost: int
    T_Estimate: int = 0
    T_LockingByHA: int = 0
    T_LockingByP: int = 0
    T_CheckUpStart: int = 0
    T_UnlockingByHA: int = 0
    T_UnlockingByP: int = 0


@dataclass(frozen=True)
class FinalCheckUpCost:
    fbID: int
    ebID: int
    pID: int
    hID: int
    finalCost: int
    T_FinalBilling: int = 0
    T_Dispute: int = 0
    T_Revision: int = 0
    T_ComplaintByP: int = 0
    T_UnlockingByHA: int = 0
    T_UnlockingByP: int = 0
    T_FinalConsentByP: int = 0


@dataclass(frozen=True)
class MultiSigOnMedicalData:
    msID: int
    ebID: int
    pID: int
    hID: int
    mr_med_data: bytes
    mr_enc_data: bytes
    h_x: bytes
    sign_x: bytes
    sign_m1: bytes
    key_hash: bytes
    file_props: Optional[FileProperties] = None
    T_SigningByHA: int = 0
    T_VerificationByP: int = 0


@dataclass(frozen=True)
class CaseView:
    """Everything known about one treatment, assembled from chain records."""

    phase: Phase
    estimate: EstimatedCheckUpCost
    bill: Optional[FinalCheckUpCost]
    file: Optional[MultiSigOnMedicalData]
    T_BillConsent: int
    key: Optional[fairswap.KeyAndExchange]


def h_x(p_id: int, date: int, m2: bytes) -> bytes:
    """Hash binding the encrypted file to the patient and treatment start tick."""
    return crypto.digest(p_id.to_bytes(8, "big") + date.to_bytes(8, "big") + m2)


class Treatment(Contract):
    name = "treatment"

    def __init__(self, ledger: Ledger, registry: Registry, *, ttl: Optional[int] = None,
                 penalty_pct: int = 100, treatment_deadline: Optional[int] = None):
        super().__init__(ledger)
        if not 0 <= penalty_pct <= 100:
            raise ValueError("penalty_pct must be within 0..100")
        self.registry = registry
        self.ttl = ledger.ttl if ttl is None else ttl
        self.penalty_pct = penalty_pct
        self.treatment_deadline = treatment_deadline

    # -- record helpers -----------------------------------------------------

    def _stamp(self, kind: str, rec_id: int, fld: str) -> None:
        self.put(kind, rec_id, fld, self.ledger.now)

    def _t(self, kind: str, rec_id: int, fld: str) -> int:
        return self.get(kind, rec_id, fld, default=0)

    def _with_times(self, base, kind: str, rec_id: int):
        stamps = {f.name: self._t(kind, rec_id, f.name) for f in fields(base) if f.name.startswith("T_")}
        return replace(base, **stamps)

    def phase(self, eb_id: int) -> Phase:
        ph = self.get("phase", eb_id)
        if ph is None:
            raise UnknownId(f"no estimate bill {eb_id}")
        return ph

    def _set_phase(self, eb_id: int, phase: Phase) -> None:
        self.put("phase", eb_id, phase, mutable=True)
        self.emit("Phase", ebID=eb_id, phase=phase)

    def estimate(self, eb_id: int) -> EstimatedCheckUpCost:
        base = self.get("ec", eb_id)
        if base is None:
            raise UnknownId(f"no estimate bill {eb_id}")
        return self._with_times(base, "ec", eb_id)

    def bill(self, fb_id: int) -> FinalCheckUpCost:
        base = self.get("fc", fb_id)
        if base is None:
            raise UnknownId(f"no final bill {fb_id}")
        base = replace(base, finalCost=self.get("final_cost", fb_id))
        return self._with_times(base, "fc", fb_id)

    def medical_file(self, ms_id: int) -> MultiSigOnMedicalData:
        base = self.get("ms", ms_id)
        if base is None:
            raise UnknownId(f"no medical file {ms_id}")
        return self._with_times(base, "ms", ms_id)

    def bill_of(self, eb_id: int) -> Optional[FinalCheckUpCost]:
        fb_id = self.get("fb_of", eb_id)
        return None if fb_id is None else self.bill(fb_id)

    def file_of(self, eb_id: int) -> Optional[MultiSigOnMedicalData]:
        ms_id = self.get("ms_of", eb_id)
        return None if ms_id is None else self.medical_file(ms_id)

    def key_of(self, eb_id: int) -> Optional[fairswap.KeyAndExchange]:
        ms = self.file_of(eb_id)
        if ms is None:
            return None
        key = self.get("key", eb_id)
        return fairswap.KeyAndExchange(ms.key_hash, key, self._t("case", eb_id, "T_KeyReveal"))

    def case(self, eb_id: int) -> CaseView:
        return CaseView(
            self.phase(eb_id), self.estimate(eb_id), self.bill_of(eb_id), self.file_of(eb_id),
            self._t("case", eb_id, "T_BillConsent"), self.key_of(eb_id),
        )

    def case_count(self) -> int:
        return self.get("idgen", "eb", default=0)

    def _require_patient(self, msg: Msg, ec: EstimatedCheckUpCost) -> None:
        self.registry.require(EntityKind.Patient, ec.pID, msg.caller)

    def _require_hospital(self, msg: Msg, ec: EstimatedCheckUpCost) -> None:
        self.registry.require(EntityKind.Hospital, ec.hID, msg.caller)

    def _in_phase(self, eb_id: int, *phases: Phase) -> None:
        if self.phase(eb_id) not in phases:
            raise WrongPhase(f"case {eb_id} is {self.phase(eb_id).value}")

    def _within(self, anchor: int, ttl: Optional[int] = None) -> None:
        if self.ledger.expired(anchor, self.ttl if ttl is None else ttl):
            raise Expired()

    # -- pre-treatment ------------------------------------------------------

    @transaction
    def generate_estimated_cost_bill(self, msg: Msg, hID: int, pID: int, estimatedCost: int) -> int:
        self.registry.require(EntityKind.Hospital, hID, msg.caller)
        if self.registry.entity(EntityKind.Patient, pID) is None:
            raise UnknownId(f"no patient {pID}")
        if estimatedCost <= 0 or msg.value != estimatedCost:
            raise WrongValue()
        eb_id = self.next_id("eb")
        self.put("ec", eb_id, EstimatedCheckUpCost(eb_id, pID, hID, estimatedCost))
        self._stamp("ec", eb_id, "T_Estimate")
        self._stamp("ec", eb_id, "T_LockingByHA")
        self.put("escrow", eb_id, Party.Hospital, self.ledger.lock_value(
            msg, Purpose.EstimatedByHA, tag=("treatment", eb_id)))
        self._set_phase(eb_id, Phase.Estimated)
        return eb_id

    @transaction
    def lock_estimated_amount(self, msg: Msg, pID: int, hID: int, ebID: int) -> None:
        ec = self.estimate(ebID)
        self._require_patient(msg, ec)
        if (ec.pID, ec.hID) != (pID, hID):
            raise CallerMismatch()
        self._in_phase(ebID, Phase.Estimated)
        self._within(ec.T_LockingByHA)
        if msg.value != ec.estimatedCost:
            raise WrongValue()
        self.put("escrow", ebID, Party.Patient, self.ledger.lock_value(
            msg, Purpose.EstimatedByP, tag=("treatment", ebID)))
        self._stamp("ec", ebID, "T_LockingByP")
        self._set_phase(ebID, Phase.Locked)

    # -- treatment and medical file ----------------------------------------

    @transaction
    def start_treatment(self, msg: Msg, hID: int, pID: int, ebID: int) -> None:
        ec = self.estimate(ebID)
        self._require_hospital(msg, ec)
        self._in_phase(ebID, Phase.Locked)
        self._within(ec.T_LockingByP)
        self._stamp("ec", ebID, "T_CheckUpStart")
        self._set_phase(ebID, Phase.InTreatment)

    @transaction
    def keep_signed_hash_to_blockchain(self, msg: Msg, hID: int, pID: int, ebID: int, M1: bytes, M2: bytes,
                                       H_x: bytes, sign_x: bytes, sign_m1: bytes, key_hash: bytes,
                                       file_props: Optional[FileProperties] = None) -> int:
        ec = self.estimate(ebID)
        self._require_hospital(msg, ec)
        if ec.pID != pID:
            raise CallerMismatch()
        self._in_phase(ebID, Phase.InTreatment)
        if self.treatment_deadline is not None:
            self._within(ec.T_CheckUpStart, self.treatment_deadline)
        ms_id = self.next_id("ms")
        self.put("ms", ms_id, MultiSigOnMedicalData(
            ms_id, ebID, pID, hID, bytes(M1), bytes(M2), bytes(H_x), bytes(sign_x), bytes(sign_m1),
            bytes(key_hash), file_props))
        self._stamp("ms", ms_id, "T_SigningByHA")
        self.put("ms_of", ebID, ms_id)
        self._set_phase(ebID, Phase.FileCommitted)
        return ms_id

    def commitment_is_sound(self, ms: MultiSigOnMedicalData) -> bool:
        """True when the stored hash and both signatures check out against chain data."""
        ec = self.estimate(ms.ebID)
        vk = crypto.address_key(self.registry.address_of(EntityKind.Hospital, ms.hID))
        return (
            h_x(ms.pID, ec.T_CheckUpStart, ms.mr_enc_data) == ms.h_x
            and crypto.verify_sig(vk, ms.h_x, ms.sign_x)
            and crypto.verify_sig(vk, ms.mr_med_data, ms.sign_m1)
        )

    @transaction
    def verify_and_give_consent(self, msg: Msg, pID: int, msID: int, H_x_recomputed: bytes) -> None:
        ms = self.medical_file(msID)
        ec = self.estimate(ms.ebID)
        self._require_patient(msg, ec)
        self._in_phase(ms.ebID, Phase.FileCommitted)
        self._within(ms.T_SigningByHA)
        if bytes(H_x_recomputed) != ms.h_x:
            raise HashMismatch()
        vk = crypto.address_key(self.registry.address_of(EntityKind.Hospital, ms.hID))
        if not (crypto.verify_sig(vk, ms.h_x, ms.sign_x) and crypto.verify_sig(vk, ms.mr_med_data, ms.sign_m1)):
            raise BadSignature()
        self._stamp("ms", msID, "T_VerificationByP")
        self._set_phase(ms.ebID, Phase.FileVerified)

    @transaction
    def reject_file(self, msg: Msg, ebID: int) -> bool:
        """Patient refuses the committed file instead of consenting.

        A commitment that fails its own on-chain checks is the hospital's
        fault. Otherwise the mismatch concerns only the offline copy, which
        the chain cannot judge, so both stakes are returned.
        """
        ec = self.estimate(ebID)
        self._require_patient(msg, ec)
        self._in_phase(ebID, Phase.FileCommitted)
        ms = self.file_of(ebID)
        self._within(ms.T_SigningByHA)
        provable = not self.commitment_is_sound(ms)
        if provable:
            self._exit(ebID, fault=Party.Hospital)
        else:
            self._refund_both(ebID)
        self.emit("FileRejected", ebID=ebID, provable=provable)
        return provable

    # -- billing ------------------------------------------------------------

    @transaction
    def discharge_and_generate_final_cost_bill(self, msg: Msg, hID: int, ebID: int, pID: int, finalCost: int) -> int:
        ec = self.estimate(ebID)
        self._require_hospital(msg, ec)
        if ec.pID != pID:
            raise CallerMismatch()
        self._in_phase(ebID, Phase.FileVerified)
        self._within(self.file_of(ebID).T_VerificationByP)
        if finalCost < 0:
            raise WrongValue()
        if finalCost > ec.estimatedCost:
            raise Overcharge()
        fb_id = self.next_id("fb")
        self.put("fc", fb_id, FinalCheckUpCost(fb_id, ebID, pID, hID, finalCost))
        self.put("final_cost", fb_id, finalCost, mutable=True)
        self._stamp("fc", fb_id, "T_FinalBilling")
        self.put("fb_of", ebID, fb_id)
        self._set_phase(ebID, Phase.FinalBilled)
        return fb_id

    def _bill_anchor(self, fc: FinalCheckUpCost) -> int:
        return max(fc.T_FinalBilling, fc.T_Revision)

    @transaction
    def dispute_final_bill(self, msg: Msg, pID: int, fbID: int) -> None:
        fc = self.bill(fbID)
        self._require_patient(msg, self.estimate(fc.ebID))
        self._in_phase(fc.ebID, Phase.FinalBilled)
        if fc.T_Dispute:
            raise WrongPhase("the bill was already disputed once")
        self._within(self._bill_anchor(fc))
        self._stamp("fc", fbID, "T_Dispute")
        self._set_phase(fc.ebID, Phase.Disputed)

    @transaction
    def revise_final_bill(self, msg: Msg, hID: int, fbID: int, newCost: int) -> None:
        fc = self.bill(fbID)
        self._require_hospital(msg, self.estimate(fc.ebID))
        self._in_phase(fc.ebID, Phase.Disputed)
        self._within(fc.T_Dispute)
        if newCost < 0:
            raise WrongValue()
        if newCost > fc.finalCost:
            raise Overcharge("revised cost exceeds the disputed bill")
        self.put("final_cost", fbID, newCost, mutable=True)
        self._stamp("fc", fbID, "T_Revision")
        self._set_phase(fc.ebID, Phase.FinalBilled)

    @transaction
    def consent_final_bill_patient(self, msg: Msg, pID: int, fbID: int, hID: int) -> None:
        fc = self.bill(fbID)
        self._require_patient(msg, self.estimate(fc.ebID))
        self._in_phase(fc.ebID, Phase.FinalBilled)
        self._within(self._bill_anchor(fc))
        self._stamp("case", fc.ebID, "T_BillConsent")
        self._set_phase(fc.ebID, Phase.BillConsented)

    # -- key release and settlement ----------------------------------------

    @transaction
    def key_reveal(self, msg: Msg, hID: int, pID: int, ebID: int, key: bytes) -> None:
        ec = self.estimate(ebID)
        self._require_hospital(msg, ec)
        self._in_phase(ebID, Phase.BillConsented)
        self._within(self._t("case", ebID, "T_BillConsent"))
        if not crypto.opens(self.file_of(ebID).key_hash, bytes(key)):
            raise KeyMismatch()
        self.put("key", ebID, bytes(key))
        self._stamp("case", ebID, "T_KeyReveal")
        self._set_phase(ebID, Phase.KeyRevealed)

    @transaction
    def patient_final_consent(self, msg: Msg, pID: int, ebID: int, hID: int) -> None:
        ec = self.estimate(ebID)
        self._require_patient(msg, ec)
        fc = self.bill_of(ebID)
        if fc is not None and fc.T_ComplaintByP:
            raise AlreadyComplained()
        self._in_phase(ebID, Phase.KeyRevealed)
        self._within(self._t("case", ebID, "T_KeyReveal"))
        self._stamp("fc", fc.fbID, "T_FinalConsentByP")
        self._settle(ebID)

    @transaction
    def patient_complain(self, msg: Msg, pID: int, complaint: Union[Complaint, bytes], ebID: int, hID: int) -> bool:
        ec = self.estimate(ebID)
        self._require_patient(msg, ec)
        fc = self.bill_of(ebID)
        if fc is not None and fc.T_ComplaintByP:
            raise AlreadyComplained()
        self._in_phase(ebID, Phase.KeyRevealed)
        self._within(self._t("case", ebID, "T_KeyReveal"))
        self._stamp("fc", fc.fbID, "T_ComplaintByP")
        ms = self.file_of(ebID)
        valid = judge_complaint(complaint, ms.mr_enc_data, self.get("key", ebID), ms.mr_med_data)
        self.emit("ComplaintJudged", ebID=ebID, valid=valid)
        if valid:
            self._pay(ebID, to_patient_from_h=ec.estimatedCost, to_patient_from_p=ec.estimatedCost)
            self._set_phase(ebID, Phase.Complained)
            self._outcome(ebID, "hospital_fault")
        else:
            self._settle(ebID)
        return valid

    # -- exits --------------------------------------------------------------

    def deadline(self, eb_id: int):
        """``(anchor, ttl, waiting_on)`` for the current phase, or None."""
        ph = self.phase(eb_id)
        ec = self.estimate(eb_id)
        fc, ms = self.bill_of(eb_id), self.file_of(eb_id)
        table = {
            Phase.Estimated: lambda: (ec.T_LockingByHA, self.ttl, Party.Patient),
            Phase.Locked: lambda: (ec.T_LockingByP, self.ttl, Party.Hospital),
            Phase.InTreatment: lambda: (
                None if self.treatment_deadline is None
                else (ec.T_CheckUpStart, self.treatment_deadline, Party.Hospital)),
            Phase.FileCommitted: lambda: (ms.T_SigningByHA, self.ttl, Party.Patient),
            Phase.FileVerified: lambda: (ms.T_VerificationByP, self.ttl, Party.Hospital),
            Phase.FinalBilled: lambda: (self._bill_anchor(fc), self.ttl, Party.Patient),
            Phase.Disputed: lambda: (fc.T_Dispute, self.ttl, Party.Hospital),
            Phase.BillConsented: lambda: (self._t("case", eb_id, "T_BillConsent"), self.ttl, Party.Hospital),
            Phase.KeyRevealed: lambda: (self._t("case", eb_id, "T_KeyReveal"), self.ttl, Party.Patient),
        }
        entry = table.get(ph)
        return None if entry is None else entry()

    def _withdraw(self, msg: Msg, eb_id: int, who: Party) -> None:
        ec = self.estimate(eb_id)
        if who == Party.Patient:
            self._require_patient(msg, ec)
        else:
            self._require_hospital(msg, ec)
        dl = self.deadline(eb_id)
        if dl is None:
            raise WrongPhase(f"no exit from {self.phase(eb_id).value}")
        anchor, ttl, waiting_on = dl
        if waiting_on == who:
            raise WrongPhase("the caller is the party that has to act")
        if not self.ledger.expired(anchor, ttl):
            raise NotYetExpired()
        if self.phase(eb_id) == Phase.Estimated:
            self.ledger.release(self.get("escrow", eb_id, Party.Hospital), msg.caller)
            self._stamp("ec", eb_id, "T_UnlockingByHA")
            self._set_phase(eb_id, Phase.Aborted)
            self._outcome(eb_id, "unlocked")
            return
        self._exit(eb_id, fault=waiting_on)

    @transaction
    def withdraw_by_patient(self, msg: Msg, ebID: int) -> None:
        self._withdraw(msg, ebID, Party.Patient)

    @transaction
    def withdraw_by_hospital(self, msg: Msg, ebID: int) -> None:
        self._withdraw(msg, ebID, Party.Hospital)

    # -- payouts ------------------------------------------------------------

    def _outcome(self, eb_id: int, outcome: str) -> None:
        self.put("outcome", eb_id, outcome)
        ec = self.estimate(eb_id)
        fc = self.bill_of(eb_id)
        self.emit("CaseClosed", ebID=eb_id, outcome=outcome, pID=ec.pID, hID=ec.hID,
                  estimatedCost=ec.estimatedCost, finalCost=None if fc is None else fc.finalCost)

    def outcome(self, eb_id: int) -> Optional[str]:
        return self.get("outcome", eb_id)

    def _pay(self, eb_id: int, *, to_patient_from_h: int, to_patient_from_p: int) -> None:
        """Close both stakes; whatever the patient does not get goes to the hospital."""
        ec = self.estimate(eb_id)
        p_addr = self.registry.address_of(EntityKind.Patient, ec.pID)
        h_addr = self.registry.address_of(EntityKind.Hospital, ec.hID)
        est = ec.estimatedCost
        self.ledger.release_split(self.get("escrow", eb_id, Party.Hospital),
                                  [(p_addr, to_patient_from_h), (h_addr, est - to_patient_from_h)])
        self.ledger.release_split(self.get("escrow", eb_id, Party.Patient),
                                  [(p_addr, to_patient_from_p), (h_addr, est - to_patient_from_p)])
        self._stamp("ec", eb_id, "T_UnlockingByHA")
        self._stamp("ec", eb_id, "T_UnlockingByP")

    def _settle(self, eb_id: int) -> None:
        ec = self.estimate(eb_id)
        final = self.bill_of(eb_id).finalCost
        self._pay(eb_id, to_patient_from_h=0, to_patient_from_p=ec.estimatedCost - final)
        self._set_phase(eb_id, Phase.Settled)
        self._outcome(eb_id, "settled")

    def _refund_both(self, eb_id: int) -> None:
        ec = self.estimate(eb_id)
        self._pay(eb_id, to_patient_from_h=0, to_patient_from_p=ec.estimatedCost)
        self._set_phase(eb_id, Phase.Aborted)
        self._outcome(eb_id, "mutual_refund")

    def _exit(self, eb_id: int, fault: Party) -> None:
        ec = self.estimate(eb_id)
        est = ec.estimatedCost
        penalty = est * self.penalty_pct // 100
        if fault == Party.Hospital:
            self._pay(eb_id, to_patient_from_h=penalty, to_patient_from_p=est)
            self._outcome(eb_id, "hospital_fault")
        else:
            fc = self.bill_of(eb_id)
            billed = fc.finalCost if fc is not None else 0
            take = min(est, max(billed, penalty))
            self._pay(eb_id, to_patient_from_h=0, to_patient_from_p=est - take)
            self._outcome(eb_id, "patient_fault")
        self._set_phase(eb_id, Phase.Aborted)


def judge_complaint(complaint, m2: bytes, key: bytes, m1: bytes) -> bool:
    """Run the on-chain complaint check; malformed input is simply an invalid complaint."""
    if isinstance(complaint, (bytes, bytearray)):
        try:
            complaint = Complaint.from_bytes(bytes(complaint))
        except (ValueError, crypto.CryptoError):
            return False
    if not isinstance(complaint, Complaint):
        return False
    try:
        return fairswap.verify_complaint(complaint, m2, key, m1)
    except (ValueError, TypeError, IndexError):
        return False
