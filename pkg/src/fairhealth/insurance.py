"""
Policy purchase and claim settlement between patient, insurer and DBO.

Purchase is two-phase: the buyer escrows the price next to the hash of the
terms it read, and the insurer completes the sale only by quoting the same
price and hash. A claim commits to a key K; the DBO releases the stored file
encrypted under K to the insurer, the insurer escrows the claimed amount, and
only then does the buyer publish K. The insurer approves some part of the
claim, or the buyer takes the whole escrow if the insurer stays silent.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields, replace
from typing import Optional

from . import crypto
from .errors import (
    AlreadyApproved,
    BadSignature,
    CallerMismatch,
    ClaimClosed,
    Deregistered,
    DuplicateClaim,
    DuplicatePending,
    Expired,
    HashMismatch,
    IdentityMismatch,
    KeyExpired,
    KeyMismatch,
    KeyWasRevealed,
    NoGrant,
    NoPending,
    NotLocked,
    NotStored,
    NotYetExpired,
    OverApprove,
    OverClaim,
    PriceMismatch,
    UnknownId,
    WrongPhase,
    WrongValue,
)
from .ledger import Contract, Ledger, Msg, Purpose, transaction
from .registry import Category, EntityKind, Registry
from .storage import Storage
from .treatment import Treatment


@dataclass(frozen=True)
class PendingPurchase:
    buyer: int
    icID: int
    locked_price: int
    hashOfTermsAndCon: bytes
    t1: int
    escrow: int


@dataclass(frozen=True)
class PolicyDetails:
    poID: int
    buyerID: int
    icID: int
    price: int
    T_BuyingPolicy: int
    terms_and_con_file_hash: bytes
    claimIDs: tuple = ()


@dataclass(frozen=True)
class ClaimDetails:
    cID: int
    poID: int
    ebID: int
    asID: int
    claimedAmount: int
    comm_K: bytes
    file_root: bytes
    approvedAmount: int = 0
    K: Optional[bytes] = None
    isSelfApproved: bool = False
    T_GeneratingClaimByP: int = 0
    T_DBOSign: int = 0
    T_LockingByIC: int = 0
    T_RevealKey: int = 0
    T_UnlockingByIC: int = 0
    T_Approval: int = 0
    T_Compensation: int = 0


class ClaimStatus(str, enum.Enum):
    Open = "Open"
    Locked = "Locked"
    KeyRevealed = "KeyRevealed"
    Approved = "Approved"
    Withdrawn = "Withdrawn"
    Compensated = "Compensated"


def enc_file_hash(cipher_chunks) -> bytes:
    """Digest the DBO signs over the chunk-wise encryption of a stored file."""
    return crypto.digest(b"".join(len(c).to_bytes(4, "big") + c for c in cipher_chunks))


class Insurance(Contract):
    name = "insurance"

    def __init__(self, ledger: Ledger, registry: Registry, treatment: Treatment, storage: Storage, *,
                 ttl: Optional[int] = None, compensation_grace: Optional[int] = None):
        super().__init__(ledger)
        self.registry = registry
        self.treatment = treatment
        self.storage = storage
        self.ttl = ledger.ttl if ttl is None else ttl
        self.compensation_grace = 2 * self.ttl if compensation_grace is None else compensation_grace

    # -- views --------------------------------------------------------------

    def pending(self, buyer: int, ic_id: int) -> Optional[PendingPurchase]:
        return self.get("pending", buyer, ic_id)

    def policy(self, po_id: int) -> PolicyDetails:
        base = self.get("po", po_id)
        if base is None:
            raise UnknownId(f"no policy {po_id}")
        return replace(base, claimIDs=self.get("po_claims", po_id, default=()))

    def claim(self, c_id: int) -> ClaimDetails:
        base = self.get("cd", c_id)
        if base is None:
            raise UnknownId(f"no claim {c_id}")
        stamps = {f.name: self.get("cd", c_id, f.name, default=0)
                  for f in fields(base) if f.name.startswith("T_")}
        return replace(
            base,
            approvedAmount=self.get("cd", c_id, "approvedAmount", default=0),
            K=self.get("cd", c_id, "K"),
            isSelfApproved=self.get("cd", c_id, "isSelfApproved", default=False),
            **stamps,
        )

    def status(self, c_id: int) -> ClaimStatus:
        return self.get("status", c_id, default=ClaimStatus.Open)

    def policy_count(self) -> int:
        return self.get("idgen", "po", default=0)

    def claim_count(self) -> int:
        return self.get("idgen", "c", default=0)

    def key_expired(self, comm_k: bytes) -> bool:
        return self.get("expired_key", bytes(comm_k)) is not None

    def _stamp(self, c_id: int, fld: str) -> None:
        self.put("cd", c_id, fld, self.ledger.now)

    def _set_status(self, c_id: int, status: ClaimStatus) -> None:
        self.put("status", c_id, status, mutable=True)
        self.emit("ClaimStatus", cID=c_id, status=status)

    def _open_claim(self, c_id: int) -> ClaimDetails:
        cd = self.claim(c_id)
        if self.status(c_id) in (ClaimStatus.Approved, ClaimStatus.Withdrawn, ClaimStatus.Compensated):
            raise ClaimClosed()
        return cd

    def _insurer_of(self, cd: ClaimDetails) -> int:
        return self.policy(cd.poID).icID

    # -- policy purchase ----------------------------------------------------

    @transaction
    def declare_policy_price(self, msg: Msg, icID: int, price: int) -> None:
        """Insurer announces a listed price; its deposit must cover the costliest one."""
        self.registry.require(EntityKind.InsuranceCo, icID, msg.caller)
        if price <= 0:
            raise WrongValue()
        self.registry.set_costliest(icID, price)

    @transaction
    def buy_policy_phase_one(self, msg: Msg, pID: int, icID: int, hashOfTermsAndCon: bytes) -> None:
        self.registry.require(EntityKind.Patient, pID, msg.caller)
        if self.registry.entity(EntityKind.InsuranceCo, icID) is None:
            raise UnknownId(f"no insurer {icID}")
        if self.registry.is_deregistered(icID):
            raise Deregistered()
        if self.pending(pID, icID) is not None:
            raise DuplicatePending()
        if msg.value <= 0:
            raise WrongValue("the policy price must be attached")
        eid = self.ledger.lock_value(msg, Purpose.PolicyPrice, tag=("policy", pID, icID))
        self.put("pending", pID, icID,
                 PendingPurchase(pID, icID, msg.value, bytes(hashOfTermsAndCon), self.ledger.now, eid),
                 mutable=True)

    def _close_pending(self, pending: PendingPurchase, to: str, outcome: str) -> None:
        self.ledger.release(pending.escrow, to)
        self.put("pending", pending.buyer, pending.icID, None, mutable=True)
        self.emit("PurchaseClosed", pID=pending.buyer, icID=pending.icID, outcome=outcome)

    @transaction
    def buy_policy_phase_two(self, msg: Msg, icID: int, pID: int, price: int, hashOfTermsAndCon: bytes) -> Optional[int]:
        ic = self.registry.require(EntityKind.InsuranceCo, icID, msg.caller)
        pending = self.pending(pID, icID)
        if pending is None:
            raise NoPending()
        buyer_addr = self.registry.address_of(EntityKind.Patient, pID)
        if price > self.registry.security_money(icID):
            self._close_pending(pending, buyer_addr, "insurer_deregistered")
            self.registry.deregister_insurer(icID)
            return None
        if self.ledger.expired(pending.t1, self.ttl):
            raise Expired()
        if price != pending.locked_price:
            raise PriceMismatch()
        if bytes(hashOfTermsAndCon) != pending.hashOfTermsAndCon:
            raise HashMismatch()
        self._close_pending(pending, ic.address, "sold")
        po_id = self.next_id("po")
        self.put("po", po_id, PolicyDetails(po_id, pID, icID, price, self.ledger.now, pending.hashOfTermsAndCon))
        self.put("ic_terms", po_id, bytes(hashOfTermsAndCon))
        self.emit("PolicyIssued", poID=po_id, pID=pID, icID=icID, price=price)
        return po_id

    @transaction
    def withdraw_locked_policy_buying_money(self, msg: Msg, pID: int, icID: int) -> None:
        self.registry.require(EntityKind.Patient, pID, msg.caller)
        pending = self.pending(pID, icID)
        if pending is None:
            raise NoPending()
        if not self.ledger.expired(pending.t1, self.ttl):
            raise NotYetExpired()
        self._close_pending(pending, msg.caller, "withdrawn")

    # -- claims -------------------------------------------------------------

    @transaction
    def claim_money(self, msg: Msg, pID: int, poID: int, ebID: int, asID: int,
                    claimedAmount: int, comm_K: bytes) -> int:
        self.registry.require(EntityKind.Patient, pID, msg.caller)
        pd = self.policy(poID)
        fc = self.treatment.bill_of(ebID)
        app = self.storage.application(asID)
        if fc is None:
            raise UnknownId(f"no final bill for case {ebID}")
        if not pID == pd.buyerID == fc.pID == app.pID:
            raise IdentityMismatch()
        if self.registry.is_deregistered(pd.icID):
            raise Deregistered()
        if not self.storage.is_approved(asID) or self.treatment.medical_file(app.msID).ebID != ebID:
            raise NotStored()
        if claimedAmount <= 0:
            raise WrongValue()
        if claimedAmount > fc.finalCost:
            raise OverClaim()
        if self.get("claimed", poID, ebID) is not None:
            raise DuplicateClaim()
        c_id = self.next_id("c")
        self.put("cd", c_id, ClaimDetails(c_id, poID, ebID, asID, claimedAmount, bytes(comm_K), app.MR_File))
        self._stamp(c_id, "T_GeneratingClaimByP")
        self.put("claimed", poID, ebID, c_id)
        self.put("po_claims", poID, pd.claimIDs + (c_id,), mutable=True)
        ic_addr = self.registry.address_of(EntityKind.InsuranceCo, pd.icID)
        self.registry.grant(pID, ic_addr, Category.MedicalExpenditure)
        self._set_status(c_id, ClaimStatus.Open)
        self.emit("ClaimFiled", cID=c_id, poID=poID, claimedAmount=claimedAmount)
        return c_id

    @transaction
    def keep_sig_on_hash_of_enc_file(self, msg: Msg, dboID: int, cID: int, hash_enc: bytes, sign: bytes) -> None:
        cd = self._open_claim(cID)
        app = self.storage.application(cd.asID)
        if app.dboID != dboID:
            raise CallerMismatch()
        self.registry.require(EntityKind.DatabaseOwner, dboID, msg.caller)
        ic_addr = self.registry.address_of(EntityKind.InsuranceCo, self._insurer_of(cd))
        if not self.registry.has_access(app.pID, ic_addr, Category.MedicalExpenditure):
            raise NoGrant()
        if self.key_expired(cd.comm_K):
            raise KeyExpired()
        if not crypto.verify_sig(crypto.address_key(msg.caller), bytes(hash_enc), bytes(sign)):
            raise BadSignature()
        self.put("cd", cID, "hash_enc", bytes(hash_enc))
        self.put("cd", cID, "sign_dbo", bytes(sign))
        self._stamp(cID, "T_DBOSign")
        self.put("expired_key", cd.comm_K, cID)

    @transaction
    def lock_claimed_money(self, msg: Msg, icID: int, cID: int) -> None:
        cd = self._open_claim(cID)
        if self._insurer_of(cd) != icID:
            raise CallerMismatch()
        self.registry.require(EntityKind.InsuranceCo, icID, msg.caller)
        if cd.T_LockingByIC:
            raise WrongPhase("claim already locked")
        if msg.value != cd.claimedAmount:
            raise WrongValue()
        self.put("escrow", cID, self.ledger.lock_value(msg, Purpose.ClaimLock, tag=("claim", cID)))
        self._stamp(cID, "T_LockingByIC")
        self._set_status(cID, ClaimStatus.Locked)

    @transaction
    def reveal_secret_key(self, msg: Msg, pID: int, cID: int, K: bytes) -> None:
        cd = self._open_claim(cID)
        pd = self.policy(cd.poID)
        if pd.buyerID != pID:
            raise CallerMismatch()
        self.registry.require(EntityKind.Patient, pID, msg.caller)
        if not cd.T_LockingByIC:
            raise NotLocked()
        if cd.T_RevealKey:
            raise KeyWasRevealed()
        if not crypto.opens(cd.comm_K, bytes(K)):
            raise KeyMismatch()
        if self.ledger.expired(cd.T_LockingByIC, self.ttl):
            raise Expired()
        self.put("cd", cID, "K", bytes(K))
        self._stamp(cID, "T_RevealKey")
        self._set_status(cID, ClaimStatus.KeyRevealed)

    @transaction
    def withdraw_locked_claimed_money(self, msg: Msg, icID: int, cID: int) -> None:
        cd = self._open_claim(cID)
        if self._insurer_of(cd) != icID:
            raise CallerMismatch()
        self.registry.require(EntityKind.InsuranceCo, icID, msg.caller)
        if cd.T_RevealKey:
            raise KeyWasRevealed()
        if not cd.T_LockingByIC:
            raise NotLocked()
        if not self.ledger.expired(cd.T_LockingByIC, self.ttl):
            raise NotYetExpired()
        self.ledger.release(self.get("escrow", cID), msg.caller)
        self._stamp(cID, "T_UnlockingByIC")
        self._set_status(cID, ClaimStatus.Withdrawn)

    def _settle_claim(self, cd: ClaimDetails, approved: int) -> None:
        pd = self.policy(cd.poID)
        buyer = self.registry.address_of(EntityKind.Patient, pd.buyerID)
        insurer = self.registry.address_of(EntityKind.InsuranceCo, pd.icID)
        self.ledger.release_split(self.get("escrow", cd.cID),
                                  [(buyer, approved), (insurer, cd.claimedAmount - approved)])
        self.put("cd", cd.cID, "approvedAmount", approved)
        self._stamp(cd.cID, "T_Approval")
        self._set_status(cd.cID, ClaimStatus.Approved)
        self.emit("ClaimSettled", cID=cd.cID, claimed=cd.claimedAmount, approved=approved)

    def _revealed_unapproved(self, c_id: int) -> ClaimDetails:
        cd = self.claim(c_id)
        if cd.T_Approval:
            raise AlreadyApproved()
        cd = self._open_claim(c_id)
        if not cd.T_RevealKey:
            raise WrongPhase("key not revealed yet")
        return cd

    @transaction
    def approve_claim(self, msg: Msg, icID: int, cID: int, approvedAmount: int) -> None:
        cd = self._revealed_unapproved(cID)
        if self._insurer_of(cd) != icID:
            raise CallerMismatch()
        self.registry.require(EntityKind.InsuranceCo, icID, msg.caller)
        if self.ledger.expired(cd.T_RevealKey, self.ttl):
            raise Expired()
        if not 0 <= approvedAmount <= cd.claimedAmount:
            raise OverApprove()
        self._settle_claim(cd, approvedAmount)

    @transaction
    def self_approve_claim(self, msg: Msg, pID: int, cID: int, icID: int) -> None:
        cd = self._revealed_unapproved(cID)
        pd = self.policy(cd.poID)
        if (pd.buyerID, pd.icID) != (pID, icID):
            raise CallerMismatch()
        self.registry.require(EntityKind.Patient, pID, msg.caller)
        if not self.ledger.expired(cd.T_RevealKey, self.ttl):
            raise NotYetExpired()
        self.put("cd", cID, "isSelfApproved", True)
        self._settle_claim(cd, cd.claimedAmount)

    @transaction
    def compensate_from_security(self, msg: Msg, pID: int, cID: int) -> int:
        """Refund the policy price from the insurer's deposit when it ignores a claim."""
        cd = self._open_claim(cID)
        pd = self.policy(cd.poID)
        if pd.buyerID != pID:
            raise CallerMismatch()
        self.registry.require(EntityKind.Patient, pID, msg.caller)
        if cd.T_LockingByIC:
            raise WrongPhase("insurer responded to the claim")
        if not self.ledger.expired(cd.T_GeneratingClaimByP, self.compensation_grace):
            raise NotYetExpired()
        deposit = self.registry.deposit(pd.icID)
        paid = min(pd.price, deposit.locked)
        if self.registry.is_deregistered(pd.icID):
            paid = 0
        elif deposit.locked - pd.price < deposit.costliest_policy_price or deposit.locked < pd.price:
            self.registry.deregister_insurer(pd.icID, [(msg.caller, pd.price)])
        else:
            self.registry.compensate(pd.icID, msg.caller, pd.price)
        self._stamp(cID, "T_Compensation")
        self.put("cd", cID, "compensated", paid)
        self._set_status(cID, ClaimStatus.Compensated)
        return paid
