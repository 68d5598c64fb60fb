"""
Closed-loop protocol participants.

Each actor looks at chain state and its offline inbox and submits at most one
transaction per step. Misbehaviour is selected by the actor's strategy; an
honest actor also takes every timeout exit it is entitled to, so lapsed
deadlines are always cleaned up by whoever is waiting.
"""

from __future__ import annotations

import hashlib
from typing import Dict, Optional

from .. import crypto, fairswap
from ..crypto import KeyPair
from ..fairswap import Complaint, EncryptedEncoding
from ..insurance import ClaimStatus, enc_file_hash
from ..registry import Category, EntityKind, name_digest, patient_info_digest
from ..research import aggregate_counts, query_hash
from ..storage import StoragePhase
from ..treatment import TERMINAL, Party, Phase, h_x

CLOSED_CLAIM = (ClaimStatus.Approved, ClaimStatus.Withdrawn, ClaimStatus.Compensated)
CLOSED_STORAGE = (StoragePhase.Approved, StoragePhase.Rejected, StoragePhase.Aborted)


def flip_first_byte(data: bytes) -> bytes:
    return bytes([data[0] ^ 0x01]) + data[1:] if data else b"\x01"


def medical_record(condition: str, seed: int, eb_id: int, size: int) -> bytes:
    """Synthetic file: a condition line followed by deterministic filler."""
    head = f"condition={condition}\n".encode()
    filler = hashlib.shake_256(f"record/{seed}/{eb_id}".encode()).hexdigest(size).encode()
    return (head + filler)[:size]


def record_condition(plaintext: bytes) -> Optional[str]:
    first = plaintext.split(b"\n", 1)[0].decode(errors="replace")
    return first.split("=", 1)[1] if first.startswith("condition=") else None


class Actor:
    role = ""
    client = False
    kind: Optional[EntityKind] = None

    def __init__(self, member, world):
        self.member = member
        self.name = member.name
        self.strategy = member.strategy
        self.keys = KeyPair.from_seed(f"{world.scenario.seed}/{member.name}".encode())
        self.address = self.keys.address
        self.id: Optional[int] = None
        self.done = False
        self.facts = world.facts.setdefault(member.name, {})
        self._once: set = set()

    def once(self, tag) -> bool:
        if tag in self._once:
            return False
        self._once.add(tag)
        return True

    def is_(self, name: str, arg: Optional[str] = None) -> bool:
        return self.strategy.name == name and (arg is None or self.strategy.arg == arg)

    def call(self, world, contract: str, fn: str, value: int = 0, **kwargs):
        return world.call(self, contract, fn, value=value, **kwargs)

    def refresh_id(self, world) -> Optional[int]:
        if self.id is None and self.kind is not None:
            self.id = world.suite.registry.id_of(self.kind, self.address)
        return self.id

    def step(self, world) -> bool:
        raise NotImplementedError


# --------------------------------------------------------------------------


class Government(Actor):
    role = "government"
    client = True

    def step(self, world) -> bool:
        for actor in world.actors:
            if actor.kind in (EntityKind.DatabaseOwner, EntityKind.ResearchCommunity) and actor.refresh_id(world) is None:
                r = self.call(world, "registration", "register_entity", kind=actor.kind,
                              address=actor.address, info_digest=name_digest(actor.name))
                actor.id = r.result
                return True
        self.done = True
        return False


class PatientActor(Actor):
    role = "patient"
    client = True
    kind = EntityKind.Patient

    def __init__(self, member, world):
        super().__init__(member, world)
        self.eb: Optional[int] = None
        self.encoding: Optional[EncryptedEncoding] = None
        self.plaintext: Optional[bytes] = None
        self.as_id: Optional[int] = None
        self.po_id: Optional[int] = None
        self.purchase_started = False
        self.c_id: Optional[int] = None
        self.claim_key: Optional[bytes] = None

    @property
    def info_digest(self) -> bytes:
        a = self.member.attributes
        return patient_info_digest(a["name"], a["age"], a["mobile"], a["address"])

    def step(self, world) -> bool:
        if self.id is None:
            r = self.call(world, "registration", "register_entity", kind=EntityKind.Patient,
                          address=self.address, info_digest=self.info_digest)
            self.id = r.result
            return True
        for flow in (self._purchase, self._treatment, self._storage, self._claim):
            if flow(world):
                return True
        self.done = self._finished(world)
        return False

    # -- treatment ----------------------------------------------------------

    def _find_case(self, world) -> Optional[int]:
        if self.eb is None:
            t = world.suite.treatment
            for eb in range(1, t.case_count() + 1):
                if t.estimate(eb).pID == self.id:
                    self.eb = eb
                    break
        return self.eb

    def _treatment(self, world) -> bool:
        eb = self._find_case(world)
        if eb is None:
            return False
        t = world.suite.treatment
        case = t.case(eb)
        ph = case.phase
        if ph in TERMINAL:
            if self.once("treatment-outcome"):
                self.facts["treatment_outcome"] = t.outcome(eb)
            return False
        dl = t.deadline(eb)
        if dl is not None and dl[2] == Party.Hospital and world.lapsed(dl[0], dl[1]):
            self.call(world, "treatment", "withdraw_by_patient", ebID=eb)
            return True
        ec = case.estimate
        if ph == Phase.Estimated:
            if self.is_("NeverLock") or world.lapsed(ec.T_LockingByHA):
                return False
            self.call(world, "treatment", "lock_estimated_amount", value=ec.estimatedCost,
                      pID=self.id, hID=ec.hID, ebID=eb)
            return True
        if ph == Phase.FileCommitted:
            return self._check_commitment(world, case)
        if ph == Phase.FinalBilled:
            if self.is_("NoPay") or world.lapsed(t._bill_anchor(case.bill)):
                return False
            bill = case.bill
            if bill.finalCost > world.params["final_cost"] and not bill.T_Dispute:
                self.call(world, "treatment", "dispute_final_bill", pID=self.id, fbID=bill.fbID)
            else:
                self.call(world, "treatment", "consent_final_bill_patient", pID=self.id, fbID=bill.fbID, hID=ec.hID)
            return True
        if ph == Phase.KeyRevealed:
            if self.is_("SilentAfterReveal") or world.lapsed(case.key.t_key_reveal):
                return False
            result = fairswap.decode_and_check(self.encoding, case.key.key, case.file.mr_med_data)
            if self.is_("FalseComplaint"):
                result = fairswap.gate_complaint(self.encoding, 0)
            if isinstance(result, Complaint):
                self.call(world, "treatment", "patient_complain", pID=self.id, complaint=result.to_bytes(),
                          ebID=eb, hID=ec.hID)
            else:
                self.plaintext = result
                self.call(world, "treatment", "patient_final_consent", pID=self.id, ebID=eb, hID=ec.hID)
            return True
        return False

    def _check_commitment(self, world, case) -> bool:
        if self.is_("SilentAtVerify"):
            return False
        ms = case.file
        if world.lapsed(ms.T_SigningByHA):
            return False
        msg = world.bus.latest(self.address, "encoding", lambda p: p["ebID"] == self.eb)
        if msg is None:
            # wait for the offline copy until the last tick of the window
            if world.lapsed(ms.T_SigningByHA, offset=1):
                self.call(world, "treatment", "reject_file", ebID=self.eb)
                return True
            return False
        self.encoding = msg.payload["encrypted"]
        mine = h_x(self.id, case.estimate.T_CheckUpStart, self.encoding.m2)
        if self.encoding.m2 != ms.mr_enc_data or "verify-failed" in self._once:
            self.call(world, "treatment", "reject_file", ebID=self.eb)
            return True
        r = self.call(world, "treatment", "verify_and_give_consent", pID=self.id, msID=ms.msID,
                      H_x_recomputed=mine)
        if not r.ok:
            self._once.add("verify-failed")
            self.facts["verify_revert"] = r.reason
        return True

    # -- storage ------------------------------------------------------------

    def _storage_wanted(self, world) -> bool:
        return ("storage" in world.params["stages"] and self.eb is not None
                and world.suite.treatment.phase(self.eb) == Phase.Settled and world.dbo is not None)

    def _storage(self, world) -> bool:
        if not self._storage_wanted(world) or world.dbo.refresh_id(world) is None:
            return False
        s = world.suite.storage
        if self.as_id is None:
            ms_id = world.suite.treatment.file_of(self.eb).msID
            r = self.call(world, "storage", "apply_for_storing", value=world.params["storage_fee"],
                          pID=self.id, dboID=world.dbo.id, msID=ms_id)
            if r.ok:
                self.as_id = r.result
                enc = self.encoding
                if self.is_("TamperStoredFile"):
                    enc = enc.with_element(0, flip_first_byte(enc.cipher_elements[0]))
                world.bus.send(self.address, world.dbo.address, "store", {"asID": self.as_id, "encrypted": enc})
            return True
        ph = s.phase(self.as_id)
        app = s.application(self.as_id)
        if ph in CLOSED_STORAGE:
            if self.once("storage-outcome"):
                self.facts["storage_outcome"] = s.get("outcome", self.as_id)
            return False
        dl = s.deadline(self.as_id)
        if dl is not None and dl[1] != EntityKind.Patient and world.lapsed(dl[0]):
            self.call(world, "storage", "storage_withdraw", asID=self.as_id)
            return True
        if ph == StoragePhase.Verified and not world.lapsed(app.T_VerificationMR):
            if self.is_("ClaimUnstored") and self.po_id is not None and self.once("unstored-claim"):
                r = self._file_claim(world, 1)
                self.facts["unstored_claim"] = r.reason
                return True
            self.call(world, "storage", "storage_key_reveal", pID=self.id, asID=self.as_id,
                      key=world.suite.treatment.key_of(self.eb).key)
            return True
        return False

    # -- insurance ----------------------------------------------------------

    def _purchase(self, world) -> bool:
        ins = world.insurer
        if "insurance" not in world.params["stages"] or ins is None or not ins.ready:
            return False
        contract = world.suite.insurance
        if not self.purchase_started:
            self.purchase_started = True
            self.call(world, "insurance", "buy_policy_phase_one", value=ins.price, pID=self.id,
                      icID=ins.id, hashOfTermsAndCon=crypto.digest(ins.terms.encode()))
            return True
        pending = contract.pending(self.id, ins.id)
        if pending is not None:
            if world.lapsed(pending.t1):
                self.call(world, "insurance", "withdraw_locked_policy_buying_money", pID=self.id, icID=ins.id)
                return True
            return False
        if self.po_id is None:
            for po in range(1, contract.policy_count() + 1):
                if contract.policy(po).buyerID == self.id:
                    self.po_id = po
                    self.facts["policy"] = po
        return False

    def _file_claim(self, world, amount: int):
        self.claim_key = crypto.digest(f"claim-key/{world.scenario.seed}/{self.name}".encode())
        return self.call(world, "insurance", "claim_money", pID=self.id, poID=self.po_id, ebID=self.eb,
                         asID=self.as_id, claimedAmount=amount, comm_K=crypto.commit(self.claim_key))

    def _claim(self, world) -> bool:
        if self.po_id is None or self.as_id is None or not world.suite.storage.is_approved(self.as_id):
            return False
        ins = world.suite.insurance
        final = world.suite.treatment.bill_of(self.eb).finalCost
        if self.c_id is None:
            if self.is_("OverClaim") and self.once("overclaim"):
                r = self._file_claim(world, final + 1)
                self.facts["overclaim"] = r.reason
                return True
            amount = min(world.params["claim_amount"], final)
            if amount <= 0:
                return False
            r = self._file_claim(world, amount)
            if r.ok:
                self.c_id = r.result
                self.facts["claim"] = self.c_id
                world.bus.send(self.address, world.dbo.address, "claim_key", {"cID": self.c_id, "K": self.claim_key})
            return True
        cd = ins.claim(self.c_id)
        status = ins.status(self.c_id)
        if status in CLOSED_CLAIM:
            if self.once("claim-outcome"):
                self.facts["claim_outcome"] = status.value
            if self.is_("DuplicateClaim") and self.once("duplicate"):
                r = self._file_claim(world, 1)
                self.facts["duplicate_claim"] = r.reason
                return True
            return False
        if status == ClaimStatus.Open:
            if world.lapsed(cd.T_GeneratingClaimByP, ins.compensation_grace):
                self.call(world, "insurance", "compensate_from_security", pID=self.id, cID=self.c_id)
                return True
            return False
        if status == ClaimStatus.Locked:
            if self.is_("WithholdKey") or world.lapsed(cd.T_LockingByIC):
                return False
            self.call(world, "insurance", "reveal_secret_key", pID=self.id, cID=self.c_id, K=self.claim_key)
            return True
        if status == ClaimStatus.KeyRevealed and world.lapsed(cd.T_RevealKey):
            self.call(world, "insurance", "self_approve_claim", pID=self.id, cID=self.c_id,
                      icID=ins.policy(self.po_id).icID)
            return True
        return False

    def _finished(self, world) -> bool:
        if self.eb is None or world.suite.treatment.phase(self.eb) not in TERMINAL:
            return False
        if self._storage_wanted(world):
            if self.as_id is None or world.suite.storage.phase(self.as_id) not in CLOSED_STORAGE:
                return False
        if "insurance" in world.params["stages"] and world.insurer is not None:
            if not self.purchase_started:
                return False
            if world.suite.insurance.pending(self.id, world.insurer.id) is not None:
                return False
            if self.po_id is not None and self.as_id is not None and world.suite.storage.is_approved(self.as_id):
                if self.c_id is None or world.suite.insurance.status(self.c_id) not in CLOSED_CLAIM:
                    return False
                if self.is_("DuplicateClaim") and "duplicate" not in self._once:
                    return False
        return True


class HospitalActor(Actor):
    role = "hospital"
    kind = EntityKind.Hospital

    def __init__(self, member, world):
        super().__init__(member, world)
        self.cases: Dict[int, int] = {}
        self.committed_keys: Dict[int, bytes] = {}
        self.silent: set = set()

    def step(self, world) -> bool:
        if self.id is None:
            r = self.call(world, "registration", "register_entity", kind=EntityKind.Hospital,
                          address=self.address, info_digest=name_digest(self.name))
            self.id = r.result
            return True
        for patient in world.patients:
            if patient.id is None:
                continue
            eb = self.cases.get(patient.id)
            if eb is None:
                est = world.params["estimated_cost"]
                r = self.call(world, "treatment", "generate_estimated_cost_bill", value=est,
                              hID=self.id, pID=patient.id, estimatedCost=est)
                if r.ok:
                    self.cases[patient.id] = r.result
                return True
            if self._case(world, eb, patient):
                return True
        return False

    def _case(self, world, eb: int, patient: PatientActor) -> bool:
        t = world.suite.treatment
        ph = t.phase(eb)
        if ph in TERMINAL:
            return False
        if self.is_("SilentAtPhase") and (self.strategy.arg == ph.value or eb in self.silent):
            self.silent.add(eb)
            return False
        dl = t.deadline(eb)
        if dl is not None and dl[2] == Party.Patient and world.lapsed(dl[0], dl[1]):
            self.call(world, "treatment", "withdraw_by_hospital", ebID=eb)
            return True
        ec = t.estimate(eb)
        if ph == Phase.Locked:
            if self.is_("NeverStart") or world.lapsed(ec.T_LockingByP):
                return False
            self.call(world, "treatment", "start_treatment", hID=self.id, pID=ec.pID, ebID=eb)
            return True
        if ph == Phase.InTreatment:
            self._commit_file(world, eb, ec, patient)
            return True
        if ph == Phase.FileVerified:
            if world.lapsed(t.file_of(eb).T_VerificationByP):
                return False
            cost = world.params["final_cost"]
            if self.is_("Overcharge"):
                cost = ec.estimatedCost + 1 if self.once(("overcharge", eb)) else ec.estimatedCost
            r = self.call(world, "treatment", "discharge_and_generate_final_cost_bill",
                          hID=self.id, ebID=eb, pID=ec.pID, finalCost=cost)
            if not r.ok:
                self.facts.setdefault("reverted", []).append(r.reason)
            return True
        if ph == Phase.Disputed:
            fc = t.bill_of(eb)
            if self.is_("Overcharge") or world.lapsed(fc.T_Dispute):
                return False
            self.call(world, "treatment", "revise_final_bill", hID=self.id, fbID=fc.fbID,
                      newCost=min(fc.finalCost, world.params["final_cost"]))
            return True
        if ph == Phase.BillConsented:
            self.call(world, "treatment", "key_reveal", hID=self.id, pID=ec.pID, ebID=eb,
                      key=self.committed_keys[eb])
            return True
        return False

    def _commit_file(self, world, eb: int, ec, patient: PatientActor) -> None:
        p = world.params
        seed = world.scenario.seed
        data = medical_record(patient.member.attributes["condition"], seed, eb, p["gates"] * p["chunk_size"])
        key = crypto.digest(f"treatment-key/{seed}/{eb}".encode())
        enc = fairswap.encode(data, p["chunk_size"], key)
        encrypted = enc.encrypted
        committed = key
        if self.is_("WrongKey"):
            committed = crypto.digest(f"decoy-key/{seed}/{eb}".encode())
        if self.is_("WrongFile"):
            n = enc.props.leaf_count
            idx = int(self.strategy.arg) if self.strategy.arg else n - 1
            encrypted = encrypted.with_element(idx, flip_first_byte(encrypted.cipher_elements[idx]))
        date = ec.T_CheckUpStart + (1 if self.is_("BadEncoding") else 0)
        hx = h_x(ec.pID, date, encrypted.m2)
        self.committed_keys[eb] = committed
        world.bus.send(self.address, patient.address, "encoding", {"ebID": eb, "encrypted": encrypted})
        self.call(world, "treatment", "keep_signed_hash_to_blockchain", hID=self.id, pID=ec.pID, ebID=eb,
                  M1=enc.m1, M2=encrypted.m2, H_x=hx, sign_x=self.keys.sign(hx), sign_m1=self.keys.sign(enc.m1),
                  key_hash=crypto.commit(committed), file_props=enc.props)


class InsurerActor(Actor):
    role = "insurer"
    kind = EntityKind.InsuranceCo

    def __init__(self, member, world):
        super().__init__(member, world)
        self.ready = False
        self.terms = f"policy 1 by {self.name}: hospital bills reimbursed up to the claimed amount"
        deposit = world.params["security_deposit"]
        self.price = deposit + 1 if self.is_("OverpricedSale") else world.params["policy_price"]
        self.requested: set = set()

    def step(self, world) -> bool:
        reg = world.suite.registry
        if "insurance" not in world.params["stages"]:
            return False
        if self.id is None:
            r = self.call(world, "registration", "register_entity", kind=EntityKind.InsuranceCo,
                          address=self.address, info_digest=name_digest(self.name))
            self.id = r.result
            return True
        if reg.is_deregistered(self.id):
            self.facts["deregistered"] = True
            return False
        if self.once("deposit"):
            if world.params["security_deposit"] > 0:
                self.call(world, "registration", "deposit_security", value=world.params["security_deposit"],
                          ic_id=self.id)
                return True
        if not self.ready:
            self.ready = True
            if not self.is_("OverpricedSale"):
                self.call(world, "insurance", "declare_policy_price", icID=self.id, price=self.price)
                return True
        return self._purchases(world) or self._claims(world)

    def _purchases(self, world) -> bool:
        ins = world.suite.insurance
        for patient in world.patients:
            if patient.id is None:
                continue
            pending = ins.pending(patient.id, self.id)
            if pending is None or self.is_("IgnorePurchase") or world.lapsed(pending.t1):
                continue
            terms_hash = crypto.digest(self.terms.encode())
            if self.is_("WrongTerms"):
                if not self.once(("wrong-terms", patient.id)):
                    continue
                terms_hash = crypto.digest(b"different terms than advertised")
            r = self.call(world, "insurance", "buy_policy_phase_two", icID=self.id, pID=patient.id,
                          price=self.price, hashOfTermsAndCon=terms_hash)
            if not r.ok:
                self.facts.setdefault("reverted", []).append(r.reason)
            return True
        return False

    def _claims(self, world) -> bool:
        ins = world.suite.insurance
        for c_id in range(1, ins.claim_count() + 1):
            cd = ins.claim(c_id)
            if ins.policy(cd.poID).icID != self.id:
                continue
            status = ins.status(c_id)
            if status == ClaimStatus.Open:
                if self.is_("NeverRespond"):
                    continue
                if c_id not in self.requested:
                    self.requested.add(c_id)
                    world.bus.send(self.address, world.dbo.address, "file_request", {"cID": c_id})
                msg = world.bus.latest(self.address, "enc_file", lambda p: p["cID"] == c_id)
                if msg is None or not cd.T_DBOSign:
                    continue
                if self.is_("StealData"):
                    if self.once(("steal", c_id)):
                        self.facts["steal"] = self._try_steal(world, cd, msg.payload["chunks"])
                    continue
                self.call(world, "insurance", "lock_claimed_money", value=cd.claimedAmount, icID=self.id, cID=c_id)
                return True
            if status == ClaimStatus.Locked and world.lapsed(cd.T_LockingByIC):
                self.call(world, "insurance", "withdraw_locked_claimed_money", icID=self.id, cID=c_id)
                return True
            if status == ClaimStatus.KeyRevealed:
                if self.is_("GhostAfterSale") or world.lapsed(cd.T_RevealKey):
                    continue
                msg = world.bus.latest(self.address, "enc_file", lambda p: p["cID"] == c_id)
                valid = False
                if msg is not None:
                    plain = [crypto.sym_decrypt(cd.K, i, c) for i, c in enumerate(msg.payload["chunks"])]
                    valid = crypto.merkle_root(plain) == cd.file_root
                approved = cd.claimedAmount if valid else 0
                if self.is_("PartialApprove"):
                    approved = min(int(self.strategy.arg), cd.claimedAmount)
                self.facts.setdefault("file_valid", {})[str(c_id)] = valid
                self.call(world, "insurance", "approve_claim", icID=self.id, cID=c_id, approvedAmount=approved)
                return True
        return False

    def _try_steal(self, world, cd, chunks) -> dict:
        """Try every key the insurer can get hold of before the buyer reveals K."""
        candidates = [crypto.digest(f"treatment-key/{world.scenario.seed}/{cd.ebID}".encode()), cd.comm_K,
                      crypto.digest(self.address.encode())]
        tk = world.suite.treatment.key_of(cd.ebID)
        if tk is not None and tk.key is not None:
            candidates.append(tk.key)
        hits = 0
        for key in candidates:
            plain = [crypto.sym_decrypt(key, i, c) for i, c in enumerate(chunks)]
            hits += crypto.merkle_root(plain) == cd.file_root
        return {"keys_tried": len(candidates), "keys_verified": hits, "file_root": cd.file_root.hex(),
                "chunks": [c.hex() for c in chunks], "candidates": [k.hex() for k in candidates]}


class DBOActor(Actor):
    role = "dbo"
    kind = EntityKind.DatabaseOwner

    def __init__(self, member, world):
        super().__init__(member, world)
        self.store: Dict[str, dict] = {}
        self.facts["store"] = self.store

    def step(self, world) -> bool:
        if self.refresh_id(world) is None:
            return False
        return self._applications(world) or self._claims(world) or self._research(world)

    def _applications(self, world) -> bool:
        s = world.suite.storage
        for as_id in range(1, s.application_count() + 1):
            app = s.application(as_id)
            if app.dboID != self.id:
                continue
            ph = s.phase(as_id)
            if ph in CLOSED_STORAGE:
                continue
            dl = s.deadline(as_id)
            if dl is not None and dl[1] != EntityKind.DatabaseOwner and world.lapsed(dl[0]):
                self.call(world, "storage", "storage_withdraw", asID=as_id)
                return True
            msg = world.bus.latest(self.address, "store", lambda p: p["asID"] == as_id)
            if ph == StoragePhase.Applied:
                if world.lapsed(app.T_Application):
                    self.call(world, "storage", "storage_withdraw", asID=as_id)
                    return True
                if msg is None:
                    continue
                m2 = msg.payload["encrypted"].m2
                if m2 != app.MR_EncFile and not self.once(("mismatch", as_id)):
                    continue
                r = self.call(world, "storage", "dbo_verify_roots", dboID=self.id, asID=as_id,
                              MR_File=app.MR_File, MR_EncFile=m2)
                if not r.ok:
                    self.facts.setdefault("rejected_roots", []).append(as_id)
                return True
            if ph == StoragePhase.KeyRevealed:
                if world.lapsed(app.T_KeyReveal) or msg is None:
                    continue
                enc = msg.payload["encrypted"]
                result = fairswap.decode_and_check(enc, app.key, app.MR_File)
                if self.is_("FalseStorageComplaint") and not isinstance(result, Complaint):
                    self._keep(app, result, enc)
                    r = self.call(world, "storage", "dbo_complain", dboID=self.id, asID=as_id,
                                  complaint=fairswap.gate_complaint(enc, 0).to_bytes())
                    return True
                if isinstance(result, Complaint):
                    self.call(world, "storage", "dbo_complain", dboID=self.id, asID=as_id,
                              complaint=result.to_bytes())
                else:
                    self._keep(app, result, enc)
                    self.call(world, "storage", "dbo_approve", dboID=self.id, asID=as_id)
                return True
        return False

    def _keep(self, app, plaintext: bytes, enc) -> None:
        self.store[app.MR_File.hex()] = {
            "asID": app.asID, "msID": app.msID, "chunk_size": enc.props.chunk_size,
            "plaintext": plaintext.hex(),
        }

    def accepted(self, world) -> Dict[str, dict]:
        """Files whose storage application ended approved."""
        s = world.suite.storage
        return {k: v for k, v in self.store.items() if s.is_approved(v["asID"])}

    def _claims(self, world) -> bool:
        ins = world.suite.insurance
        reg = world.suite.registry
        for c_id in range(1, ins.claim_count() + 1):
            cd = ins.claim(c_id)
            if ins.status(c_id) != ClaimStatus.Open or cd.T_DBOSign:
                continue
            app = world.suite.storage.application(cd.asID)
            if app.dboID != self.id:
                continue
            key_msg = world.bus.latest(self.address, "claim_key", lambda p: p["cID"] == c_id)
            req = world.bus.latest(self.address, "file_request", lambda p: p["cID"] == c_id)
            if key_msg is None or req is None or not self.once(("release", c_id)):
                continue
            k = key_msg.payload["K"]
            ic_addr = req.sender
            if not crypto.opens(cd.comm_K, k) or ins.key_expired(cd.comm_K):
                self.facts.setdefault("refused", []).append(c_id)
                continue
            if not reg.has_access(app.pID, ic_addr, Category.MedicalExpenditure):
                self.facts.setdefault("refused", []).append(c_id)
                continue
            entry = self.accepted(world).get(cd.file_root.hex())
            if entry is None:
                continue
            chunks = fairswap.chunk_file(bytes.fromhex(entry["plaintext"]), entry["chunk_size"])
            cipher = [crypto.sym_encrypt(k, i, c) for i, c in enumerate(chunks)]
            digest = enc_file_hash(cipher)
            world.bus.send(self.address, ic_addr, "enc_file", {"cID": c_id, "chunks": cipher})
            self.call(world, "insurance", "keep_sig_on_hash_of_enc_file", dboID=self.id, cID=c_id,
                      hash_enc=digest, sign=self.keys.sign(digest))
            return True
        return False

    def _research(self, world) -> bool:
        res = world.suite.research
        for rd in range(1, res.request_count() + 1):
            req = res.request(rd)
            if req.dboID != self.id or req.response is not None or world.lapsed(req.t1):
                continue
            if self.is_("SilentResearch"):
                continue
            conditions = [record_condition(bytes.fromhex(e["plaintext"])) for e in self.accepted(world).values()]
            dataset = aggregate_counts(c for c in conditions if c)
            digest = crypto.digest(dataset)
            sent = dataset + b"extra=1\n" if self.is_("WrongAggregate") else dataset
            rc = world.by_kind_id(EntityKind.ResearchCommunity, req.rcID)
            world.bus.send(self.address, rc.address, "dataset", {"rdID": rd, "dataset": sent})
            self.call(world, "research", "provide_data_for_research", dboID=self.id, rdID=rd,
                      hash_Data=digest, sign=self.keys.sign(digest))
            return True
        return False


class RCActor(Actor):
    role = "rc"
    client = True
    kind = EntityKind.ResearchCommunity

    def __init__(self, member, world):
        super().__init__(member, world)
        self.rd: Optional[int] = None

    def step(self, world) -> bool:
        if "research" not in world.params["stages"]:
            self.done = True
            return False
        if self.refresh_id(world) is None or world.dbo is None or world.dbo.refresh_id(world) is None:
            return False
        if not all(p.done for p in world.patients):
            return False
        res = world.suite.research
        if self.rd is None:
            r = self.call(world, "research", "request_data_for_research", rcID=self.id, dboID=world.dbo.id,
                          hash_Query=query_hash(world.params["query"]))
            self.rd = r.result
            return True
        req = res.request(self.rd)
        if req.response is None:
            if world.lapsed(req.t1):
                self.facts["research"] = {"rdID": self.rd, "status": "unanswered"}
                self.done = True
            return False
        msg = world.bus.latest(self.address, "dataset", lambda p: p["rdID"] == self.rd)
        if msg is None:
            if world.lapsed(req.response.t2):
                self.facts["research"] = {"rdID": self.rd, "status": "missing"}
                self.done = True
            return False
        dataset = msg.payload["dataset"]
        self.facts["research"] = {
            "rdID": self.rd, "status": "delivered", "dataset": dataset.hex(),
            "accepted": res.rc_verify_delivery(self.rd, dataset),
        }
        self.done = True
        return False


ACTOR_TYPES = {
    "patient": PatientActor,
    "hospital": HospitalActor,
    "insurer": InsurerActor,
    "dbo": DBOActor,
    "rc": RCActor,
}
