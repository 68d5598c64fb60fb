"""
Mechanical checks over a run report.

Every verdict is computed from the report alone (trace, chain records, bus
summary and actor facts), so a saved report can be re-audited later. Fairness
predicates are evaluated only for parties playing the Honest strategy.
"""

from __future__ import annotations

import re
from collections import defaultdict
from typing import Dict, Iterable, List, Optional

from .. import crypto
from ..research import aggregate_counts

ID_PATTERN = re.compile(r"(?i)\b(p_?id|patient_?id|pid)\b")
MIN_ATTRIBUTE_LEN = 4


class Verdicts:
    def __init__(self):
        self.failures: Dict[str, List[dict]] = defaultdict(list)

    def fail(self, prop: str, tick: Optional[int], reason: str) -> None:
        self.failures[prop].append({"tick": tick, "reason": reason})

    def result(self, names: Iterable[str]) -> dict:
        return {n: {"passed": not self.failures.get(n), "counterexample": self.failures.get(n, [])[:5]}
                for n in names}


class View:
    """Indexes over a report used by the individual checks."""

    def __init__(self, report: dict):
        self.report = report
        self.params = report["scenario"]["params"]
        self.cast = report["cast"]
        self.by_address = {c["address"]: c for c in self.cast}
        self.records = {k: v["value"] for k, v in report["chain_records"].items()}
        self.ok = [r for r in report["trace"] if r["status"] == "success"]
        self.events = [(r["tick"], r, e) for r in self.ok for e in r["events"]]
        self.ids: Dict[tuple, str] = {}
        for _, _, e in self.named("Registered"):
            self.ids[(e["kind"], e["id"])] = e["address"]
        # escrow flows per tag family: tag -> address -> net amount
        self.flows: Dict[tuple, Dict[str, int]] = defaultdict(lambda: defaultdict(int))
        for _, _, e in self.events:
            if e["name"] == "Locked":
                self.flows[tuple(e["tag"])][e["payer"]] -= e["amount"]
            elif e["name"] == "Released":
                self.flows[tuple(e["tag"])][e["to"]] += e["amount"]

    def named(self, name: str):
        return [(t, r, e) for t, r, e in self.events if e["name"] == name]

    def honest(self, address: Optional[str]) -> bool:
        member = self.by_address.get(address)
        return member is not None and member["strategy"] == "Honest"

    def addr(self, kind: str, entity_id) -> Optional[str]:
        return self.ids.get((kind, entity_id))

    def record(self, *key):
        return self.records.get("/".join(str(k) for k in key))

    def net(self, tag: tuple, address: str) -> int:
        return self.flows.get(tag, {}).get(address, 0)

    def facts(self, name: str) -> dict:
        return self.report["facts"].get(name, {})


# --------------------------------------------------------------------------
# fairness


def check_treatment(v: View, out: Verdicts) -> None:
    for tick, _, e in v.named("CaseClosed"):
        eb, outcome = e["ebID"], e["outcome"]
        p_addr, h_addr = v.addr("Patient", e["pID"]), v.addr("Hospital", e["hID"])
        tag = ("treatment", eb)
        final = e["finalCost"] or 0
        p_net, h_net = v.net(tag, p_addr), v.net(tag, h_addr)
        if p_net + h_net != 0:
            out.fail("conservation", tick, f"case {eb} escrows leak {p_net + h_net}")
        if v.honest(p_addr):
            if outcome == "patient_fault":
                out.fail("P1_patient_fairness", tick, f"honest patient blamed in case {eb}")
            elif outcome == "settled" and p_net != -final:
                out.fail("P1_patient_fairness", tick, f"case {eb}: patient paid {-p_net}, bill was {final}")
            elif outcome != "settled" and p_net < 0:
                out.fail("P1_patient_fairness", tick, f"case {eb} ({outcome}): patient lost {-p_net}")
            if outcome == "hospital_fault" and h_net > 0:
                out.fail("P1_patient_fairness", tick, f"case {eb}: faulty hospital profited {h_net}")
        if v.honest(h_addr):
            if outcome == "hospital_fault":
                out.fail("P2_provider_fairness", tick, f"honest hospital blamed in case {eb}")
            elif outcome == "settled" and h_net != final:
                out.fail("P2_provider_fairness", tick, f"case {eb}: hospital got {h_net}, bill was {final}")
            elif outcome == "patient_fault" and h_net < final:
                out.fail("P2_provider_fairness", tick, f"case {eb}: hospital got {h_net} < billed {final}")
            elif outcome in ("mutual_refund", "unlocked") and h_net != 0:
                out.fail("P2_provider_fairness", tick, f"case {eb} ({outcome}): hospital net {h_net}")


def check_storage(v: View, out: Verdicts) -> None:
    for tick, _, e in v.named("StorageClosed"):
        as_id, outcome = e["asID"], e["outcome"]
        app = v.record("storage", "as", as_id)
        tag = ("storage", as_id)
        p_net, d_net = v.net(tag, app["pAddr"]), v.net(tag, app["dboAddr"])
        fee = app["fee"]
        if v.honest(app["pAddr"]):
            if outcome == "patient_fault":
                out.fail("P1_patient_fairness", tick, f"honest patient lost storage application {as_id}")
            elif outcome == "approved" and p_net != -fee:
                out.fail("P1_patient_fairness", tick, f"storage {as_id}: patient paid {-p_net}, fee {fee}")
            elif outcome != "approved" and p_net != 0:
                out.fail("P1_patient_fairness", tick, f"storage {as_id} ({outcome}): patient net {p_net}")
        if v.honest(app["dboAddr"]):
            if outcome == "dbo_false_complaint" or d_net < 0:
                out.fail("P2_provider_fairness", tick, f"honest DBO penalised on storage {as_id}")
            elif outcome == "approved" and d_net != fee:
                out.fail("P2_provider_fairness", tick, f"storage {as_id}: DBO got {d_net}, fee {fee}")


def check_insurance(v: View, out: Verdicts) -> None:
    issued = {(e["pID"], e["icID"]): e for _, _, e in v.named("PolicyIssued")}
    for tick, r, e in v.named("PurchaseClosed"):
        p_addr, i_addr = v.addr("Patient", e["pID"]), v.addr("InsuranceCo", e["icID"])
        tag = ("policy", e["pID"], e["icID"])
        policy = issued.get((e["pID"], e["icID"]))
        if e["outcome"] == "sold":
            price = policy["price"] if policy else None
            if policy is None:
                out.fail("P3_insurer_fairness", tick, f"sale to patient {e['pID']} issued no policy")
            if v.honest(i_addr) and v.net(tag, i_addr) != price:
                out.fail("P3_insurer_fairness", tick, f"insurer received {v.net(tag, i_addr)} for price {price}")
            if v.honest(p_addr) and v.net(tag, p_addr) != -(price or 0):
                out.fail("P1_patient_fairness", tick, f"patient paid {-v.net(tag, p_addr)} for price {price}")
        elif v.honest(p_addr) and v.net(tag, p_addr) != 0:
            out.fail("P1_patient_fairness", tick, f"unsold policy cost the patient {-v.net(tag, p_addr)}")
    for (p_id, ic_id), policy in issued.items():
        if not any(e["outcome"] == "sold" and (e["pID"], e["icID"]) == (p_id, ic_id)
                   for _, _, e in v.named("PurchaseClosed")):
            out.fail("P3_insurer_fairness", None, f"policy {policy['poID']} issued without payment")

    deposit = v.params["security_deposit"]
    paid_from_deposit: Dict[str, int] = defaultdict(int)
    for r in v.ok:
        if r["function"] == "compensate_from_security":
            for e in r["events"]:
                if e["name"] == "Released" and e["purpose"] == "SecurityDeposit":
                    paid_from_deposit[(r["tick"], e["to"])] += e["amount"]
    claims = v.report["record_timeline"]
    for key in sorted(k for k in claims if re.fullmatch(r"insurance/cd/\d+", k)):
        c_id = int(key.rsplit("/", 1)[1])
        cd = v.record("insurance", "cd", c_id)
        po = v.record("insurance", "po", cd["poID"])
        status = v.record("insurance", "status", c_id)
        p_addr, i_addr = v.addr("Patient", po["buyerID"]), v.addr("InsuranceCo", po["icID"])
        fc = next((val for k, val in v.records.items()
                   if re.fullmatch(r"treatment/fc/\d+", k) and val["ebID"] == cd["ebID"]), None)
        final = v.record("treatment", "final_cost", fc["fbID"]) if fc else 0
        tag = ("claim", c_id)
        if cd["claimedAmount"] > final:
            out.fail("P3_insurer_fairness", None, f"claim {c_id} for {cd['claimedAmount']} exceeds bill {final}")
        settled = [e for _, _, e in v.named("ClaimSettled") if e["cID"] == c_id]
        if status == "Approved":
            approved = settled[0]["approved"]
            if v.net(tag, p_addr) != approved:
                out.fail("P1_patient_fairness", None, f"claim {c_id}: buyer got {v.net(tag, p_addr)} of {approved}")
            if v.net(tag, i_addr) != -approved:
                out.fail("P3_insurer_fairness", None, f"claim {c_id}: insurer out {-v.net(tag, i_addr)} for {approved}")
        elif status == "Withdrawn":
            if v.honest(p_addr):
                out.fail("P1_patient_fairness", None, f"honest buyer's claim {c_id} was withdrawn")
            if v.net(tag, i_addr) != 0:
                out.fail("P3_insurer_fairness", None, f"withdrawn claim {c_id} cost the insurer")
        elif status == "Compensated":
            got = sum(a for (t, to), a in paid_from_deposit.items() if to == p_addr)
            if v.honest(p_addr) and got < min(po["price"], deposit) and not v.honest(i_addr):
                out.fail("P1_patient_fairness", None, f"claim {c_id}: compensation {got} below price")
            if got > po["price"]:
                out.fail("P3_insurer_fairness", None, f"claim {c_id}: compensation {got} above price")
        elif v.honest(p_addr):
            out.fail("P1_patient_fairness", None, f"claim {c_id} left {status}")
    steal = v.facts(_name_of(v, "insurer")).get("steal") if _name_of(v, "insurer") else None
    if steal and steal["keys_verified"]:
        out.fail("P5_privacy", None, "insurer decrypted the claim file before the key reveal")


def _name_of(v: View, role: str) -> Optional[str]:
    return next((c["name"] for c in v.cast if c["role"] == role), None)


def check_research(v: View, out: Verdicts) -> None:
    stored = set()
    for c in v.cast:
        if c["role"] == "patient" and v.facts(c["name"]).get("storage_outcome") in ("approved", "dbo_false_complaint"):
            stored.add(c["name"])
    conditions = [m["attributes"]["condition"] for m in v.report["scenario"]["cast"] if m["name"] in stored]
    expected = aggregate_counts(conditions)
    for c in v.cast:
        if c["role"] != "rc":
            continue
        fact = v.facts(c["name"]).get("research")
        if fact is None or fact["status"] != "delivered":
            continue
        rd = fact["rdID"]
        dataset = bytes.fromhex(fact["dataset"])
        req = v.record("research", "rd", rd)
        resp = v.record("research", "rd", rd, "response")
        dbo_addr = v.addr("DatabaseOwner", req["dboID"])
        h = bytes.fromhex(resp["hash_Data"][2:])
        genuine = crypto.digest(dataset) == h and crypto.verify_sig(
            crypto.address_key(dbo_addr), h, bytes.fromhex(resp["sign"][2:]))
        if fact["accepted"] != genuine:
            out.fail("P4_research_integrity", None, f"request {rd}: RC acceptance disagrees with the chain")
        if fact["accepted"] and dataset != expected:
            out.fail("P4_research_integrity", None, f"request {rd}: RC accepted a wrong aggregate")
        if v.honest(dbo_addr) and not fact["accepted"] and not _faulted(v, "dataset"):
            out.fail("P4_research_integrity", None, f"request {rd}: honest DBO delivery refused")


def _faulted(v: View, kind: str) -> bool:
    return any(f["message"] == kind for f in v.report["scenario"]["faults"])


# --------------------------------------------------------------------------
# privacy and immutability


def _needles(values: Iterable[str]) -> List[bytes]:
    found = []
    for text in values:
        if len(text) >= MIN_ATTRIBUTE_LEN:
            raw = text.encode()
            found += [raw, raw.hex().encode()]
    return found


def check_privacy(v: View, out: Verdicts) -> None:
    priv = v.report["privacy"]
    chain_blob = repr(v.report["chain_records"]).encode() + repr(v.report["trace"]).encode()
    for name, attrs in priv["attributes"].items():
        for needle in _needles(attrs.values()):
            if needle in chain_blob:
                out.fail("P5_privacy", None, f"chain state contains an attribute of {name}")
    forbidden = [c["address"].encode() for c in v.cast] + [d.encode() for d in priv["info_digests"].values()]
    forbidden += [n for attrs in priv["attributes"].values() for n in _needles(attrs.values())]
    for c in v.cast:
        fact = v.facts(c["name"]).get("research")
        if not fact or "dataset" not in fact:
            continue
        data = bytes.fromhex(fact["dataset"])
        if ID_PATTERN.search(data.decode(errors="replace")):
            out.fail("P5_privacy", None, f"research delivery {fact['rdID']} names a patient identifier")
        for needle in forbidden:
            if needle.lower() in data.lower():
                out.fail("P5_privacy", None, f"research delivery {fact['rdID']} leaks an identity string")
    grants = [(t, e["owner"], e["grantee"]) for t, _, e in v.named("AccessGranted")
              if e["category"] == "MedicalExpenditure"]
    for msg in v.report["bus"]["delivered"]:
        if msg["kind"] != "enc_file":
            continue
        cd = v.record("insurance", "cd", msg["cID"])
        owner = v.record("insurance", "po", cd["poID"])["buyerID"] if cd else None
        if not any(t <= msg["sent_at"] and o == owner and g == msg["recipient"] for t, o, g in grants):
            out.fail("P5_privacy", msg["sent_at"], f"file released for claim {msg['cID']} without a grant")


def check_immutability(v: View, out: Verdicts) -> None:
    for key, history in v.report["record_timeline"].items():
        if history[0][2]:
            continue
        if len(history) > 1:
            out.fail("P6_immutability", history[1][0], f"immutable record {key} changed")
    # files the DBO accepted are exactly the files the hospital committed to
    for c in v.cast:
        if c["role"] != "dbo":
            continue
        for root_hex, entry in v.facts(c["name"]).get("store", {}).items():
            app = v.record("storage", "as", entry["asID"])
            if v.record("storage", "outcome", entry["asID"]) not in ("approved", "dbo_false_complaint"):
                continue
            data = bytes.fromhex(entry["plaintext"])
            size = entry["chunk_size"]
            chunks = [data[i:i + size] for i in range(0, len(data), size)]
            if crypto.merkle_root(chunks).hex() != app["MR_File"][2:] or root_hex != app["MR_File"][2:]:
                out.fail("P6_immutability", None, f"stored file {entry['asID']} differs from its commitment")


# --------------------------------------------------------------------------
# ledger-wide invariants


def check_ledger(v: View, out: Verdicts) -> None:
    rep = v.report
    total = rep["endowment"]
    for tick, supply in rep["supply_timeline"]:
        if supply != total:
            out.fail("conservation", tick, f"supply {supply} != endowment {total}")
            break
    final = sum(rep["final_balances"].values()) + sum(e["amount"] for e in rep["live_escrows"])
    if final != total:
        out.fail("conservation", None, f"final supply {final} != endowment {total}")
    for e in rep["live_escrows"]:
        if e["purpose"] != "SecurityDeposit":
            out.fail("liveness", None, f"escrow {e['id']} ({e['purpose']}) stranded")
    if not rep["terminated"]:
        out.fail("terminated", rep["ticks"], "tick budget exhausted before every client finished")
        out.fail("liveness", rep["ticks"], "run did not terminate")
    for _, _, e in v.named("CaseClosed"):
        if e["finalCost"] is not None and e["finalCost"] > e["estimatedCost"]:
            out.fail("bills_within_estimate", None, f"case {e['ebID']} billed above estimate")
    for key, history in rep["record_timeline"].items():
        m = re.fullmatch(r"treatment/final_cost/(\d+)", key)
        if not m:
            continue
        fc = v.record("treatment", "fc", int(m.group(1)))
        est = v.record("treatment", "ec", fc["ebID"])["estimatedCost"]
        for tick, value, _ in history:
            if value > est:
                out.fail("bills_within_estimate", tick, f"bill {m.group(1)} set to {value} > {est}")


def audit(report: dict) -> dict:
    """Per-assertion verdicts with a short counterexample list on failure."""
    v = View(report)
    out = Verdicts()
    for check in (check_treatment, check_storage, check_insurance, check_research,
                  check_privacy, check_immutability, check_ledger):
        check(v, out)
    return out.result(report["scenario"]["assertions"])
