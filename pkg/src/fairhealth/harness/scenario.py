"""Scenario description, validation and the built-in scenario catalogue."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Dict, List, Optional, Tuple

import jsonschema

ROLES = ("patient", "hospital", "insurer", "dbo", "rc")

STRATEGIES: Dict[str, Tuple[str, ...]] = {
    "patient": (
        "Honest", "FalseComplaint", "NoPay", "SilentAfterReveal", "SilentAtVerify", "NeverLock",
        "TamperStoredFile", "OverClaim", "DuplicateClaim", "ClaimUnstored", "WithholdKey",
    ),
    "hospital": (
        "Honest", "Overcharge", "WrongFile", "WrongKey", "NeverStart", "SilentAtPhase", "BadEncoding",
    ),
    "insurer": (
        "Honest", "GhostAfterSale", "StealData", "PartialApprove", "NeverRespond", "IgnorePurchase",
        "WrongTerms", "OverpricedSale",
    ),
    "dbo": ("Honest", "WrongAggregate", "SilentResearch", "FalseStorageComplaint"),
    "rc": ("Honest",),
}

NEEDS_ARG = {"SilentAtPhase", "PartialApprove"}
OPTIONAL_ARG = {"WrongFile"}

ASSERTIONS = (
    "P1_patient_fairness",
    "P2_provider_fairness",
    "P3_insurer_fairness",
    "P4_research_integrity",
    "P5_privacy",
    "P6_immutability",
    "bills_within_estimate",
    "conservation",
    "liveness",
    "terminated",
)

DEFAULT_PARAMS = {
    "ttl": 10,
    "chunk_size": 32,
    "gates": 4,
    "estimated_cost": 100,
    "final_cost": 80,
    "storage_fee": 5,
    "policy_price": 30,
    "claim_amount": 50,
    "security_deposit": 200,
    "penalty_pct": 100,
    "treatment_deadline": None,
    "max_ticks": 2000,
    "query": "count of records per condition",
    "stages": ["treatment", "storage", "insurance", "research"],
}

DEFAULT_ENDOWMENT = {"patient": 1000, "hospital": 1000, "insurer": 1000, "dbo": 100, "rc": 0}


class InvalidScenario(ValueError):
    pass


@dataclass(frozen=True)
class Strategy:
    name: str = "Honest"
    arg: Optional[str] = None

    @classmethod
    def parse(cls, text: str, role: str) -> "Strategy":
        name, _, arg = text.partition(":")
        if name not in STRATEGIES[role]:
            raise InvalidScenario(f"unknown {role} strategy {name!r}")
        if name in NEEDS_ARG and not arg:
            raise InvalidScenario(f"strategy {name} needs an argument, e.g. {name}:x")
        if arg and name not in NEEDS_ARG | OPTIONAL_ARG:
            raise InvalidScenario(f"strategy {name} takes no argument")
        if name == "PartialApprove" and not arg.isdigit():
            raise InvalidScenario("PartialApprove needs a non-negative integer amount")
        return cls(name, arg or None)

    @property
    def honest(self) -> bool:
        return self.name == "Honest"

    def __str__(self) -> str:
        return self.name if self.arg is None else f"{self.name}:{self.arg}"


@dataclass(frozen=True)
class CastMember:
    role: str
    name: str
    endowment: int
    strategy: Strategy
    attributes: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    params: dict
    cast: Tuple[CastMember, ...]
    faults: Tuple[dict, ...] = ()
    assertions: Tuple[str, ...] = ASSERTIONS

    def members(self, role: str) -> List[CastMember]:
        return [m for m in self.cast if m.role == role]

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "params": dict(self.params),
            "cast": [
                {"role": m.role, "name": m.name, "endowment": m.endowment, "strategy": str(m.strategy),
                 **({"attributes": dict(m.attributes)} if m.attributes else {})}
                for m in self.cast
            ],
            "faults": [dict(f) for f in self.faults],
            "assertions": list(self.assertions),
        }


def schema(name: str = "scenario") -> dict:
    text = resources.files("fairhealth.harness").joinpath(f"{name}.schema.json").read_text()
    return json.loads(text)


def load_scenario(data) -> Scenario:
    """Validate a scenario given as a dict, JSON text or path-like."""
    if isinstance(data, Scenario):
        return data
    if not isinstance(data, dict):
        try:
            if isinstance(data, str) and data.lstrip().startswith("{"):
                data = json.loads(data)
            else:
                with open(data) as fh:
                    data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidScenario(str(exc)) from exc
    try:
        jsonschema.validate(data, schema("scenario"))
    except jsonschema.ValidationError as exc:
        raise InvalidScenario(exc.message) from exc

    params = {**DEFAULT_PARAMS, **data.get("params", {})}
    stages = params["stages"]
    if "treatment" not in stages:
        raise InvalidScenario("every scenario starts with a treatment")
    if "insurance" in stages and "storage" not in stages:
        raise InvalidScenario("insurance claims need the storage stage")
    if "research" in stages and "storage" not in stages:
        raise InvalidScenario("research needs the storage stage")
    if params["final_cost"] > params["estimated_cost"]:
        raise InvalidScenario("final_cost must not exceed estimated_cost")

    cast = []
    names = set()
    for entry in data["cast"]:
        if entry["name"] in names:
            raise InvalidScenario(f"duplicate cast name {entry['name']!r}")
        names.add(entry["name"])
        role = entry["role"]
        attrs = dict(entry.get("attributes", {}))
        if role == "patient":
            attrs.setdefault("name", entry["name"].title())
            attrs.setdefault("age", 40)
            attrs.setdefault("mobile", "+00-0000-0000")
            attrs.setdefault("address", f"{len(names)} Unknown Road")
            attrs.setdefault("condition", "checkup")
        cast.append(CastMember(role, entry["name"], entry.get("endowment", DEFAULT_ENDOWMENT[role]),
                               Strategy.parse(entry.get("strategy", "Honest"), role), attrs))
    for role in ("patient", "hospital"):
        if not any(m.role == role for m in cast):
            raise InvalidScenario(f"cast needs a {role}")
    if len([m for m in cast if m.role == "hospital"]) > 1:
        raise InvalidScenario("exactly one hospital is supported")
    for stage, role in (("storage", "dbo"), ("insurance", "insurer"), ("research", "rc")):
        if stage in stages and not any(m.role == role for m in cast):
            raise InvalidScenario(f"stage {stage} needs a {role}")
    for role in ("insurer", "dbo"):
        if len([m for m in cast if m.role == role]) > 1:
            raise InvalidScenario(f"at most one {role} is supported")

    assertions = tuple(data.get("assertions", ASSERTIONS))
    unknown = set(assertions) - set(ASSERTIONS)
    if unknown:
        raise InvalidScenario(f"unknown assertions {sorted(unknown)}")
    return Scenario(data["name"], data.get("seed", 7), params, tuple(cast),
                    tuple(data.get("faults", ())), assertions)


# --------------------------------------------------------------------------
# catalogue

GOLDEN = {
    "name": "golden",
    "seed": 7,
    "params": {},
    "cast": [
        {"role": "patient", "name": "alice", "attributes": {
            "name": "Alice Moreau", "age": 34, "mobile": "+44-7700-900123",
            "address": "12 Harbour Lane, Bristol", "condition": "asthma"}},
        {"role": "patient", "name": "bob", "attributes": {
            "name": "Bob Okafor", "age": 58, "mobile": "+44-7700-900456",
            "address": "3 Mill Street, Leeds", "condition": "diabetes"}},
        {"role": "hospital", "name": "st_mary"},
        {"role": "insurer", "name": "acme_insurance"},
        {"role": "dbo", "name": "records_trust"},
        {"role": "rc", "name": "uni_lab"},
    ],
}


def golden_scenario(**params) -> Scenario:
    data = copy.deepcopy(GOLDEN)
    data["params"].update(params)
    return load_scenario(data)


def adversarial_scenario(role: str, strategy: str, *, name: Optional[str] = None, **params) -> Scenario:
    """The golden cast with the first actor of ``role`` playing ``strategy``."""
    data = copy.deepcopy(GOLDEN)
    data["name"] = name or f"{role}-{strategy}"
    data["params"].update(params)
    for entry in data["cast"]:
        if entry["role"] == role:
            entry["strategy"] = strategy
            break
    return load_scenario(data)


# (role, strategy) pairs: each has an honest counterparty whose fairness is audited
MATRIX: Tuple[Tuple[str, str], ...] = (
    ("hospital", "Overcharge"),
    ("hospital", "WrongFile"),
    ("hospital", "WrongKey"),
    ("hospital", "NeverStart"),
    ("hospital", "SilentAtPhase:FileVerified"),
    ("hospital", "SilentAtPhase:BillConsented"),
    ("hospital", "BadEncoding"),
    ("patient", "FalseComplaint"),
    ("patient", "NoPay"),
    ("patient", "SilentAfterReveal"),
    ("patient", "SilentAtVerify"),
    ("patient", "NeverLock"),
    ("patient", "TamperStoredFile"),
    ("patient", "OverClaim"),
    ("patient", "DuplicateClaim"),
    ("patient", "ClaimUnstored"),
    ("patient", "WithholdKey"),
    ("insurer", "GhostAfterSale"),
    ("insurer", "StealData"),
    ("insurer", "PartialApprove:20"),
    ("insurer", "NeverRespond"),
    ("insurer", "IgnorePurchase"),
    ("insurer", "WrongTerms"),
    ("insurer", "OverpricedSale"),
    ("dbo", "WrongAggregate"),
    ("dbo", "SilentResearch"),
    ("dbo", "FalseStorageComplaint"),
)

# one scenario per TTL-guarded transition, letting that deadline lapse
TIMEOUTS: Dict[str, Tuple[str, str]] = {
    "lock_estimated_amount": ("patient", "NeverLock"),
    "start_treatment": ("hospital", "NeverStart"),
    "verify_and_give_consent": ("patient", "SilentAtVerify"),
    "discharge_and_generate_final_cost_bill": ("hospital", "SilentAtPhase:FileVerified"),
    "consent_final_bill_patient": ("patient", "NoPay"),
    "key_reveal": ("hospital", "SilentAtPhase:BillConsented"),
    "patient_final_consent": ("patient", "SilentAfterReveal"),
    "buy_policy_phase_two": ("insurer", "IgnorePurchase"),
    "reveal_secret_key": ("patient", "WithholdKey"),
    "approve_claim": ("insurer", "GhostAfterSale"),
    "provide_data_for_research": ("dbo", "SilentResearch"),
}

# further deadlines outside the core eleven
EXTRA_TIMEOUTS: Dict[str, Tuple[str, str]] = {
    "revise_final_bill": ("hospital", "Overcharge"),
    "lock_claimed_money": ("insurer", "NeverRespond"),
    "dbo_verify_roots": ("patient", "TamperStoredFile"),
}
