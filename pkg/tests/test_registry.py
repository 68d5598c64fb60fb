import hashlib

from fairhealth.errors import (
    AlreadyRegistered,
    BelowThreshold,
    CallerMismatch,
    Deregistered,
    NotGovernment,
    NotOwner,
    NotRegistered,
    WrongValue,
)
from fairhealth.registry import Category, EntityKind, patient_info_digest


def test_patient_digest_hides_attributes():
    d = patient_info_digest("Ann Lee", 41, "555-0199", "4 Elm St")
    assert d == hashlib.sha256("Ann Lee\x1f41\x1f555-0199\x1f4 Elm St".encode()).digest()


def test_ids_are_issued_per_kind(env):
    reg = env.suite.registry
    assert (env.ids["patient"], env.ids["patient2"], env.ids["hospital"]) == (1, 2, 1)
    assert reg.count(EntityKind.Patient) == 2
    assert reg.address_of(EntityKind.Hospital, 1) == env.addr["hospital"]
    assert reg.id_of(EntityKind.Patient, env.addr["patient2"]) == 2


def test_chain_record_holds_only_the_digest(env):
    rec = env.suite.registry.entity(EntityKind.Patient, env.ids["patient"])
    assert rec.info_digest == patient_info_digest("patient", 30, "555-0100", "1 Test Road")


def test_self_registration_must_come_from_the_address(env):
    env.fails(CallerMismatch, "outsider", "registration", "register_entity", kind=EntityKind.Patient,
              address=env.addr["hospital"], info_digest=b"x")


def test_duplicate_registration_reverts(env):
    env.fails(AlreadyRegistered, "patient", "registration", "register_entity", kind=EntityKind.Patient,
              address=env.addr["patient"], info_digest=b"x")


def test_same_address_may_hold_several_roles(env):
    env.ok("patient", "registration", "register_entity", kind=EntityKind.Hospital,
           address=env.addr["patient"], info_digest=b"x")


def test_dbo_and_rc_are_onboarded_by_government_only(env):
    env.fails(NotGovernment, "outsider", "registration", "register_entity", kind=EntityKind.DatabaseOwner,
              address=env.addr["outsider"], info_digest=b"x")
    assert env.ids["dbo"] == 1 and env.ids["rc"] == 1


def test_unregistered_callers_are_refused(env):
    env.fails(NotRegistered, "outsider", "registration", "grant_access", owner=1,
              grantee=env.addr["outsider"], category=Category.General)


def test_patient_controls_its_access_matrix(env):
    reg = env.suite.registry
    pid, ins = env.ids["patient"], env.addr["insurer"]
    assert not reg.has_access(pid, ins, Category.MedicalTreatment)
    env.ok("patient", "registration", "grant_access", owner=pid, grantee=ins, category=Category.MedicalExpenditure)
    assert reg.has_access(pid, ins, Category.MedicalExpenditure)
    assert not reg.has_access(pid, ins, Category.General)
    env.fails(NotOwner, "hospital", "registration", "revoke_access", owner=pid, grantee=ins,
              category=Category.MedicalExpenditure)
    env.ok("patient", "registration", "revoke_access", owner=pid, grantee=ins, category=Category.MedicalExpenditure)
    assert not reg.has_access(pid, ins, Category.MedicalExpenditure)


def test_security_deposit_lifecycle(env):
    reg = env.suite.registry
    ic = env.ids["insurer"]
    env.fails(WrongValue, "insurer", "registration", "deposit_security", ic_id=ic)
    env.ok("insurer", "registration", "deposit_security", value=100, ic_id=ic)
    env.ok("insurer", "registration", "deposit_security", value=50, ic_id=ic)
    assert reg.security_money(ic) == 150
    assert env.balance("insurer") == 850
    env.ok("insurer", "insurance", "declare_policy_price", icID=ic, price=120)
    env.fails(BelowThreshold, "insurer", "registration", "withdraw_security", ic_id=ic, amount=31)
    env.ok("insurer", "registration", "withdraw_security", ic_id=ic, amount=30)
    assert reg.security_money(ic) == 120
    assert env.balance("insurer") == 880
    assert sum(e.amount for e in env.ledger.live_escrows()) == 120


def test_price_above_deposit_cannot_be_declared(env):
    ic = env.ids["insurer"]
    env.ok("insurer", "registration", "deposit_security", value=50, ic_id=ic)
    env.fails(BelowThreshold, "insurer", "insurance", "declare_policy_price", icID=ic, price=51)


def test_deregistered_insurer_is_locked_out(env):
    ic = env.ids["insurer"]
    env.ok("insurer", "registration", "deposit_security", value=50, ic_id=ic)
    env.ok("patient", "insurance", "buy_policy_phase_one", value=60, pID=env.ids["patient"], icID=ic,
           hashOfTermsAndCon=b"t")
    # selling above the deposit deregisters instead of reverting
    assert env.ok("insurer", "insurance", "buy_policy_phase_two", icID=ic, pID=env.ids["patient"],
                  price=60, hashOfTermsAndCon=b"t") is None
    assert env.suite.registry.is_deregistered(ic)
    assert env.balance("patient") == 1000 and env.balance("insurer") == 1000
    env.fails(Deregistered, "insurer", "registration", "deposit_security", value=10, ic_id=ic)
