import pytest

from fairhealth import fairswap
from fairhealth.errors import (
    AlreadyComplained,
    CallerMismatch,
    Expired,
    KeyMismatch,
    NotYetExpired,
    Overcharge,
    WrongPhase,
    WrongValue,
)
from fairhealth.treatment import Phase

from conftest import KEY, Env


def closed_events(r):
    return [e for e in r.events if e["name"] == "CaseClosed"]


def exit_case(env, eb, who):
    """Let the deadline lapse, then leave the case as ``who``."""
    anchor, ttl, _ = env.t.deadline(eb)
    env.ledger.skip_to(anchor + ttl + 1)
    fn = "withdraw_by_patient" if who == "patient" else "withdraw_by_hospital"
    return env.tx(who, "treatment", fn, ebID=eb)


def test_happy_path_settles_at_the_final_cost(env):
    eb = env.settled_case(est=100, final=80)
    assert env.balance("patient") == 920
    assert env.balance("hospital") == 1080
    assert env.t.phase(eb) == Phase.Settled
    assert env.ledger.live_escrows() == []


def test_both_stakes_are_locked_for_the_estimate(env):
    eb = env.open_case(est=100)
    assert env.balance("patient") == 900 and env.balance("hospital") == 900
    assert sorted(e.amount for e in env.ledger.live_escrows()) == [100, 100]
    assert env.t.phase(eb) == Phase.Locked


def test_locking_requires_the_exact_estimate(env):
    env.fails(WrongValue, "hospital", "treatment", "generate_estimated_cost_bill", value=99,
              hID=env.ids["hospital"], pID=env.ids["patient"], estimatedCost=100)
    eb = env.ok("hospital", "treatment", "generate_estimated_cost_bill", value=100,
                hID=env.ids["hospital"], pID=env.ids["patient"], estimatedCost=100)
    env.fails(WrongValue, "patient", "treatment", "lock_estimated_amount", value=50,
              pID=env.ids["patient"], hID=env.ids["hospital"], ebID=eb)


def test_only_the_named_parties_may_act(env):
    eb = env.open_case()
    env.fails(CallerMismatch, "patient2", "treatment", "start_treatment",
              hID=env.ids["hospital"], pID=env.ids["patient"], ebID=eb)
    env.start(eb)
    env.commit(eb)
    env.fails(CallerMismatch, "patient2", "treatment", "reject_file", ebID=eb)


def test_final_bill_above_estimate_reverts(env):
    eb = env.open_case(est=100)
    env.start(eb)
    env.commit(eb)
    env.verify(eb)
    ec = env.t.estimate(eb)
    env.fails(Overcharge, "hospital", "treatment", "discharge_and_generate_final_cost_bill",
              hID=ec.hID, ebID=eb, pID=ec.pID, finalCost=101)
    assert env.bill(eb, 100)


def test_steps_out_of_order_revert(env):
    eb = env.open_case()
    ec = env.t.estimate(eb)
    env.fails(WrongPhase, "hospital", "treatment", "discharge_and_generate_final_cost_bill",
              hID=ec.hID, ebID=eb, pID=ec.pID, finalCost=10)
    env.fails(WrongPhase, "hospital", "treatment", "key_reveal", hID=ec.hID, pID=ec.pID, ebID=eb, key=KEY)


def test_dispute_then_revision_settles_at_the_revised_cost(env):
    eb = env.open_case(est=100)
    env.start(eb)
    env.commit(eb)
    env.verify(eb)
    fb = env.bill(eb, 90)
    env.ok("patient", "treatment", "dispute_final_bill", pID=env.ids["patient"], fbID=fb)
    env.fails(Overcharge, "hospital", "treatment", "revise_final_bill", hID=env.ids["hospital"], fbID=fb, newCost=95)
    env.ok("hospital", "treatment", "revise_final_bill", hID=env.ids["hospital"], fbID=fb, newCost=70)
    env.fails(WrongPhase, "patient", "treatment", "dispute_final_bill", pID=env.ids["patient"], fbID=fb)
    env.consent_bill(eb)
    env.reveal(eb)
    env.final_consent(eb)
    assert env.balance("patient") == 930 and env.balance("hospital") == 1070


def test_unanswered_dispute_is_the_hospitals_fault(env):
    eb = env.open_case(est=100)
    env.start(eb)
    env.commit(eb)
    env.verify(eb)
    fb = env.bill(eb, 90)
    env.ok("patient", "treatment", "dispute_final_bill", pID=env.ids["patient"], fbID=fb)
    assert exit_case(env, eb, "patient").ok
    assert env.t.outcome(eb) == "hospital_fault"
    assert env.balance("patient") == 1100 and env.balance("hospital") == 900


def test_wrong_key_cannot_be_revealed(env):
    eb = env.open_case()
    env.start(eb)
    env.commit(eb)
    env.verify(eb)
    env.bill(eb, 80)
    env.consent_bill(eb)
    ec = env.t.estimate(eb)
    env.fails(KeyMismatch, "hospital", "treatment", "key_reveal", hID=ec.hID, pID=ec.pID, ebID=eb,
              key=b"\x00" * 32)


@pytest.mark.parametrize("element", range(7))
def test_valid_complaint_pays_the_patient_both_stakes(env, element):
    eb, encrypted, enc = env.to_key_revealed(est=100, final=80, tamper=element)
    complaint = fairswap.decode_and_check(encrypted, KEY, enc.m1)
    r = env.tx("patient", "treatment", "patient_complain", pID=env.ids["patient"], complaint=complaint,
               ebID=eb, hID=env.ids["hospital"])
    assert r.ok and r.result is True
    assert env.balance("patient") == 1100 and env.balance("hospital") == 900
    assert closed_events(r)[0]["outcome"] == "hospital_fault"


def test_complaint_with_wrong_committed_key(env):
    decoy = b"\x11" * 32
    eb = env.open_case()
    env.start(eb)
    encrypted, enc = env.commit(eb, key=KEY, committed_key=decoy)
    env.verify(eb)
    env.bill(eb, 80)
    env.consent_bill(eb)
    env.reveal(eb, decoy)
    complaint = fairswap.decode_and_check(encrypted, decoy, enc.m1)
    assert env.ok("patient", "treatment", "patient_complain", pID=env.ids["patient"],
                  complaint=complaint.to_bytes(), ebID=eb, hID=env.ids["hospital"])
    assert env.t.outcome(eb) == "hospital_fault"


def test_fabricated_complaint_settles_normally(env):
    eb, encrypted, _ = env.to_key_revealed(est=100, final=80)
    fake = fairswap.gate_complaint(encrypted, 0)
    assert env.ok("patient", "treatment", "patient_complain", pID=env.ids["patient"], complaint=fake,
                  ebID=eb, hID=env.ids["hospital"]) is False
    assert env.t.outcome(eb) == "settled"
    assert env.balance("patient") == 920 and env.balance("hospital") == 1080


def test_garbage_complaint_bytes_are_invalid(env):
    eb, _, _ = env.to_key_revealed()
    assert env.ok("patient", "treatment", "patient_complain", pID=env.ids["patient"], complaint=b"\x00junk",
                  ebID=eb, hID=env.ids["hospital"]) is False


def test_one_complaint_per_case(env):
    eb, encrypted, _ = env.to_key_revealed()
    env.ok("patient", "treatment", "patient_complain", pID=env.ids["patient"],
           complaint=fairswap.gate_complaint(encrypted, 0), ebID=eb, hID=env.ids["hospital"])
    env.fails(AlreadyComplained, "patient", "treatment", "patient_final_consent", pID=env.ids["patient"],
              ebID=eb, hID=env.ids["hospital"])


def test_rejecting_a_provably_bad_commitment(env):
    eb = env.open_case()
    env.start(eb)
    env.commit(eb, date_shift=1)
    assert env.ok("patient", "treatment", "reject_file", ebID=eb) is True
    assert env.t.outcome(eb) == "hospital_fault"
    assert env.balance("patient") == 1100


def test_rejecting_a_sound_commitment_refunds_both(env):
    eb = env.open_case()
    env.start(eb)
    env.commit(eb)
    assert env.ok("patient", "treatment", "reject_file", ebID=eb) is False
    assert env.t.outcome(eb) == "mutual_refund"
    assert env.balance("patient") == 1000 and env.balance("hospital") == 1000


def test_unlocked_estimate_is_reclaimed_by_the_hospital(env):
    eb = env.ok("hospital", "treatment", "generate_estimated_cost_bill", value=100,
                hID=env.ids["hospital"], pID=env.ids["patient"], estimatedCost=100)
    assert exit_case(env, eb, "hospital").ok
    assert env.t.outcome(eb) == "unlocked" and env.balance("hospital") == 1000


def test_deadline_boundary_is_inclusive(env):
    eb = env.open_case()
    anchor, ttl, waiting = env.t.deadline(eb)
    assert waiting.name == "Hospital"
    env.ledger.skip_to(anchor + ttl)
    env.fails(NotYetExpired, "patient", "treatment", "withdraw_by_patient", ebID=eb)
    assert env.ledger.next_tick == anchor + ttl + 1
    assert env.tx("patient", "treatment", "withdraw_by_patient", ebID=eb).ok


def test_last_tick_is_still_in_time(env):
    eb = env.open_case()
    anchor, ttl, _ = env.t.deadline(eb)
    env.ledger.skip_to(anchor + ttl)
    env.start(eb)
    eb2 = env.open_case(patient="patient2")
    anchor, ttl, _ = env.t.deadline(eb2)
    env.ledger.skip_to(anchor + ttl + 1)
    env.fails(Expired, "hospital", "treatment", "start_treatment", hID=env.ids["hospital"],
              pID=env.ids["patient2"], ebID=eb2)


def test_the_party_that_must_act_cannot_withdraw(env):
    eb = env.open_case()
    r = exit_case(env, eb, "hospital")
    assert isinstance(r.error, WrongPhase)


# (phase reached, silent party, billed) -> expected patient balance at penalty 100 and 50
EXIT_TABLE = [
    ("Locked", "hospital", None, 1100, 1050),
    ("FileCommitted", "patient", None, 900, 950),
    ("FileVerified", "hospital", None, 1100, 1050),
    ("FinalBilled", "patient", 80, 900, 920),
    ("FinalBilled", "patient", 30, 900, 950),
    ("BillConsented", "hospital", 80, 1100, 1050),
    ("KeyRevealed", "patient", 80, 900, 920),
]


def walk_to(env, phase, billed):
    eb = env.open_case(est=100)
    steps = [
        lambda: env.start(eb),
        lambda: env.commit(eb),
        lambda: env.verify(eb),
        lambda: env.bill(eb, billed),
        lambda: env.consent_bill(eb),
        lambda: env.reveal(eb),
    ]
    order = ["Locked", "InTreatment", "FileCommitted", "FileVerified", "FinalBilled", "BillConsented",
             "KeyRevealed"]
    for step in steps[:order.index(phase)]:
        step()
    assert env.t.phase(eb).value == Phase[phase].value
    return eb


@pytest.mark.parametrize("penalty", [100, 50])
@pytest.mark.parametrize("phase,silent,billed,at100,at50", EXIT_TABLE)
def test_exit_payouts(phase, silent, billed, at100, at50, penalty):
    env = Env(penalty_pct=penalty)
    eb = walk_to(env, phase, billed)
    other = "patient" if silent == "hospital" else "hospital"
    r = exit_case(env, eb, other)
    assert r.ok, r.reason
    expected = at100 if penalty == 100 else at50
    assert env.balance("patient") == expected
    assert env.balance("patient") + env.balance("hospital") == 2000
    assert closed_events(r)[0]["outcome"] == f"{silent}_fault"
    assert env.ledger.live_escrows() == []


def test_treatment_without_deadline_has_no_exit(env):
    eb = env.open_case()
    env.start(eb)
    assert env.t.deadline(eb) is None
    env.ledger.advance(100)
    env.fails(WrongPhase, "patient", "treatment", "withdraw_by_patient", ebID=eb)


def test_treatment_deadline_bounds_the_commitment():
    env = Env(treatment_deadline=5)
    eb = env.open_case()
    env.start(eb)
    anchor, ttl, _ = env.t.deadline(eb)
    assert ttl == 5
    env.ledger.skip_to(anchor + 6)
    ec = env.t.estimate(eb)
    env.fails(Expired, "hospital", "treatment", "keep_signed_hash_to_blockchain", hID=ec.hID, pID=ec.pID,
              ebID=eb, M1=b"", M2=b"", H_x=b"", sign_x=b"", sign_m1=b"", key_hash=b"")
    assert env.tx("patient", "treatment", "withdraw_by_patient", ebID=eb).ok
    assert env.t.outcome(eb) == "hospital_fault"


def test_case_closed_event_carries_the_costs(env):
    eb, _, _ = env.to_key_revealed(est=100, final=80)
    ec = env.t.estimate(eb)
    r = env.tx("patient", "treatment", "patient_final_consent", pID=ec.pID, ebID=eb, hID=ec.hID)
    (event,) = closed_events(r)
    assert event == {"name": "CaseClosed", "ebID": eb, "outcome": "settled", "pID": ec.pID, "hID": ec.hID,
                     "estimatedCost": 100, "finalCost": 80}


def test_closed_case_rejects_further_calls(env):
    eb = env.settled_case()
    env.fails(WrongPhase, "patient", "treatment", "withdraw_by_patient", ebID=eb)
    env.fails(WrongPhase, "hospital", "treatment", "withdraw_by_hospital", ebID=eb)
