import pytest

from fairhealth import crypto, fairswap
from fairhealth.crypto import KeyPair
from fairhealth.registry import EntityKind, name_digest, patient_info_digest
from fairhealth.suite import Suite
from fairhealth.treatment import h_x

FILE = b"condition=asthma\n" + bytes(range(111))  # 128 bytes, four 32-byte chunks
KEY = crypto.digest(b"treatment key")
CHUNK = 32
PARTIES = ("patient", "patient2", "hospital", "insurer", "dbo", "rc", "outsider")
SELF_REGISTERED = {
    "patient": EntityKind.Patient,
    "patient2": EntityKind.Patient,
    "hospital": EntityKind.Hospital,
    "insurer": EntityKind.InsuranceCo,
}
GOV_REGISTERED = {"dbo": EntityKind.DatabaseOwner, "rc": EntityKind.ResearchCommunity}


def flip(data: bytes) -> bytes:
    return bytes([data[0] ^ 1]) + data[1:]


class Env:
    """A deployed suite with one registered entity per role and call helpers."""

    def __init__(self, ttl=10, penalty_pct=100, treatment_deadline=None, endowment=1000):
        self.gov = KeyPair.from_seed(b"test/government")
        self.suite = Suite.deploy(self.gov.address, ttl=ttl, penalty_pct=penalty_pct,
                                  treatment_deadline=treatment_deadline)
        self.ledger = self.suite.ledger
        self.keys = {n: KeyPair.from_seed(f"test/{n}".encode()) for n in PARTIES}
        self.addr = {n: k.address for n, k in self.keys.items()}
        self.addr["government"] = self.gov.address
        for n in PARTIES:
            self.ledger.endow(self.addr[n], endowment)
        self.ids = {}
        for n, kind in SELF_REGISTERED.items():
            info = patient_info_digest(n, 30, "555-0100", "1 Test Road") if kind == EntityKind.Patient \
                else name_digest(n)
            self.ids[n] = self.ok(n, "registration", "register_entity", kind=kind,
                                  address=self.addr[n], info_digest=info)
        for n, kind in GOV_REGISTERED.items():
            self.ids[n] = self.ok("government", "registration", "register_entity", kind=kind,
                                  address=self.addr[n], info_digest=name_digest(n))

    @property
    def t(self):
        return self.suite.treatment

    def tx(self, who, contract, fn, value=0, **kwargs):
        return self.ledger.submit(contract, fn, self.addr[who], value=value, **kwargs)

    def ok(self, who, contract, fn, value=0, **kwargs):
        r = self.tx(who, contract, fn, value=value, **kwargs)
        assert r.ok, f"{contract}.{fn} reverted: {r.reason}"
        return r.result

    def fails(self, error, who, contract, fn, value=0, **kwargs):
        r = self.tx(who, contract, fn, value=value, **kwargs)
        assert not r.ok, f"{contract}.{fn} unexpectedly succeeded"
        assert isinstance(r.error, error), f"expected {error.__name__}, got {type(r.error).__name__}: {r.reason}"
        return r

    def balance(self, who) -> int:
        return self.ledger.balance(self.addr[who])

    # -- treatment walk-through ---------------------------------------------

    def open_case(self, est=100, patient="patient") -> int:
        eb = self.ok("hospital", "treatment", "generate_estimated_cost_bill", value=est,
                     hID=self.ids["hospital"], pID=self.ids[patient], estimatedCost=est)
        self.ok(patient, "treatment", "lock_estimated_amount", value=est,
                pID=self.ids[patient], hID=self.ids["hospital"], ebID=eb)
        return eb

    def start(self, eb):
        ec = self.t.estimate(eb)
        self.ok("hospital", "treatment", "start_treatment", hID=ec.hID, pID=ec.pID, ebID=eb)

    def commit(self, eb, data=FILE, key=KEY, *, committed_key=None, tamper=None, date_shift=0, chunk=CHUNK):
        """Post the hospital's commitment; returns (encrypted encoding, plaintext encoding)."""
        ec = self.t.estimate(eb)
        enc = fairswap.encode(data, chunk, key)
        encrypted = enc.encrypted
        if tamper is not None:
            encrypted = encrypted.with_element(tamper, flip(encrypted.cipher_elements[tamper]))
        hx = h_x(ec.pID, ec.T_CheckUpStart + date_shift, encrypted.m2)
        hk = self.keys["hospital"]
        self.ok("hospital", "treatment", "keep_signed_hash_to_blockchain", hID=ec.hID, pID=ec.pID, ebID=eb,
                M1=enc.m1, M2=encrypted.m2, H_x=hx, sign_x=hk.sign(hx), sign_m1=hk.sign(enc.m1),
                key_hash=crypto.commit(committed_key or key), file_props=enc.props)
        return encrypted, enc

    def verify(self, eb, patient="patient"):
        ms = self.t.file_of(eb)
        ec = self.t.estimate(eb)
        self.ok(patient, "treatment", "verify_and_give_consent", pID=ec.pID, msID=ms.msID,
                H_x_recomputed=h_x(ec.pID, ec.T_CheckUpStart, ms.mr_enc_data))

    def bill(self, eb, final) -> int:
        ec = self.t.estimate(eb)
        return self.ok("hospital", "treatment", "discharge_and_generate_final_cost_bill",
                       hID=ec.hID, ebID=eb, pID=ec.pID, finalCost=final)

    def consent_bill(self, eb, patient="patient"):
        ec = self.t.estimate(eb)
        self.ok(patient, "treatment", "consent_final_bill_patient", pID=ec.pID,
                fbID=self.t.bill_of(eb).fbID, hID=ec.hID)

    def reveal(self, eb, key=KEY):
        ec = self.t.estimate(eb)
        self.ok("hospital", "treatment", "key_reveal", hID=ec.hID, pID=ec.pID, ebID=eb, key=key)

    def final_consent(self, eb, patient="patient"):
        ec = self.t.estimate(eb)
        self.ok(patient, "treatment", "patient_final_consent", pID=ec.pID, ebID=eb, hID=ec.hID)

    def to_key_revealed(self, est=100, final=80, patient="patient", **commit_kw):
        eb = self.open_case(est, patient)
        self.start(eb)
        encrypted, enc = self.commit(eb, **commit_kw)
        self.verify(eb, patient)
        self.bill(eb, final)
        self.consent_bill(eb, patient)
        self.reveal(eb, commit_kw.get("committed_key") or KEY)
        return eb, encrypted, enc

    def settled_case(self, est=100, final=80, patient="patient") -> int:
        eb, _, _ = self.to_key_revealed(est, final, patient)
        self.final_consent(eb, patient)
        return eb


@pytest.fixture
def env():
    return Env()


# -- acceptance criterion reporting -------------------------------------------

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    rep = outcome.get_result()
    number, title = mark.args
    if rep.when == "call" or rep.failed:
        ok = _criteria.get(number, (title, True))[1] and rep.passed
        _criteria[number] = (title, ok)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, ok = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}")
