import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fairhealth import crypto
from fairhealth.errors import (
    AlreadyReleased,
    BadSplit,
    InsufficientFunds,
    InvalidTransaction,
    NotEscrowHolder,
    RecordImmutable,
    Revert,
    WrongValue,
)
from fairhealth.ledger import (
    BASE_TX_OPS,
    Contract,
    Ledger,
    OfflineBus,
    Purpose,
    corrupt,
    delay,
    drop,
    transaction,
)


class Vault(Contract):
    name = "vault"

    @transaction
    def deposit(self, msg, tag):
        eid = self.ledger.lock_value(msg, Purpose.StorageFee, tag=("vault", tag))
        self.put("escrow", tag, eid)
        return eid

    @transaction
    def pay(self, msg, tag, to, split=None):
        eid = self.get("escrow", tag)
        if split:
            self.ledger.release_split(eid, split)
        else:
            self.ledger.release(eid, to)

    @transaction
    def note(self, msg, key, content, mutable=False):
        self.put("note", key, content, mutable=mutable)
        self.emit("Noted", key=key)

    @transaction
    def keep_value(self, msg):
        return None

    @transaction
    def fail_after_write(self, msg):
        self.put("note", "partial", 1)
        self.ledger.lock(msg.caller, 1, Purpose.StorageFee)
        raise Revert("boom")

    @transaction
    def hash_twice(self, msg):
        crypto.digest(b"a")
        crypto.digest(b"b")

    def not_a_tx(self, msg):
        return "nope"


class Other(Contract):
    name = "other"

    @transaction
    def steal(self, msg, eid):
        self.ledger.release(eid, msg.caller)


@pytest.fixture
def led():
    ledger = Ledger(ttl=5)
    ledger.deploy(Vault(ledger))
    ledger.deploy(Other(ledger))
    ledger.endow("alice", 100)
    ledger.endow("bob", 50)
    return ledger


def test_genesis_only_endowment(led):
    led.submit("vault", "keep_value", "alice")
    with pytest.raises(RuntimeError):
        led.endow("carol", 1)


def test_every_submit_advances_the_clock(led):
    assert led.submit("vault", "keep_value", "alice").tick == 1
    assert led.submit("vault", "nothing", "alice").tick == 2
    assert led.next_tick == 3
    led.advance(4)
    assert led.now == 6


def test_skip_to_targets_the_next_transaction(led):
    led.skip_to(10)
    assert led.submit("vault", "keep_value", "alice").tick == 10


def test_clock_cannot_go_backwards(led):
    with pytest.raises(ValueError):
        led.advance(-1)


def test_expiry_is_strictly_greater_than_ttl(led):
    assert not led.expired(3, now=8)
    assert led.expired(3, now=9)
    assert led.expired(3, ttl=1, now=5)


def test_lock_and_release_move_money(led):
    r = led.submit("vault", "deposit", "alice", value=30, tag=1)
    assert r.ok
    assert led.balance("alice") == 70
    assert [e.amount for e in led.live_escrows()] == [30]
    led.submit("vault", "pay", "alice", tag=1, to="bob")
    assert led.balance("bob") == 80
    assert led.live_escrows() == []
    assert led.total_supply() == 150


def test_split_must_sum_to_the_escrow(led):
    led.submit("vault", "deposit", "alice", value=30, tag=1)
    r = led.submit("vault", "pay", "alice", tag=1, to=None, split=[("bob", 10), ("alice", 10)])
    assert isinstance(r.error, BadSplit)
    r = led.submit("vault", "pay", "alice", tag=1, to=None, split=[("bob", 10), ("alice", 20)])
    assert r.ok and led.balance("bob") == 60 and led.balance("alice") == 90


def test_double_release_reverts(led):
    led.submit("vault", "deposit", "alice", value=30, tag=1)
    led.submit("vault", "pay", "alice", tag=1, to="bob")
    assert isinstance(led.submit("vault", "pay", "alice", tag=1, to="bob").error, AlreadyReleased)


def test_only_the_holding_contract_may_release(led):
    eid = led.submit("vault", "deposit", "alice", value=30, tag=1).result
    assert isinstance(led.submit("other", "steal", "bob", eid=eid).error, NotEscrowHolder)


def test_attached_value_must_be_consumed(led):
    r = led.submit("vault", "keep_value", "alice", value=5)
    assert isinstance(r.error, WrongValue)
    assert led.balance("alice") == 100


def test_insufficient_funds(led):
    assert isinstance(led.submit("vault", "deposit", "bob", value=51, tag=1).error, InsufficientFunds)


def test_revert_restores_state_and_drops_events(led):
    before = led.state_digest()
    r = led.submit("vault", "fail_after_write", "alice")
    assert r.status == "revert" and r.reason == "boom" and r.events == []
    assert led.state_digest() == before
    assert led.tick == 1


def test_unknown_or_internal_functions_are_not_callable(led):
    assert isinstance(led.submit("vault", "not_a_tx", "alice").error, InvalidTransaction)
    assert isinstance(led.submit("nowhere", "x", "alice").error, InvalidTransaction)


def test_records_are_write_once_unless_mutable(led):
    assert led.submit("vault", "note", "alice", key="a", content=1).ok
    assert isinstance(led.submit("vault", "note", "alice", key="a", content=2).error, RecordImmutable)
    assert led.submit("vault", "note", "alice", key="m", content=1, mutable=True).ok
    assert led.submit("vault", "note", "alice", key="m", content=2, mutable=True).ok
    assert led.read_record(("vault", "note", "m")).value == 2
    assert led.read_record(("vault", "note", "a")).written_at == 1


def test_op_count_covers_base_record_and_crypto_work(led):
    assert led.submit("vault", "keep_value", "alice").op_count == BASE_TX_OPS
    assert led.submit("vault", "hash_twice", "alice").op_count == BASE_TX_OPS + 2
    r = led.submit("vault", "note", "alice", key="k", content=1)
    assert r.op_count > BASE_TX_OPS


def test_state_digest_ignores_the_clock(led):
    d = led.state_digest()
    led.advance(7)
    assert led.state_digest() == d


def test_event_log_is_jsonl(led, tmp_path):
    led.submit("vault", "deposit", "alice", value=3, tag=b"\x01")
    led.submit("vault", "keep_value", "alice", value=1)
    path = tmp_path / "log.jsonl"
    led.export_log(path)
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert [line["status"] for line in lines] == ["success", "revert"]
    assert lines[0]["events"][0]["name"] == "Locked"
    assert lines[0]["events"][0]["tag"] == ["vault", "0x01"]
    assert lines[1]["error"] == "WrongValue"


def test_test_hooks_bypass_the_rules(led):
    led.submit("vault", "note", "alice", key="a", content=1)
    led.tamper_record(("vault", "note", "a"), 99)
    assert led.read_record(("vault", "note", "a")).value == 99
    led.mint_unchecked("alice", 5)
    assert led.total_supply() == 155 != led.endowment


@given(st.lists(st.tuples(st.sampled_from(["alice", "bob"]), st.integers(0, 60), st.booleans()), max_size=25))
def test_supply_is_conserved_by_any_sequence(ops):
    led = Ledger()
    led.deploy(Vault(led))
    led.endow("alice", 100)
    led.endow("bob", 50)
    for n, (who, amount, pay) in enumerate(ops):
        led.submit("vault", "deposit", who, value=amount, tag=n)
        if pay:
            led.submit("vault", "pay", who, tag=n, to="bob" if who == "alice" else "alice")
        assert led.total_supply() == 150


def test_bus_delivers_in_order_and_respects_delay():
    clock = [0]
    bus = OfflineBus(lambda: clock[0])
    bus.send("a", "b", "note", {"n": 1})
    bus.send("a", "b", "note", {"n": 2}, delay=3)
    assert [m.payload["n"] for m in bus.inbox("b")] == [1]
    clock[0] = 3
    assert bus.latest("b", "note").payload["n"] == 2
    assert bus.latest("b", "note", lambda p: p["n"] == 1).payload["n"] == 1
    assert bus.inbox("a") == []


def test_bus_faults():
    clock = [0]
    bus = OfflineBus(lambda: clock[0])
    bus.faults += [drop("secret"), delay("slow", 5), corrupt("data", lambda p: p + b"!")]
    assert bus.send("a", "b", "secret", 1) is None
    assert len(bus.dropped) == 1
    bus.send("a", "b", "slow", 2)
    bus.send("a", "b", "data", b"x")
    assert bus.latest("b", "slow") is None
    assert bus.latest("b", "data").payload == b"x!"
    clock[0] = 5
    assert bus.latest("b", "slow").payload == 2
