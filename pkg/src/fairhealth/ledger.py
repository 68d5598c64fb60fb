"""
Deterministic single-threaded ledger.

All contract state lives here as :class:`ChainRecord` entries keyed by tuples,
next to account balances and escrows. A transaction runs against a snapshot:
if the contract raises :class:`~fairhealth.errors.Revert` the snapshot is put
back, so a failed call leaves balances, escrows and records bit-identical.

Time is a logical tick. Every submitted transaction advances it by one and the
driver may add idle ticks with :meth:`Ledger.advance`; contract code never
moves the clock.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from . import crypto
from .errors import (
    AlreadyReleased,
    BadSplit,
    InsufficientFunds,
    InvalidTransaction,
    NotEscrowHolder,
    NotRegistered,
    RecordImmutable,
    Revert,
    UnknownEscrow,
    WrongValue,
)

DEFAULT_TTL = 10
BASE_TX_OPS = 1


class Purpose(str, enum.Enum):
    EstimatedByHA = "EstimatedByHA"
    EstimatedByP = "EstimatedByP"
    SecurityDeposit = "SecurityDeposit"
    PolicyPrice = "PolicyPrice"
    ClaimLock = "ClaimLock"
    StorageFee = "StorageFee"


@dataclass(frozen=True)
class Escrow:
    id: int
    holder_contract: str
    payer: str
    amount: int
    purpose: Purpose
    tag: tuple = ()
    released: bool = False


@dataclass(frozen=True)
class ChainRecord:
    key: tuple
    value: Any
    written_at: int
    mutable: bool = False


@dataclass(frozen=True)
class Msg:
    """Call context handed to every contract entry point."""

    caller: str
    value: int
    now: int


@dataclass
class TxReceipt:
    tick: int
    contract: str
    function: str
    caller: str
    status: str
    events: list
    op_count: int
    result: Any = None
    error: Optional[Revert] = None

    @property
    def ok(self) -> bool:
        return self.status == "success"

    @property
    def reason(self) -> Optional[str]:
        return None if self.error is None else self.error.reason

    def raise_for_status(self) -> "TxReceipt":
        if self.error is not None:
            raise self.error
        return self

    def to_json(self) -> dict:
        out = {
            "tick": self.tick,
            "contract": self.contract,
            "function": self.function,
            "caller": self.caller,
            "status": self.status,
            "events": self.events,
            "op_count": self.op_count,
        }
        if self.error is not None:
            out["error"] = type(self.error).__name__
            out["reason"] = self.error.reason
        if self.result is not None:
            out["result"] = jsonable(self.result)
        return out


def transaction(fn: Callable) -> Callable:
    """Mark a contract method as a submit-able entry point."""
    fn._is_transaction = True
    return fn


def jsonable(value: Any) -> Any:
    """Canonical JSON-compatible form used for logs and state digests."""
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, (bytes, bytearray)):
        return "0x" + bytes(value).hex()
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: jsonable(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, dict):
        return {key_str(k): jsonable(v) for k, v in sorted(value.items(), key=lambda kv: key_str(kv[0]))}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    raise TypeError(f"cannot serialise {type(value).__name__}")


def key_str(key: Any) -> str:
    if isinstance(key, tuple):
        return "/".join(str(jsonable(k)) for k in key)
    return str(jsonable(key))


def canonical_bytes(value: Any) -> bytes:
    return json.dumps(jsonable(value), sort_keys=True, separators=(",", ":")).encode()


class Contract:
    """Base class: gives contracts scoped record helpers on the shared ledger."""

    name = "contract"
    open_functions: frozenset = frozenset()

    def __init__(self, ledger: "Ledger"):
        self.ledger = ledger

    def get(self, *key, default=None):
        rec = self.ledger.read_record((self.name,) + key)
        return default if rec is None else rec.value

    def put(self, *key_and_value, mutable: bool = False) -> None:
        *key, value = key_and_value
        self.ledger.write_record((self.name,) + tuple(key), value, mutable=mutable)

    def next_id(self, counter: str) -> int:
        current = self.get("idgen", counter, default=0) + 1
        self.put("idgen", counter, current, mutable=True)
        return current

    def emit(self, name: str, **fields) -> None:
        self.ledger.emit(name, **fields)

    def contract(self, name: str) -> "Contract":
        return self.ledger.contracts[name]


@dataclass
class _Tx:
    contract: str
    events: list = field(default_factory=list)
    ops: int = 0
    value: int = 0
    value_locked: int = 0
    caller: str = ""


class Ledger:
    def __init__(self, ttl: int = DEFAULT_TTL):
        self.ttl = ttl
        self.tick = 0
        self.balances: Dict[str, int] = {}
        self.escrows: Dict[int, Escrow] = {}
        self.records: Dict[tuple, ChainRecord] = {}
        self.contracts: Dict[str, Contract] = {}
        self.log: List[TxReceipt] = []
        self.endowment = 0
        self.identity = None  # object with is_known(address); set by the registry
        self._escrow_seq = 0
        self._tx: Optional[_Tx] = None

    # -- setup --------------------------------------------------------------

    def deploy(self, contract: Contract) -> Contract:
        self.contracts[contract.name] = contract
        return contract

    def endow(self, address: str, amount: int) -> None:
        """Genesis allocation; only allowed before the first transaction."""
        if self.tick != 0 or self.log:
            raise RuntimeError("endowments are only possible at genesis")
        if amount < 0:
            raise ValueError("negative endowment")
        self.balances[address] = self.balances.get(address, 0) + amount
        self.endowment += amount

    # -- clock --------------------------------------------------------------

    @property
    def now(self) -> int:
        return self.tick

    @property
    def next_tick(self) -> int:
        """Tick at which the next submitted transaction will execute."""
        return self.tick + 1

    def advance(self, ticks: int = 1) -> None:
        if self._tx is not None:
            raise RuntimeError("contract code cannot move the clock")
        if ticks < 0:
            raise ValueError("time does not run backwards")
        self.tick += ticks

    def skip_to(self, tick: int) -> None:
        """Advance so that the next transaction executes at ``tick``."""
        self.advance(max(0, tick - 1 - self.tick))

    def expired(self, since: int, ttl: Optional[int] = None, now: Optional[int] = None) -> bool:
        """The ``(CST - T) > TTL`` test used by every deadline guard."""
        ttl = self.ttl if ttl is None else ttl
        now = self.tick if now is None else now
        return now - since > ttl

    # -- transactions -------------------------------------------------------

    def submit(self, contract: str, function: str, caller: str, *, value: int = 0, **kwargs) -> TxReceipt:
        if self._tx is not None:
            raise RuntimeError("nested submit")
        self.tick += 1
        snapshot = self._snapshot()
        tx = self._tx = _Tx(contract, value=value, caller=caller)
        result, error = None, None
        with crypto.metered() as meter:
            try:
                target = self.contracts.get(contract)
                fn = getattr(target, function, None) if target is not None else None
                if fn is None or not getattr(fn, "_is_transaction", False):
                    raise InvalidTransaction(f"{contract}.{function} is not a transaction")
                if value < 0:
                    raise WrongValue("negative value")
                if (
                    self.identity is not None
                    and function not in target.open_functions
                    and not self.identity.is_known(caller)
                ):
                    raise NotRegistered()
                if value and self.balances.get(caller, 0) < value:
                    raise InsufficientFunds()
                result = fn(Msg(caller, value, self.tick), **kwargs)
                if tx.value_locked != value:
                    raise WrongValue("attached value was not consumed by the contract")
            except Revert as exc:
                error = exc
                self._restore(snapshot)
        ops = BASE_TX_OPS + tx.ops + meter[0]
        receipt = TxReceipt(
            tick=self.tick,
            contract=contract,
            function=function,
            caller=caller,
            status="success" if error is None else "revert",
            events=[] if error is not None else tx.events,
            op_count=ops,
            result=result if error is None else None,
            error=error,
        )
        self._tx = None
        self.log.append(receipt)
        return receipt

    def _snapshot(self):
        return (dict(self.balances), dict(self.escrows), dict(self.records), self._escrow_seq)

    def _restore(self, snap) -> None:
        self.balances, self.escrows, self.records, self._escrow_seq = (
            dict(snap[0]), dict(snap[1]), dict(snap[2]), snap[3]
        )

    def charge(self, ops: int = 1) -> None:
        if self._tx is not None:
            self._tx.ops += ops

    def emit(self, name: str, **fields) -> None:
        if self._tx is None:
            return
        event = {"name": name}
        event.update({k: jsonable(v) for k, v in fields.items()})
        self._tx.events.append(event)

    # -- money --------------------------------------------------------------

    def balance(self, address: str) -> int:
        return self.balances.get(address, 0)

    def _holder(self, holder: Optional[str]) -> str:
        if holder is not None:
            return holder
        return self._tx.contract if self._tx is not None else "ledger"

    def lock(self, payer: str, amount: int, purpose: Purpose, *, tag: tuple = (),
             holder: Optional[str] = None) -> int:
        """Move ``amount`` from ``payer`` into a new escrow and return its id."""
        if amount < 0:
            raise ValueError("negative escrow")
        if self.balances.get(payer, 0) < amount:
            raise InsufficientFunds(f"{payer[:8]} holds {self.balances.get(payer, 0)} < {amount}")
        self.charge()
        self.balances[payer] -= amount
        self._escrow_seq += 1
        eid = self._escrow_seq
        self.escrows[eid] = Escrow(eid, self._holder(holder), payer, amount, Purpose(purpose), tuple(tag))
        self.emit("Locked", escrow=eid, payer=payer, amount=amount, purpose=Purpose(purpose), tag=list(tag))
        return eid

    def lock_value(self, msg: Msg, purpose: Purpose, *, tag: tuple = ()) -> int:
        """Escrow the value attached to the current call."""
        eid = self.lock(msg.caller, msg.value, purpose, tag=tag)
        if self._tx is not None:
            self._tx.value_locked += msg.value
        return eid

    def release(self, escrow_id: int, to: str, *, holder: Optional[str] = None) -> None:
        esc = self._live(escrow_id, holder)
        self.release_split(escrow_id, [(to, esc.amount)], holder=holder)

    def release_split(self, escrow_id: int, payouts: Sequence[Tuple[str, int]], *,
                      holder: Optional[str] = None) -> None:
        """Close an escrow, paying it out in parts that must sum to its amount."""
        esc = self._live(escrow_id, holder)
        if any(a < 0 for _, a in payouts) or sum(a for _, a in payouts) != esc.amount:
            raise BadSplit()
        self.charge()
        self.escrows[escrow_id] = dataclasses.replace(esc, released=True)
        for to, amount in payouts:
            if amount == 0:
                continue
            self.balances[to] = self.balances.get(to, 0) + amount
            self.emit("Released", escrow=escrow_id, to=to, amount=amount,
                      purpose=esc.purpose, payer=esc.payer, tag=list(esc.tag))

    def _live(self, escrow_id: int, holder: Optional[str]) -> Escrow:
        esc = self.escrows.get(escrow_id)
        if esc is None:
            raise UnknownEscrow(f"escrow {escrow_id}")
        if esc.released:
            raise AlreadyReleased(f"escrow {escrow_id}")
        if esc.holder_contract != self._holder(holder):
            raise NotEscrowHolder()
        return esc

    def live_escrows(self) -> List[Escrow]:
        return [e for e in self.escrows.values() if not e.released]

    def total_supply(self) -> int:
        return sum(self.balances.values()) + sum(e.amount for e in self.live_escrows())

    # -- records ------------------------------------------------------------

    def write_record(self, key: tuple, value: Any, *, mutable: bool = False) -> None:
        key = tuple(key)
        old = self.records.get(key)
        if old is not None and not old.mutable:
            raise RecordImmutable(f"{key_str(key)} already written")
        self.charge()
        self.records[key] = ChainRecord(key, value, self.tick, mutable)

    def read_record(self, key: tuple) -> Optional[ChainRecord]:
        self.charge()
        return self.records.get(tuple(key))

    # -- export -------------------------------------------------------------

    def state(self) -> dict:
        return {
            "balances": self.balances,
            "escrows": {str(k): v for k, v in self.escrows.items()},
            "records": {key_str(k): {"value": r.value, "written_at": r.written_at, "mutable": r.mutable}
                        for k, r in self.records.items()},
        }

    def state_digest(self) -> str:
        """Hex SHA-256 over balances, escrows and records (clock excluded)."""
        return hashlib.sha256(canonical_bytes(self.state())).hexdigest()

    def event_log_lines(self) -> Iterable[str]:
        for receipt in self.log:
            yield json.dumps(receipt.to_json(), sort_keys=True, separators=(",", ":"))

    def export_log(self, path) -> None:
        with open(path, "w") as fh:
            for line in self.event_log_lines():
                fh.write(line + "\n")

    # -- test hooks ---------------------------------------------------------

    def tamper_record(self, key: tuple, value: Any) -> None:
        """Overwrite a record behind the contracts' back (negative controls only)."""
        old = self.records[tuple(key)]
        self.records[tuple(key)] = dataclasses.replace(old, value=value)

    def mint_unchecked(self, address: str, amount: int) -> None:
        """Create money out of thin air (negative controls only)."""
        self.balances[address] = self.balances.get(address, 0) + amount


# --------------------------------------------------------------------------
# offline channel


@dataclass(frozen=True)
class Message:
    seq: int
    sender: str
    recipient: str
    kind: str
    payload: Any
    sent_at: int
    deliver_at: int


class OfflineBus:
    """Authenticated point-to-point channel kept apart from chain state.

    ``faults`` are callables applied to each outgoing message; they may
    return the message unchanged, a modified copy (corrupt, delay) or
    ``None`` to drop it.
    """

    def __init__(self, clock: Callable[[], int]):
        self._clock = clock
        self.messages: List[Message] = []
        self.dropped: List[Message] = []
        self.faults: List[Callable[[Message], Optional[Message]]] = []

    def send(self, sender: str, recipient: str, kind: str, payload: Any, *, delay: int = 0) -> Optional[Message]:
        now = self._clock()
        msg = Message(len(self.messages) + len(self.dropped) + 1, sender, recipient, kind, payload, now, now + delay)
        for fault in self.faults:
            out = fault(msg)
            if out is None:
                self.dropped.append(msg)
                return None
            msg = out
        self.messages.append(msg)
        return msg

    def inbox(self, recipient: str, kind: Optional[str] = None) -> List[Message]:
        now = self._clock()
        return [m for m in self.messages
                if m.recipient == recipient and m.deliver_at <= now and (kind is None or m.kind == kind)]

    def latest(self, recipient: str, kind: str, match: Callable[[Any], bool] = lambda p: True) -> Optional[Message]:
        for m in reversed(self.inbox(recipient, kind)):
            if match(m.payload):
                return m
        return None


def drop(kind: str):
    return lambda m: None if m.kind == kind else m


def delay(kind: str, ticks: int):
    return lambda m: dataclasses.replace(m, deliver_at=m.deliver_at + ticks) if m.kind == kind else m


def corrupt(kind: str, mutate: Callable[[Any], Any]):
    return lambda m: dataclasses.replace(m, payload=mutate(m.payload)) if m.kind == kind else m
