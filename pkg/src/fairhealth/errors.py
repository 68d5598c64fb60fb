"""Revert reasons raised by contract code.

Every subclass of :class:`Revert` aborts the enclosing transaction; the ledger
restores the pre-call state and reports the class name in the receipt.
"""


class Revert(Exception):
    reason = "reverted"

    def __init__(self, reason: str = None):
        self.reason = reason or self.reason
        super().__init__(self.reason)


class InvalidTransaction(Revert):
    reason = "no such transaction entry point"


class NotRegistered(Revert):
    reason = "caller is not registered"


# ledger
class InsufficientFunds(Revert):
    reason = "insufficient funds"


class UnknownEscrow(Revert):
    reason = "unknown escrow"


class AlreadyReleased(Revert):
    reason = "escrow already released"


class NotEscrowHolder(Revert):
    reason = "escrow belongs to another contract"


class BadSplit(Revert):
    reason = "split does not sum to the escrow amount"


class RecordImmutable(Revert):
    reason = "record is write-once"


# shared guards
class CallerMismatch(Revert):
    reason = "caller mismatch"


class WrongValue(Revert):
    reason = "attached value does not match the required amount"


class Expired(Revert):
    reason = "deadline passed"


class NotYetExpired(Revert):
    reason = "counterparty deadline has not lapsed"


class WrongPhase(Revert):
    reason = "operation not allowed in the current phase"


class UnknownId(Revert):
    reason = "unknown identifier"


class KeyMismatch(Revert):
    reason = "key does not open the stored commitment"


class HashMismatch(Revert):
    reason = "hash mismatch"


class BadSignature(Revert):
    reason = "signature does not verify"


# registry
class AlreadyRegistered(Revert):
    reason = "address already registered for this kind"


class NotGovernment(Revert):
    reason = "only the government may onboard this entity kind"


class NotOwner(Revert):
    reason = "only the data owner may change grants"


class BelowThreshold(Revert):
    reason = "security money would drop below the costliest policy price"


class Deregistered(Revert):
    reason = "insurer is deregistered"


# treatment
class Overcharge(Revert):
    reason = "final cost exceeds estimated cost"


class AlreadyComplained(Revert):
    reason = "patient already complained"


# insurance
class DuplicatePending(Revert):
    reason = "a purchase with this insurer is already pending"


class NoPending(Revert):
    reason = "no pending purchase"


class PriceMismatch(Revert):
    reason = "price differs from the locked amount"


class IdentityMismatch(Revert):
    reason = "caller, policy buyer, bill owner and storage applicant differ"


class NotStored(Revert):
    reason = "file is not approved in storage"


class OverClaim(Revert):
    reason = "claimed amount exceeds the final bill"


class DuplicateClaim(Revert):
    reason = "bill already claimed under this policy"


class NoGrant(Revert):
    reason = "insurer lacks read permission"


class NotLocked(Revert):
    reason = "insurer has not locked the claimed amount"


class KeyWasRevealed(Revert):
    reason = "key was already revealed"


class AlreadyApproved(Revert):
    reason = "claim already approved"


class OverApprove(Revert):
    reason = "approved amount exceeds the claim"


class ClaimClosed(Revert):
    reason = "claim is closed"


# storage
class NotFileOwner(Revert):
    reason = "caller does not own this medical file"


class DuplicateApplication(Revert):
    reason = "file already submitted to this database owner"


class RootMismatch(Revert):
    reason = "submitted roots differ from the committed roots"


# research
class NotResearchCommunity(Revert):
    reason = "caller is not a registered research community"


class KeyExpired(Revert):
    reason = "claim key was already used for a file release"
