"""
Cryptographic building blocks shared by every contract.

SHA-256 is the only hash. Merkle leaves and internal nodes are domain
separated (0x00 / 0x01 prefix). The symmetric cipher is a SHAKE-256 keystream
keyed by ``(key, index)`` so each position gets an independent pad, and
signatures are Ed25519 (deterministic, so replays produce identical logs).

Every primitive reports one unit of work to the active operation meter, if
any; the ledger uses this to produce its gas-like op counts.
"""

from __future__ import annotations

import contextlib
import contextvars
import hashlib
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

DIGEST_SIZE = 32
KEY_SIZE = 32
LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"

LEFT = 0
RIGHT = 1


class CryptoError(ValueError):
    pass


class EmptyInput(CryptoError):
    pass


class IndexOutOfRange(CryptoError, IndexError):
    pass


class MalformedProof(CryptoError):
    pass


# --------------------------------------------------------------------------
# operation metering

_meter: contextvars.ContextVar[Optional[list]] = contextvars.ContextVar(
    "fairhealth_op_meter", default=None
)


@contextlib.contextmanager
def metered() -> Iterator[list]:
    """Count primitive invocations made inside the block.

    Yields a one-element list whose item is the running count.
    """
    counter = [0]
    token = _meter.set(counter)
    try:
        yield counter
    finally:
        _meter.reset(token)


def _count(n: int = 1) -> None:
    counter = _meter.get()
    if counter is not None:
        counter[0] += n


# --------------------------------------------------------------------------
# hashing and commitments


def digest(data: bytes) -> bytes:
    """SHA-256 of ``data``."""
    _count()
    return hashlib.sha256(data).digest()


def leaf_hash(chunk: bytes) -> bytes:
    return digest(LEAF_PREFIX + chunk)


def node_hash(left: bytes, right: bytes) -> bytes:
    return digest(NODE_PREFIX + left + right)


def commit(key: bytes) -> bytes:
    """Hash commitment to a secret key."""
    return digest(key)


def opens(commitment: bytes, key: bytes) -> bool:
    return digest(key) == commitment


# --------------------------------------------------------------------------
# Merkle trees


@dataclass(frozen=True)
class MerkleProof:
    leaf_index: int
    siblings: tuple  # of (digest, side) with side the sibling's position

    @property
    def depth(self) -> int:
        return len(self.siblings)

    def to_bytes(self) -> bytes:
        out = bytearray(self.leaf_index.to_bytes(4, "big"))
        out += len(self.siblings).to_bytes(2, "big")
        for sib, side in self.siblings:
            out.append(side)
            out += sib
        return bytes(out)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "MerkleProof":
        if len(raw) < 6:
            raise MalformedProof("truncated proof")
        index = int.from_bytes(raw[:4], "big")
        count = int.from_bytes(raw[4:6], "big")
        body = raw[6:]
        if len(body) != count * (1 + DIGEST_SIZE):
            raise MalformedProof("proof length does not match sibling count")
        siblings = []
        for k in range(count):
            part = body[k * (1 + DIGEST_SIZE):(k + 1) * (1 + DIGEST_SIZE)]
            siblings.append((bytes(part[1:]), part[0]))
        return cls(index, tuple(siblings))


@dataclass(frozen=True)
class MerkleTree:
    leaves: tuple
    levels: tuple  # levels[0] = leaf hashes, levels[-1] = (root,)
    pad_count: int

    @property
    def root(self) -> bytes:
        return self.levels[-1][0]

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def __len__(self) -> int:
        return len(self.leaves)

    def prove(self, index: int) -> MerkleProof:
        return merkle_prove(self, index)


def _next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p <<= 1
    return p


def merkle_build(chunks: Sequence[bytes], chunk_size: Optional[int] = None) -> MerkleTree:
    """Build a binary Merkle tree, zero-padding the leaf list to a power of two.

    Padding chunks are ``chunk_size`` zero bytes, or as long as the longest
    chunk when no size is given.
    """
    if not chunks:
        raise EmptyInput("cannot build a Merkle tree over zero chunks")
    chunks = [bytes(c) for c in chunks]
    if chunk_size is not None:
        for c in chunks:
            if len(c) > chunk_size:
                raise CryptoError(f"chunk of {len(c)} bytes exceeds buffer size {chunk_size}")
        pad = bytes(chunk_size)
    else:
        pad = bytes(max(len(c) for c in chunks))
    width = _next_pow2(len(chunks))
    pad_count = width - len(chunks)
    leaves = tuple(chunks + [pad] * pad_count)
    level = tuple(leaf_hash(c) for c in leaves)
    levels = [level]
    while len(level) > 1:
        level = tuple(node_hash(level[i], level[i + 1]) for i in range(0, len(level), 2))
        levels.append(level)
    return MerkleTree(leaves, tuple(levels), pad_count)


def merkle_root(chunks: Sequence[bytes], chunk_size: Optional[int] = None) -> bytes:
    return merkle_build(chunks, chunk_size).root


def merkle_prove(tree: MerkleTree, index: int) -> MerkleProof:
    if not 0 <= index < len(tree.leaves):
        raise IndexOutOfRange(f"leaf {index} not in tree of {len(tree.leaves)} leaves")
    siblings = []
    pos = index
    for level in tree.levels[:-1]:
        if pos % 2 == 0:
            siblings.append((level[pos + 1], RIGHT))
        else:
            siblings.append((level[pos - 1], LEFT))
        pos //= 2
    return MerkleProof(index, tuple(siblings))


def merkle_verify(root: bytes, leaf: bytes, proof: MerkleProof) -> bool:
    """Check that ``leaf`` sits at ``proof.leaf_index`` under ``root``.

    Sides must agree with the index bits, so a proof cannot be replayed for a
    different position.
    """
    if not 0 <= proof.leaf_index < (1 << proof.depth):
        return False
    node = leaf_hash(leaf)
    pos = proof.leaf_index
    for sib, side in proof.siblings:
        if len(sib) != DIGEST_SIZE:
            return False
        if pos % 2 == 0:
            if side != RIGHT:
                return False
            node = node_hash(node, sib)
        else:
            if side != LEFT:
                return False
            node = node_hash(sib, node)
        pos //= 2
    return node == root


# --------------------------------------------------------------------------
# index-bound symmetric encryption


def keystream(key: bytes, index: int, length: int) -> bytes:
    xof = hashlib.shake_256(b"fairhealth/stream" + key + index.to_bytes(8, "big"))
    return xof.digest(length)


def sym_encrypt(key: bytes, index: int, value: bytes) -> bytes:
    _count()
    pad = keystream(key, index, len(value))
    return bytes(a ^ b for a, b in zip(value, pad))


sym_decrypt = sym_encrypt


# --------------------------------------------------------------------------
# signatures


@dataclass(frozen=True)
class KeyPair:
    signing_key: Ed25519PrivateKey
    verification_key: bytes

    @classmethod
    def from_seed(cls, seed: bytes) -> "KeyPair":
        sk = Ed25519PrivateKey.from_private_bytes(hashlib.sha256(b"fairhealth/sk" + seed).digest())
        vk = sk.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )
        return cls(sk, vk)

    @property
    def address(self) -> str:
        """Entity address: the hex verification key."""
        return self.verification_key.hex()

    def sign(self, message: bytes) -> bytes:
        return sign(self.signing_key, message)


def sign(signing_key: Ed25519PrivateKey, message: bytes) -> bytes:
    _count()
    return signing_key.sign(message)


def verify_sig(verification_key: bytes, message: bytes, signature: bytes) -> bool:
    _count()
    try:
        Ed25519PublicKey.from_public_bytes(verification_key).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True


def address_key(address: str) -> bytes:
    """Verification key bytes behind a hex address."""
    return bytes.fromhex(address)
