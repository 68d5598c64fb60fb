"""
Merkle-circuit file sale with succinct proof of misbehavior.

The circuit is the Merkle tree over the file chunks. Elements are laid out
heap-style: element 0 is the root gate, gate ``g`` reads elements ``2g+1`` and
``2g+2``, and the ``n`` leaves (the raw chunks) occupy ``n-1 .. 2n-2``. A gate
outputs ``node_hash`` of its inputs' digests, where a leaf's digest is its
``leaf_hash`` and a gate's digest is its output, so the root element's digest
is exactly the plaintext Merkle root M1.

Every element is encrypted at its own index and the ciphertexts are committed
under a second Merkle root, M2. A buyer holding the key can point at one bad
gate (three ciphertexts plus their M2 proofs) and a contract can check that
claim while touching nothing but the complaint, M2 and the key.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional, Union

from . import crypto
from .crypto import MerkleProof

MAX_LINES_TO_GATE = 2  # fan-in of every gate
GATE_VECTOR_COUNT = MAX_LINES_TO_GATE + 1


class EmptyFile(ValueError):
    pass


@dataclass(frozen=True)
class FileProperties:
    file_size: int
    chunk_size: int
    depth: int

    @property
    def leaf_count(self) -> int:
        return 1 << self.depth

    @property
    def element_count(self) -> int:
        return (2 << self.depth) - 1


def _is_leaf(index: int, leaf_count: int) -> bool:
    return index >= leaf_count - 1


def element_digest(element: bytes, index: int, leaf_count: int) -> bytes:
    if _is_leaf(index, leaf_count):
        return crypto.leaf_hash(element)
    return element


def gate_output(left: bytes, right: bytes, gate: int, leaf_count: int) -> bytes:
    return crypto.node_hash(
        element_digest(left, 2 * gate + 1, leaf_count),
        element_digest(right, 2 * gate + 2, leaf_count),
    )


@dataclass(frozen=True)
class CircuitEncoding:
    props: FileProperties
    elements: tuple

    @property
    def m1(self) -> bytes:
        return element_digest(self.elements[0], 0, self.props.leaf_count)

    def chunks(self) -> list:
        n = self.props.leaf_count
        return list(self.elements[n - 1:])


@dataclass(frozen=True)
class EncryptedEncoding:
    props: FileProperties
    cipher_elements: tuple

    @cached_property
    def tree(self) -> crypto.MerkleTree:
        return crypto.merkle_build(self.cipher_elements)

    @property
    def m2(self) -> bytes:
        return self.tree.root

    def with_element(self, index: int, value: bytes) -> "EncryptedEncoding":
        """Copy with one ciphertext replaced (M2 is recomputed lazily)."""
        elems = list(self.cipher_elements)
        elems[index] = value
        return EncryptedEncoding(self.props, tuple(elems))


class ComplaintKind(enum.IntEnum):
    GATE = 1  # a gate's output is not the hash of its inputs
    ROOT = 2  # the circuit is consistent but its root is not the committed M1


@dataclass(frozen=True)
class Complaint:
    gate_index: int
    encoded_vectors: tuple
    merkle_proofs: tuple
    kind: ComplaintKind = ComplaintKind.GATE

    def to_bytes(self) -> bytes:
        """Length-prefixed, big-endian canonical encoding."""
        out = bytearray()
        out.append(int(self.kind))
        out += self.gate_index.to_bytes(4, "big")
        out += len(self.encoded_vectors).to_bytes(4, "big")
        for vec in self.encoded_vectors:
            out += len(vec).to_bytes(4, "big") + vec
        out += len(self.merkle_proofs).to_bytes(4, "big")
        for proof in self.merkle_proofs:
            raw = proof.to_bytes()
            out += len(raw).to_bytes(4, "big") + raw
        return bytes(out)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Complaint":
        pos = 0

        def take(n: int) -> bytes:
            nonlocal pos
            if pos + n > len(raw):
                raise ValueError("truncated complaint")
            part = raw[pos:pos + n]
            pos += n
            return part

        kind = ComplaintKind(take(1)[0])
        gate = int.from_bytes(take(4), "big")
        vectors = tuple(take(int.from_bytes(take(4), "big"))
                        for _ in range(int.from_bytes(take(4), "big")))
        proofs = tuple(MerkleProof.from_bytes(take(int.from_bytes(take(4), "big")))
                       for _ in range(int.from_bytes(take(4), "big")))
        if pos != len(raw):
            raise ValueError("trailing bytes after complaint")
        return cls(gate, vectors, proofs, kind)

    def __len__(self) -> int:
        return len(self.to_bytes())


@dataclass(frozen=True)
class KeyAndExchange:
    key_hash: bytes
    key: Optional[bytes] = None
    t_key_reveal: int = 0


class Encoding(NamedTuple):
    props: FileProperties
    circuit: CircuitEncoding
    encrypted: EncryptedEncoding
    m1: bytes
    m2: bytes


# --------------------------------------------------------------------------


def file_properties(file_size: int, chunk_size: int) -> FileProperties:
    chunks = max(1, -(-file_size // chunk_size))
    depth = 0
    while (1 << depth) < chunks:
        depth += 1
    return FileProperties(file_size, chunk_size, depth)


def chunk_file(data: bytes, chunk_size: int) -> list:
    """Split into ``chunk_size`` pieces, zero-padding up to a power-of-two count."""
    if not data:
        raise EmptyFile("cannot encode an empty file")
    if chunk_size <= 0:
        raise ValueError("chunk size must be positive")
    props = file_properties(len(data), chunk_size)
    padded = data.ljust(props.leaf_count * chunk_size, b"\x00")
    return [padded[i:i + chunk_size] for i in range(0, len(padded), chunk_size)]


def build_circuit(data: bytes, chunk_size: int) -> CircuitEncoding:
    props = file_properties(len(data), chunk_size)
    chunks = chunk_file(data, chunk_size)
    n = props.leaf_count
    elements: list = [b""] * (2 * n - 1)
    elements[n - 1:] = chunks
    for g in range(n - 2, -1, -1):
        elements[g] = gate_output(elements[2 * g + 1], elements[2 * g + 2], g, n)
    return CircuitEncoding(props, tuple(elements))


def encrypt_circuit(circuit: CircuitEncoding, key: bytes) -> EncryptedEncoding:
    cipher = tuple(crypto.sym_encrypt(key, i, e) for i, e in enumerate(circuit.elements))
    return EncryptedEncoding(circuit.props, cipher)


def encode(data: bytes, chunk_size: int, key: bytes) -> Encoding:
    circuit = build_circuit(data, chunk_size)
    encrypted = encrypt_circuit(circuit, key)
    return Encoding(circuit.props, circuit, encrypted, circuit.m1, encrypted.m2)


def gate_complaint(encrypted: EncryptedEncoding, gate: int) -> Complaint:
    """Complaint against ``gate`` built from the real ciphertexts and proofs."""
    idx = (2 * gate + 1, 2 * gate + 2, gate)
    tree = encrypted.tree
    return Complaint(
        gate,
        tuple(encrypted.cipher_elements[i] for i in idx),
        tuple(tree.prove(i) for i in idx),
    )


def root_complaint(encrypted: EncryptedEncoding) -> Complaint:
    return Complaint(
        0,
        (encrypted.cipher_elements[0],),
        (encrypted.tree.prove(0),),
        ComplaintKind.ROOT,
    )


def decode_and_check(
    encrypted: EncryptedEncoding, key: bytes, m1: bytes
) -> Union[bytes, Complaint]:
    """Decrypt and re-evaluate every gate, deepest first.

    Returns the original file bytes, or a complaint against the first gate
    whose output disagrees with its inputs. A consistent circuit whose root
    does not match ``m1`` yields a root complaint.
    """
    props = encrypted.props
    n = props.leaf_count
    plain = [crypto.sym_decrypt(key, i, c) for i, c in enumerate(encrypted.cipher_elements)]
    for g in range(n - 2, -1, -1):
        if gate_output(plain[2 * g + 1], plain[2 * g + 2], g, n) != plain[g]:
            return gate_complaint(encrypted, g)
    if element_digest(plain[0], 0, n) != m1:
        return root_complaint(encrypted)
    return b"".join(plain[n - 1:])[:props.file_size]


def _tree_shape(proofs) -> Optional[int]:
    """Leaf count of the committed circuit implied by the proof depth."""
    depths = {p.depth for p in proofs}
    if len(depths) != 1:
        return None
    (m2_depth,) = depths
    # 2n-1 elements pad to 2n leaves, except the single-chunk circuit
    return 1 if m2_depth == 0 else 1 << (m2_depth - 1)


def verify_complaint(
    complaint: Complaint, m2: bytes, revealed_key: bytes, m1: Optional[bytes] = None
) -> bool:
    """On-chain judgement: True means the seller's encoding is provably bad.

    ``m1`` is only consulted for root complaints; without it they are invalid.
    """
    vectors, proofs = complaint.encoded_vectors, complaint.merkle_proofs
    if len(vectors) != len(proofs):
        return False
    n = _tree_shape(proofs)
    if n is None:
        return False

    if complaint.kind == ComplaintKind.ROOT:
        if m1 is None or len(vectors) != 1 or proofs[0].leaf_index != 0:
            return False
        if not crypto.merkle_verify(m2, vectors[0], proofs[0]):
            return False
        root = crypto.sym_decrypt(revealed_key, 0, vectors[0])
        return element_digest(root, 0, n) != m1

    g = complaint.gate_index
    if len(vectors) != GATE_VECTOR_COUNT or not 0 <= g < n - 1:
        return False
    expected = (2 * g + 1, 2 * g + 2, g)
    for vec, proof, idx in zip(vectors, proofs, expected):
        if proof.leaf_index != idx or not crypto.merkle_verify(m2, vec, proof):
            return False
    left, right, out = (
        crypto.sym_decrypt(revealed_key, i, v) for i, v in zip(expected, vectors)
    )
    return gate_output(left, right, g, n) != out
