import hashlib

import pytest
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey
from hypothesis import given
from hypothesis import strategies as st

from fairhealth import crypto
from fairhealth.crypto import KeyPair, MerkleProof

# RFC 8032 Ed25519 test vector 1
RFC_SK = bytes.fromhex("9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60")
RFC_PK = bytes.fromhex("d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a")
RFC_SIG = bytes.fromhex(
    "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065"
    "224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b"
)

chunk_lists = st.lists(st.binary(min_size=1, max_size=16), min_size=1, max_size=20)


def test_digest_matches_fips_vector():
    assert crypto.digest(b"abc").hex() == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


def test_domain_separated_hashes_differ():
    assert crypto.leaf_hash(b"x") == hashlib.sha256(b"\x00x").digest()
    assert crypto.node_hash(b"a", b"b") == hashlib.sha256(b"\x01ab").digest()
    assert crypto.leaf_hash(b"\x01ab") != crypto.node_hash(b"a", b"b")


def test_commitment_opens_only_with_its_key():
    c = crypto.commit(b"k" * 32)
    assert crypto.opens(c, b"k" * 32)
    assert not crypto.opens(c, b"j" * 32)


def test_merkle_root_against_hand_computed_tree():
    a, b, c = b"alpha", b"beta", b"gamma"
    pad = bytes(5)
    h = hashlib.sha256
    la, lb, lc, lp = (h(b"\x00" + x).digest() for x in (a, b, c, pad))
    expected = h(b"\x01" + h(b"\x01" + la + lb).digest() + h(b"\x01" + lc + lp).digest()).digest()
    tree = crypto.merkle_build([a, b, c])
    assert tree.root == expected
    assert tree.pad_count == 1
    assert tree.depth == 2


def test_single_chunk_tree_is_its_leaf_hash():
    assert crypto.merkle_root([b"only"]) == crypto.leaf_hash(b"only")


def test_empty_tree_is_rejected():
    with pytest.raises(crypto.EmptyInput):
        crypto.merkle_build([])


def test_chunk_larger_than_buffer_is_rejected():
    with pytest.raises(crypto.CryptoError):
        crypto.merkle_build([b"12345"], chunk_size=4)


def test_prove_out_of_range():
    tree = crypto.merkle_build([b"a", b"b"])
    with pytest.raises(crypto.IndexOutOfRange):
        tree.prove(2)


@given(chunk_lists, st.data())
def test_every_leaf_proof_verifies(chunks, data):
    tree = crypto.merkle_build(chunks)
    i = data.draw(st.integers(0, len(tree.leaves) - 1))
    proof = tree.prove(i)
    assert crypto.merkle_verify(tree.root, tree.leaves[i], proof)
    assert MerkleProof.from_bytes(proof.to_bytes()) == proof


@given(chunk_lists, st.data())
def test_proof_rejects_other_leaf_or_position(chunks, data):
    tree = crypto.merkle_build(chunks)
    i = data.draw(st.integers(0, len(tree.leaves) - 1))
    proof = tree.prove(i)
    assert not crypto.merkle_verify(tree.root, tree.leaves[i] + b"!", proof)
    if proof.depth:
        moved = MerkleProof(i ^ 1, proof.siblings)
        assert not crypto.merkle_verify(tree.root, tree.leaves[i], moved)


def test_malformed_proof_bytes():
    with pytest.raises(crypto.MalformedProof):
        MerkleProof.from_bytes(b"\x00\x00")
    good = crypto.merkle_build([b"a", b"b"]).prove(0).to_bytes()
    with pytest.raises(crypto.MalformedProof):
        MerkleProof.from_bytes(good[:-1])


@given(st.binary(min_size=32, max_size=32), st.integers(0, 2**32), st.binary(max_size=200))
def test_cipher_round_trip(key, index, value):
    ct = crypto.sym_encrypt(key, index, value)
    assert crypto.sym_decrypt(key, index, ct) == value
    assert len(ct) == len(value)


def test_cipher_keystream_is_shake256():
    key = b"\x07" * 32
    pad = hashlib.shake_256(b"fairhealth/stream" + key + (3).to_bytes(8, "big")).digest(4)
    assert crypto.sym_encrypt(key, 3, b"\x00" * 4) == pad


def test_cipher_is_index_bound():
    key = b"\x07" * 32
    assert crypto.sym_encrypt(key, 0, b"same") != crypto.sym_encrypt(key, 1, b"same")


def test_signature_matches_rfc8032_vector():
    sk = Ed25519PrivateKey.from_private_bytes(RFC_SK)
    assert crypto.sign(sk, b"") == RFC_SIG
    assert crypto.verify_sig(RFC_PK, b"", RFC_SIG)
    assert not crypto.verify_sig(RFC_PK, b"x", RFC_SIG)


def test_keypair_is_deterministic_and_address_is_key():
    a, b = KeyPair.from_seed(b"seed"), KeyPair.from_seed(b"seed")
    assert a.address == b.address
    assert crypto.address_key(a.address) == a.verification_key
    sig = a.sign(b"msg")
    assert crypto.verify_sig(a.verification_key, b"msg", sig)
    assert not crypto.verify_sig(KeyPair.from_seed(b"other").verification_key, b"msg", sig)


def test_verify_tolerates_garbage_keys():
    assert not crypto.verify_sig(b"short", b"m", b"s" * 64)


def test_meter_counts_primitive_calls():
    with crypto.metered() as meter:
        crypto.digest(b"a")
        crypto.sym_encrypt(b"k" * 32, 0, b"x")
        KeyPair.from_seed(b"s").sign(b"m")
    assert meter[0] == 3
    crypto.digest(b"outside")
    assert meter[0] == 3
