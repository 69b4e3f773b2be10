import hashlib
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cke.bignum import Nat
from cke.digest import (
    DIGEST_SIZE,
    KeyTooShort,
    Nonce,
    Role,
    derive_transfer_keys,
    encode_nat,
    kdf,
    link_digest,
    sha512,
)

SHA512_EMPTY = (
    "cf83e1357eefb8bdf1542850d66d8007d620e4050b5715dc83f4a921d36ce9ce"
    "47d0d13c5d85f2b0ff8318d2877eec2f63b931bd47417a81a538327af927da3e"
)
SHA512_ABC = (
    "ddaf35a193617abacc417349ae20413112e6fa4e89a97ea20a9eeee64b55d39a"
    "2192992a274fc1a836ba3c23a3feebbd454d4423643ce80e2a9ac94fa54ca49f"
)


def reference_kdf(key: int, context: str, out_bits: int) -> int:
    raw = key.to_bytes((key.bit_length() + 7) // 8, "big")
    framed = len(raw).to_bytes(4, "big") + raw
    blocks = b"".join(
        hashlib.sha512(j.to_bytes(4, "big") + context.encode() + framed).digest() for j in range(1, out_bits // 512 + 2)
    )
    nbytes = (out_bits + 7) // 8
    return int.from_bytes(blocks[:nbytes], "big") >> (8 * nbytes - out_bits)


@pytest.mark.parametrize("msg,hexdigest", [(b"", SHA512_EMPTY), (b"abc", SHA512_ABC)])
def test_sha512_vectors(msg, hexdigest):
    assert sha512(msg).hex() == hexdigest


@given(st.binary(max_size=300))
def test_sha512_width(data):
    assert len(sha512(data)) == DIGEST_SIZE


@pytest.mark.parametrize("x,encoded", [(0, "00000000"), (255, "00000001ff"), (256, "000000020100")])
def test_encode_nat(x, encoded):
    assert encode_nat(x).hex() == encoded


@given(st.integers(0, 2**2100))
def test_encode_nat_roundtrip(x):
    enc = encode_nat(x)
    length = int.from_bytes(enc[:4], "big")
    assert len(enc) == 4 + length
    assert int.from_bytes(enc[4:], "big") == x
    assert length == 0 or enc[4] != 0


@pytest.mark.parametrize("width,size", [(1, 1), (6, 1), (8, 1), (9, 2), (1024, 128)])
def test_nonce_width(width, size):
    assert Nonce.zero(width).to_bytes() == bytes(size)
    assert len(Nonce(Nat(2**width - 1), width).to_bytes()) == size


def test_nonce_overflow():
    with pytest.raises(ValueError):
        Nonce(Nat(64), 6)


@given(st.integers(0, 2**1100), st.sampled_from(["chain", "enc", "CKE-MAC"]), st.integers(1, 1600))
def test_kdf_matches_reference(key, ctx, bits):
    out = kdf(key, ctx, bits)
    assert out == reference_kdf(key, ctx, bits)
    assert out.bit_length() <= bits


def test_kdf_examples():
    assert kdf(8, "chain", 48) == kdf(8, "chain", 48)
    assert kdf(8, "chain", 48) != kdf(8, "enc", 48)
    assert kdf(8, "chain", 6) == 9
    assert kdf(123456789, "chain", 1024).bit_length() <= 1024


@pytest.mark.parametrize("bad", [("", 8), ("ctx", 0), ("café", 8)])
def test_kdf_rejects(bad):
    ctx, bits = bad
    with pytest.raises(ValueError):
        kdf(1, ctx, bits)


def test_kdf_depends_on_every_input():
    rnd = random.Random(11)
    for _ in range(1000):
        key, bits = rnd.getrandbits(256), rnd.randint(64, 600)
        base = kdf(key, "chain", bits)
        assert kdf(key ^ 1, "chain", bits) != base
        assert kdf(key, "chaim", bits) != base
        assert kdf(key, "chain", bits + 1) != base


def test_link_digest_role_ordering_test6():
    nonce = Nonce.zero(6)
    along = link_digest(Role.ALONG, 8, 2, b"", nonce)
    busu = link_digest(Role.BUSU, 8, 2, b"", nonce)
    assert along != busu
    assert along == link_digest(Role.ALONG, 8, 2, b"", nonce)
    # i = 0 canonical form: root key in the chain slot, empty previous digest, zero nonce.
    assert along == sha512(encode_nat(8) + encode_nat(2) + b"\x00")
    assert busu == sha512(encode_nat(2) + encode_nat(8) + b"\x00")


def test_role_asymmetry_sampled():
    rnd = random.Random(5)
    for _ in range(1000):
        k, c = rnd.getrandbits(512), rnd.getrandbits(512)
        if k == c:
            continue
        d, nc = rnd.randbytes(64), Nonce(Nat(rnd.getrandbits(512)), 512)
        assert link_digest(Role.ALONG, k, c, d, nc) != link_digest(Role.BUSU, k, c, d, nc)


def test_digest_avalanche():
    rnd = random.Random(3)
    changed = 0
    for _ in range(200):
        k, c = rnd.getrandbits(1024) | 1 << 1023, rnd.getrandbits(1024)
        d, nc = rnd.randbytes(64), Nonce(Nat(rnd.getrandbits(1024)), 1024)
        flipped = k ^ (1 << rnd.randrange(1024))
        a = int.from_bytes(link_digest(Role.ALONG, k, c, d, nc), "big")
        b = int.from_bytes(link_digest(Role.ALONG, flipped, c, d, nc), "big")
        changed += bin(a ^ b).count("1")
    assert changed / (200 * 512) >= 0.30


def test_transfer_keys():
    key = (1 << 1023) | 12345
    keys = derive_transfer_keys(key, 3)
    assert len(keys.enc_key) == 32 and len(keys.mac_key) == 64
    assert keys.enc_key != keys.mac_key[:32]
    assert keys.chain_index_bound == 3
    assert keys.enc_key.hex() not in repr(keys)
    with pytest.raises(KeyTooShort):
        derive_transfer_keys((1 << 255) | 1)
