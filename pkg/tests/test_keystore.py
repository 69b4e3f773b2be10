import os
import stat

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_chains
from cke.bignum import Rng
from cke.harness import inprocess_chain
from cke.keystore import (
    HEADER_SIZE,
    MAC_SIZE,
    IntegrityError,
    KeyStore,
    StoreData,
    StoreFormatError,
    StoreLocked,
    derive_store_key,
    fingerprint,
    read_passphrase,
    seal,
    unseal,
)

FAST = 16  # folding rounds for tests; the default is deliberately slow


@settings(max_examples=30, deadline=None)
@given(st.binary(max_size=400), st.binary(max_size=40))
def test_seal_roundtrip(plaintext, passphrase):
    blob = seal(plaintext, passphrase, rounds=FAST)
    assert len(blob) == HEADER_SIZE + len(plaintext) + MAC_SIZE
    assert unseal(blob, passphrase, rounds=FAST) == plaintext


def test_ciphertext_hides_plaintext():
    blob = seal(b"A" * 64, b"pw", rounds=FAST)
    assert b"A" * 8 not in blob
    assert seal(b"A" * 64, b"pw", rounds=FAST) != blob


def test_wrong_passphrase():
    blob = seal(b"secret", b"right", rounds=FAST)
    with pytest.raises(IntegrityError):
        unseal(blob, b"wrong", rounds=FAST)
    with pytest.raises(IntegrityError):
        unseal(blob, b"right", rounds=FAST + 1)


def test_every_flipped_byte_is_detected():
    blob = seal(b'{"role": "along"}', b"pw", rounds=FAST)
    for i in range(len(blob)):
        bad = bytearray(blob)
        bad[i] ^= 0x01
        with pytest.raises((IntegrityError, StoreFormatError)):
            unseal(bytes(bad), b"pw", rounds=FAST)


@pytest.mark.parametrize("blob", [b"", b"CKES", b"XXXX" + bytes(80), b"CKES\x09" + bytes(80)])
def test_format_errors(blob):
    with pytest.raises(StoreFormatError):
        unseal(blob, b"pw", rounds=FAST)


def test_store_key_depends_on_every_input():
    salt = bytes(16)
    base = derive_store_key(b"pw", salt, FAST)
    assert derive_store_key(b"pw", salt, FAST) == base
    assert derive_store_key(b"\x00pw", salt, FAST) != base
    assert derive_store_key(b"pw", b"\x01" + salt[1:], FAST) != base
    assert derive_store_key(b"pw", salt, FAST + 1) != base
    assert base[0] != base[1]


def test_store_data_roundtrip(test6):
    _, _, (ca, _) = inprocess_chain(test6, 3, Rng(1))
    data = StoreData(role="along", chain=ca, config={"group": "test6"})
    back = StoreData.from_bytes(data.to_bytes())
    assert back.role == "along" and back.config == {"group": "test6"}
    assert back.chain.index == 3
    assert back.chain.chain_secret.value == ca.chain_secret.value
    assert back.chain.prev_digest == ca.prev_digest
    assert back.chain.link_key.value == ca.link_key.value


def test_store_data_rejects_garbage():
    with pytest.raises(StoreFormatError):
        StoreData.from_bytes(b"not json")
    with pytest.raises(StoreFormatError):
        StoreData.from_bytes(b"{}")


def test_keystore_file_roundtrip(tmp_path):
    path = tmp_path / "peer.store"
    ca, _ = small_chains()
    with KeyStore.open(path, b"pw", FAST) as store:
        assert not store.exists
        store.data = StoreData(role="busu", chain=ca)
        store.save()
    assert stat.S_IMODE(os.stat(path).st_mode) == 0o600
    # no temp files left behind
    assert {p.name for p in tmp_path.iterdir()} == {"peer.store", "peer.store.lock"}
    with KeyStore.open(path, b"pw", FAST) as store:
        assert store.data.role == "busu"
        assert store.data.chain.chain_secret.value == 2
    with pytest.raises(IntegrityError):
        with KeyStore.open(path, b"nope", FAST):
            pass


def test_failed_save_leaves_old_file(tmp_path, monkeypatch):
    path = tmp_path / "peer.store"
    store = KeyStore(path, b"pw", FAST)
    store.data = StoreData(role="along")
    store.save()
    before = path.read_bytes()

    def boom(*args):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    store.data = StoreData(role="busu")
    with pytest.raises(OSError):
        store.save()
    assert path.read_bytes() == before
    assert {p.name for p in tmp_path.iterdir()} == {"peer.store"}


def test_lock_is_exclusive(tmp_path):
    path = tmp_path / "peer.store"
    with KeyStore.open(path, b"pw", FAST):
        with pytest.raises(StoreLocked):
            with KeyStore.open(path, b"pw", FAST):
                pass
    with KeyStore.open(path, b"pw", FAST):
        pass


def test_fingerprint():
    assert len(fingerprint(8)) == 16
    assert fingerprint(8) == fingerprint(8) != fingerprint(9)
    assert fingerprint(8, "a") != fingerprint(8, "b")


def test_passphrase_from_environment(monkeypatch):
    monkeypatch.setenv("CKE_PASSPHRASE", "hunter2")
    assert read_passphrase(confirm=True) == b"hunter2"
