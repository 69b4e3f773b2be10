"""Passphrase-protected on-disk store for a peer's chain state.

Layout: ``CKES`` | version (1) | salt (16) | nonce (16) | ciphertext | mac (32).
The body is JSON, encrypted with AES-256-CTR; the MAC covers everything
before it.  Writes go to a temp file that is renamed into place.
"""

from __future__ import annotations

import contextlib
import fcntl
import getpass
import hmac
import json
import os
import secrets
import tempfile
from dataclasses import dataclass, field

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .bignum import Nat
from .core import ChainState, CrtState, Secret
from .digest import encode_nat, kdf, sha512
from .groups import DomainParams

MAGIC = b"CKES"
VERSION = 1
SALT_SIZE = 16
NONCE_SIZE = 16
MAC_SIZE = 32
HEADER_SIZE = len(MAGIC) + 1 + SALT_SIZE + NONCE_SIZE
FOLD_ROUNDS = 1 << 16
PASSPHRASE_ENV = "CKE_PASSPHRASE"


class StoreError(Exception):
    pass


class StoreFormatError(StoreError):
    pass


class IntegrityError(StoreError):
    """Wrong passphrase or a modified store file."""


class StoreLocked(StoreError):
    pass


def derive_store_key(passphrase: bytes, salt: bytes, rounds: int = FOLD_ROUNDS) -> tuple[bytes, bytes]:
    """(enc_key, mac_key) from a passphrase; ``rounds`` folds the KDF to slow guessing."""
    # Leading 0x01 keeps leading zero bytes of the passphrase significant.
    key = kdf(Nat(int.from_bytes(b"\x01" + passphrase + salt, "big")), "CKE-STORE", 512)
    for _ in range(rounds):
        key = Nat(int.from_bytes(sha512(encode_nat(key) + salt), "big"))
    raw = int(key).to_bytes(64, "big")
    return raw[:32], raw[32:]


def _ctr(key: bytes, nonce: bytes, data: bytes) -> bytes:
    enc = Cipher(algorithms.AES(key), modes.CTR(nonce)).encryptor()
    return enc.update(data) + enc.finalize()


def _mac(key: bytes, data: bytes) -> bytes:
    return sha512(key + data)[:MAC_SIZE]


def seal(plaintext: bytes, passphrase: bytes, *, rounds: int = FOLD_ROUNDS, salt: bytes | None = None) -> bytes:
    salt = salt or secrets.token_bytes(SALT_SIZE)
    nonce = secrets.token_bytes(NONCE_SIZE)
    enc_key, mac_key = derive_store_key(passphrase, salt, rounds)
    body = MAGIC + bytes([VERSION]) + salt + nonce + _ctr(enc_key, nonce, plaintext)
    return body + _mac(mac_key, body)


def unseal(blob: bytes, passphrase: bytes, *, rounds: int = FOLD_ROUNDS) -> bytes:
    if len(blob) < HEADER_SIZE + MAC_SIZE or blob[:4] != MAGIC:
        raise StoreFormatError("not a key store file")
    if blob[4] != VERSION:
        raise StoreFormatError(f"unsupported store version {blob[4]}")
    salt = blob[5 : 5 + SALT_SIZE]
    nonce = blob[5 + SALT_SIZE : HEADER_SIZE]
    enc_key, mac_key = derive_store_key(passphrase, salt, rounds)
    body, tag = blob[:-MAC_SIZE], blob[-MAC_SIZE:]
    if not hmac.compare_digest(_mac(mac_key, body), tag):
        raise IntegrityError("store authentication failed (wrong passphrase or modified file)")
    return _ctr(enc_key, nonce, body[HEADER_SIZE:])


# -- records ---------------------------------------------------------------------


def _hex(x: int | None) -> str | None:
    return None if x is None else format(int(x), "x")


def _nat(s: str | None) -> Nat | None:
    return None if s is None else Nat(int(s, 16))


def _crt_to_json(c: CrtState) -> dict:
    return {
        "p": _hex(c.params.p),
        "g": _hex(c.params.g),
        "local_secret": _hex(c.local_secret.value),
        "local_public": _hex(c.local_public),
        "peer_public": _hex(c.peer_public),
        "key_crt": _hex(c.key_crt.value) if c.key_crt else None,
    }


def _crt_from_json(d: dict) -> CrtState:
    return CrtState(
        params=DomainParams.make(_nat(d["p"]), _nat(d["g"])),
        local_secret=Secret(_nat(d["local_secret"])),
        local_public=_nat(d["local_public"]),
        peer_public=_nat(d["peer_public"]),
        key_crt=Secret(_nat(d["key_crt"])) if d["key_crt"] is not None else None,
    )


def _chain_to_json(c: ChainState) -> dict:
    return {
        "index": c.index,
        "chain_secret": _hex(c.chain_secret.value),
        "prev_digest": c.prev_digest.hex(),
        "crt_group": [_hex(c.crt_group[0]), _hex(c.crt_group[1])],
        "link_key": _hex(c.link_key.value) if c.link_key else None,
        "link_bits": c.link_bits,
    }


def _chain_from_json(d: dict) -> ChainState:
    return ChainState(
        index=d["index"],
        chain_secret=Secret(_nat(d["chain_secret"])),
        prev_digest=bytes.fromhex(d["prev_digest"]),
        crt_group=(_nat(d["crt_group"][0]), _nat(d["crt_group"][1])),
        link_key=Secret(_nat(d["link_key"])) if d["link_key"] is not None else None,
        link_bits=d["link_bits"],
    )


@dataclass
class StoreData:
    role: str | None = None
    crt: CrtState | None = None
    chain: ChainState | None = None
    config: dict = field(default_factory=dict)

    def to_bytes(self) -> bytes:
        doc = {
            "role": self.role,
            "crt": _crt_to_json(self.crt) if self.crt else None,
            "chain": _chain_to_json(self.chain) if self.chain else None,
            "config": self.config,
        }
        return json.dumps(doc, sort_keys=True).encode()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "StoreData":
        try:
            doc = json.loads(raw)
            return cls(
                role=doc["role"],
                crt=_crt_from_json(doc["crt"]) if doc["crt"] else None,
                chain=_chain_from_json(doc["chain"]) if doc["chain"] else None,
                config=doc.get("config", {}),
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise StoreFormatError(f"store contents unreadable: {exc}") from exc


def fingerprint(value: int, label: str = "CKE-FP") -> str:
    """Short one-way tag of a value, safe to print."""
    return sha512(label.encode() + encode_nat(value))[:8].hex()


class KeyStore:
    """Open store file; hold :meth:`open` as a context manager to keep the lock."""

    def __init__(self, path, passphrase: bytes, rounds: int = FOLD_ROUNDS):
        self.path = os.fspath(path)
        self.passphrase = passphrase
        self.rounds = rounds
        self.data = StoreData()
        self._lock_fd: int | None = None

    @property
    def exists(self) -> bool:
        return os.path.exists(self.path)

    def load(self) -> StoreData:
        with open(self.path, "rb") as fh:
            blob = fh.read()
        self.data = StoreData.from_bytes(unseal(blob, self.passphrase, rounds=self.rounds))
        return self.data

    def save(self) -> None:
        blob = seal(self.data.to_bytes(), self.passphrase, rounds=self.rounds)
        directory = os.path.dirname(os.path.abspath(self.path))
        fd, tmp = tempfile.mkstemp(prefix=".cke-store-", dir=directory)
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(blob)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, self.path)
        except BaseException:
            with contextlib.suppress(FileNotFoundError):
                os.unlink(tmp)
            raise

    def lock(self) -> None:
        fd = os.open(self.path + ".lock", os.O_RDWR | os.O_CREAT, 0o600)
        try:
            fcntl.flock(fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            os.close(fd)
            raise StoreLocked(f"{self.path} is in use by another process") from None
        self._lock_fd = fd

    def unlock(self) -> None:
        if self._lock_fd is not None:
            fcntl.flock(self._lock_fd, fcntl.LOCK_UN)
            os.close(self._lock_fd)
            self._lock_fd = None

    @classmethod
    @contextlib.contextmanager
    def open(cls, path, passphrase: bytes, rounds: int = FOLD_ROUNDS):
        store = cls(path, passphrase, rounds)
        store.lock()
        try:
            if store.exists:
                store.load()
            yield store
        finally:
            store.unlock()


def read_passphrase(confirm: bool = False) -> bytes:
    env = os.environ.get(PASSPHRASE_ENV)
    if env is not None:
        return env.encode()
    first = getpass.getpass("store passphrase: ")
    if confirm and getpass.getpass("repeat passphrase: ") != first:
        raise StoreError("passphrases differ")
    return first.encode()
