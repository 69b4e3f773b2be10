"""SHA-512 constructions: field framing, key expansion, link digests, transfer keys."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass

from .bignum import Nat, bitlen

DIGEST_SIZE = 64


class KeyTooShort(ValueError):
    pass


class Role(enum.Enum):
    ALONG = "along"  # initiator
    BUSU = "busu"  # responder

    @property
    def peer(self) -> "Role":
        return Role.BUSU if self is Role.ALONG else Role.ALONG


def sha512(data: bytes) -> bytes:
    return hashlib.sha512(data).digest()


def nat_bytes(x: int) -> bytes:
    """Minimal big-endian magnitude; zero is empty."""
    x = int(x)
    return x.to_bytes((x.bit_length() + 7) // 8, "big")


def encode_nat(x: int) -> bytes:
    body = nat_bytes(x)
    return len(body).to_bytes(4, "big") + body


@dataclass(frozen=True)
class Nonce:
    value: Nat
    width: int  # bits

    def __post_init__(self):
        if bitlen(self.value) > self.width:
            raise ValueError(f"nonce {self.value} does not fit in {self.width} bits")

    @classmethod
    def zero(cls, width: int) -> "Nonce":
        return cls(Nat(0), width)

    def to_bytes(self) -> bytes:
        return int(self.value).to_bytes((self.width + 7) // 8, "big")


def kdf(key: int, context: str, out_bits: int) -> Nat:
    """Counter-mode SHA-512 expansion, truncated to the leading out_bits."""
    if out_bits < 1:
        raise ValueError("out_bits must be >= 1")
    if not context or not context.isascii():
        raise ValueError("context must be non-empty ASCII")
    nbytes = (out_bits + 7) // 8
    tail = context.encode("ascii") + encode_nat(key)
    stream = b""
    j = 1
    while len(stream) < nbytes:
        stream += sha512(j.to_bytes(4, "big") + tail)
        j += 1
    return Nat(int.from_bytes(stream[:nbytes], "big") >> (nbytes * 8 - out_bits))


def link_digest(role: Role, key_i: int, prev_chain: int, prev_digest: bytes, nonce: Nonce) -> bytes:
    """Per-role confirmation digest; the two roles order their key fields oppositely."""
    if role is Role.ALONG:
        head = encode_nat(key_i) + encode_nat(prev_chain)
    else:
        head = encode_nat(prev_chain) + encode_nat(key_i)
    return sha512(head + prev_digest + nonce.to_bytes())


@dataclass(frozen=True, repr=False)
class TransferKeys:
    enc_key: bytes
    mac_key: bytes
    chain_index_bound: int

    def __repr__(self) -> str:
        return f"TransferKeys(chain_index_bound={self.chain_index_bound})"


def derive_transfer_keys(key_i: int, chain_index: int = 0) -> TransferKeys:
    # 2k-bit exponent for a k = 256-bit symmetric key.
    if bitlen(key_i) < 512:
        raise KeyTooShort(f"link key has {bitlen(key_i)} bits, need >= 512")
    return TransferKeys(
        enc_key=int(kdf(key_i, "CKE-ENC", 256)).to_bytes(32, "big"),
        mac_key=int(kdf(key_i, "CKE-MAC", 512)).to_bytes(64, "big"),
        chain_index_bound=chain_index,
    )
