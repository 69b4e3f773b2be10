"""Safe-prime domain parameters: generation, validation, pinned fixtures."""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from importlib import resources

from .bignum import (
    InvalidInput,
    Nat,
    Rng,
    bitlen,
    from_hex,
    miller_rabin,
    modpow,
    to_hex,
)

MR_ROUNDS = 40

# Product of odd primes below 2**12, for a cheap gcd sieve on candidates.
_SIEVE_PRIMES = [p for p in range(3, 1 << 12) if all(p % d for d in range(2, math.isqrt(p) + 1))]
_SIEVE_PRODUCT = math.prod(_SIEVE_PRIMES)


class InvalidGroup(ValueError):
    def __init__(self, reason: "Rejection", detail: str = ""):
        super().__init__(f"{reason.name}{': ' + detail if detail else ''}")
        self.reason = reason


class UnknownGroup(KeyError):
    pass


class Rejection(enum.Enum):
    CompositeModulus = "p is not prime"
    NotSafePrime = "q is not (p-1)/2 or not prime"
    BadGeneratorRange = "g outside [2, p-2]"
    SmallOrderGenerator = "g is not a primitive root"
    BitLengthMismatch = "bitlen(p) != n"


@dataclass(frozen=True)
class DomainParams:
    p: Nat
    q: Nat
    g: Nat
    n: int

    @classmethod
    def make(cls, p: int, g: int) -> "DomainParams":
        p = Nat(p)
        return cls(p=p, q=Nat((p - 1) // 2), g=Nat(g), n=bitlen(p))


def _is_probable_prime(x: int, rng: Rng) -> bool:
    return x >= 2 and miller_rabin(x, MR_ROUNDS, rng)


def validate_group(params: DomainParams, rng: Rng | None = None) -> Rejection | None:
    """None when every invariant holds, else the first failed check."""
    p, q, g, n = int(params.p), int(params.q), int(params.g), params.n
    if rng is None:
        rng = Rng(b"validate_group" + to_hex(p).encode())
    if p < 5 or not _is_probable_prime(p, rng):
        return Rejection.CompositeModulus
    if 2 * q + 1 != p or not _is_probable_prime(q, rng):
        return Rejection.NotSafePrime
    if not 2 <= g <= p - 2:
        return Rejection.BadGeneratorRange
    if g * g % p == 1 or modpow(g, q, p) == 1:
        return Rejection.SmallOrderGenerator
    if bitlen(p) != n:
        return Rejection.BitLengthMismatch
    return None


def require_valid(params: DomainParams, rng: Rng | None = None) -> DomainParams:
    reason = validate_group(params, rng)
    if reason is not None:
        raise InvalidGroup(reason, f"p={to_hex(params.p)}")
    return params


def generate_safe_prime(bits: int, rng: Rng) -> Nat:
    """Random safe prime p = 2q + 1 with bitlen(p) == bits."""
    if bits < 3:
        raise InvalidInput("safe primes need at least 3 bits")
    qbits = bits - 1
    while True:
        q = rng.randbits(qbits) | (1 << (qbits - 1))
        if qbits > 2:
            q |= 1
        p = 2 * q + 1
        if q > _SIEVE_PRIMES[-1] and (math.gcd(q, _SIEVE_PRODUCT) != 1 or math.gcd(p, _SIEVE_PRODUCT) != 1):
            continue
        # Cheap base-2 Fermat filter before the full test on both.
        if q > 3 and modpow(2, q - 1, q) != 1:
            continue
        if _is_probable_prime(q, rng) and _is_probable_prime(p, rng):
            return Nat(p)


def _is_primitive_root(g: int, p: int) -> bool:
    q = (p - 1) // 2
    return 2 <= g <= p - 2 and g * g % p != 1 and modpow(g, q, p) != 1


def find_primitive_root(p: int, rng: Rng) -> Nat:
    """A random primitive root of the safe prime p."""
    p = int(p)
    q = (p - 1) // 2
    if p < 5 or not _is_probable_prime(p, rng) or not _is_probable_prime(q, rng):
        raise InvalidInput(f"{p} is not a safe prime")
    # Half of [2, p-2] are primitive roots (phi(p-1) = q - 1), so this ends fast.
    while True:
        g = rng.randrange(2, p - 1)
        if _is_primitive_root(g, p):
            return Nat(g)


def generate_group(bits: int, rng: Rng) -> DomainParams:
    p = generate_safe_prime(bits, rng)
    return DomainParams.make(p, find_primitive_root(p, rng))


# -- fixture file ------------------------------------------------------------


def parse_records(text: str) -> list[dict[str, str]]:
    """Blank-line separated blocks of key=value lines; '#' starts a comment."""
    records, current = [], {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            if current:
                records.append(current)
                current = {}
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got {raw!r}")
        current[key.strip()] = value.strip()
    if current:
        records.append(current)
    return records


def format_record(fields: dict[str, object]) -> str:
    return "".join(f"{k}={v}\n" for k, v in fields.items())


def load_fixtures(text: str) -> dict[str, DomainParams]:
    groups = {}
    for rec in parse_records(text):
        p = from_hex(rec["p"])
        params = DomainParams(p=p, q=Nat((p - 1) // 2), g=from_hex(rec["g"]), n=int(rec["n"]))
        require_valid(params)
        groups[rec["name"]] = params
    return groups


def dump_fixture(name: str, params: DomainParams) -> str:
    return format_record({"name": name, "p": to_hex(params.p), "g": to_hex(params.g), "n": params.n})


BUILTIN_NAMES = ("test5", "test6", "bench1024", "bench2048")


@functools.lru_cache(maxsize=None)
def _builtin_text() -> str:
    return resources.files("cke").joinpath("data/groups.txt").read_text()


@functools.lru_cache(maxsize=None)
def builtin_group(name: str) -> DomainParams:
    """Pinned group by name, validated on first load."""
    if name not in BUILTIN_NAMES:
        raise UnknownGroup(name)
    for rec in parse_records(_builtin_text()):
        if rec["name"] == name:
            return load_fixtures(format_record(rec))[name]
    raise UnknownGroup(name)
