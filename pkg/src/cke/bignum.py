"""Arbitrary-precision natural numbers and the number-theory kernels built on them.

Digit-level arithmetic is carried by CPython's ``int`` (itself a sequence of
fixed-width digits, least-significant first).  Everything above that layer
(exponentiation, extended gcd, inversion, primality, sampling) is written out
here so it can be benchmarked and tested in isolation.

None of this is constant-time.
"""

from __future__ import annotations

import hashlib
import os
import re

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

DIGIT_BITS = 32
_DIGIT_MASK = (1 << DIGIT_BITS) - 1
_HEX_RE = re.compile(r"[0-9a-fA-F]+")


class ParseError(ValueError):
    pass


class Underflow(ArithmeticError):
    pass


class DivisionByZero(ZeroDivisionError):
    pass


class InvalidInput(ValueError):
    pass


class NotInvertible(ArithmeticError):
    pass


class Nat(int):
    """A non-negative integer.

    Subclasses ``int`` so values interoperate with the rest of Python; the
    usual operators return plain ``int``.  Use the module-level functions when
    the checked semantics (underflow, zero modulus) matter.
    """

    __slots__ = ()

    def __new__(cls, value: int = 0) -> "Nat":
        if isinstance(value, Nat):
            return value
        v = int(value)
        if v < 0:
            raise InvalidInput(f"natural numbers are non-negative, got {v}")
        return super().__new__(cls, v)

    @property
    def digits(self) -> tuple[int, ...]:
        """Magnitude as 32-bit digits, least significant first (zero is empty)."""
        out = []
        v = int(self)
        while v:
            out.append(v & _DIGIT_MASK)
            v >>= DIGIT_BITS
        return tuple(out)

    @classmethod
    def from_digits(cls, digits) -> "Nat":
        v = 0
        for d in reversed(tuple(digits)):
            if not 0 <= d <= _DIGIT_MASK:
                raise InvalidInput(f"digit out of range: {d}")
            v = (v << DIGIT_BITS) | d
        return cls(v)

    def __repr__(self) -> str:
        return f"Nat(0x{to_hex(self)})"

    def __reduce__(self):
        return (Nat, (int(self),))


def from_hex(s: str) -> Nat:
    if not isinstance(s, str) or not _HEX_RE.fullmatch(s):
        raise ParseError(f"not a hex string: {s!r}")
    return Nat(int(s, 16))


def to_hex(x: int) -> str:
    return format(int(x), "x")


def add(a: int, b: int) -> Nat:
    return Nat(int(a) + int(b))


def sub(a: int, b: int) -> Nat:
    if a < b:
        raise Underflow(f"{a} - {b} is negative")
    return Nat(int(a) - int(b))


def mul(a: int, b: int) -> Nat:
    return Nat(int(a) * int(b))


def cmp(a: int, b: int) -> int:
    return (a > b) - (a < b)


def rem(a: int, m: int) -> Nat:
    if m == 0:
        raise DivisionByZero("remainder by zero")
    return Nat(int(a) % int(m))


def bitlen(x: int) -> int:
    return int(x).bit_length()


def _check_modulus(m: int) -> int:
    if m < 2:
        raise DivisionByZero(f"modulus must be >= 2, got {m}")
    return int(m)


def modpow_binary(base: int, exp: int, m: int) -> Nat:
    """Left-to-right square-and-multiply."""
    m = _check_modulus(m)
    b = int(base) % m
    result = 1
    for i in range(bitlen(exp) - 1, -1, -1):
        result = result * result % m
        if (exp >> i) & 1:
            result = result * b % m
    return Nat(result % m)


def _window_size(nbits: int) -> int:
    if nbits <= 64:
        return 1
    if nbits <= 256:
        return 3
    if nbits <= 1024:
        return 5
    return 6


def modpow_window(base: int, exp: int, m: int, k: int | None = None) -> Nat:
    """Fixed-window (2^k-ary) exponentiation; same contract as modpow_binary."""
    m = _check_modulus(m)
    exp = int(exp)
    nbits = bitlen(exp)
    if k is None:
        k = _window_size(nbits)
    if k <= 1:
        return modpow_binary(base, exp, m)
    b = int(base) % m
    table = [1 % m, b]
    for _ in range(2, 1 << k):
        table.append(table[-1] * b % m)
    mask = (1 << k) - 1
    nwin = (nbits + k - 1) // k
    result = 1 % m
    for w in range(nwin - 1, -1, -1):
        for _ in range(k):
            result = result * result % m
        d = (exp >> (w * k)) & mask
        if d:
            result = result * table[d] % m
    return Nat(result)


def modpow(base: int, exp: int, m: int) -> Nat:
    """base**exp mod m, for m >= 2."""
    return modpow_window(base, exp, m)


def gcdext(a: int, b: int) -> tuple[Nat, int, int]:
    """Return (g, x, y) with g = gcd(a, b) and a*x + b*y = g."""
    a, b = int(a), int(b)
    if a < 0 or b < 0:
        raise InvalidInput("gcdext takes natural numbers")
    if a == 0 and b == 0:
        raise InvalidInput("gcd(0, 0) is undefined")
    old_r, r = a, b
    old_x, x = 1, 0
    old_y, y = 0, 1
    while r:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_x, x = x, old_x - q * x
        old_y, y = y, old_y - q * y
    return Nat(old_r), old_x, old_y


def invert(a: int, m: int) -> Nat:
    m = _check_modulus(m)
    a = int(a) % m
    if a == 0:
        raise NotInvertible(f"0 has no inverse mod {m}")
    g, x, _ = gcdext(a, m)
    if g != 1:
        raise NotInvertible(f"gcd({a}, {m}) = {g}")
    return Nat(x % m)


class Rng:
    """Seedable generator over the AES-256-CTR keystream.

    ``seed=None`` draws 32 bytes from the OS.  A handle is meant to have a
    single owner; it is not locked.
    """

    _CHUNK = 4096

    def __init__(self, seed: int | bytes | str | None = None):
        if seed is None:
            material = os.urandom(32)
        elif isinstance(seed, bytes):
            material = seed
        elif isinstance(seed, str):
            material = seed.encode()
        else:
            v = int(seed)
            material = v.to_bytes(max(1, (v.bit_length() + 8) // 8), "big", signed=True)
        h = hashlib.sha512(b"cke-rng\x00" + material).digest()
        self._stream = Cipher(algorithms.AES(h[:32]), modes.CTR(h[32:48])).encryptor()
        self._buf = b""

    def randbytes(self, n: int) -> bytes:
        while len(self._buf) < n:
            self._buf += self._stream.update(bytes(max(self._CHUNK, n)))
        out, self._buf = self._buf[:n], self._buf[n:]
        return out

    def randbits(self, k: int) -> int:
        if k <= 0:
            return 0
        nbytes = (k + 7) // 8
        return int.from_bytes(self.randbytes(nbytes), "big") >> (nbytes * 8 - k)

    def randrange(self, lo: int, hi: int) -> int:
        """Uniform in [lo, hi)."""
        span = hi - lo
        if span <= 0:
            raise InvalidInput(f"empty range [{lo}, {hi})")
        k = bitlen(span - 1)
        while True:
            x = self.randbits(k)
            if x < span:
                return lo + x


def rand_below(rng: Rng, m: int) -> Nat:
    """Uniform draw from [1, m-1] by rejection sampling."""
    if m < 2:
        raise InvalidInput(f"rand_below needs m >= 2, got {m}")
    return Nat(rng.randrange(1, int(m)))


# Witnesses 2..41 are a deterministic test below this bound.
MR_DETERMINISTIC_BOUND = 3317044064679887385961981
_MR_FIXED_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
_SMALL_PRIMES = [p for p in range(3, 1000) if all(p % d for d in range(2, int(p**0.5) + 1))]


def _mr_witness(a: int, n: int, d: int, s: int) -> bool:
    """True when ``a`` proves ``n`` composite."""
    x = modpow(a, d, n)
    if x == 1 or x == n - 1:
        return False
    for _ in range(s - 1):
        x = x * x % n
        if x == n - 1:
            return False
    return True


def miller_rabin(n: int, rounds: int = 40, rng: Rng | None = None) -> bool:
    """True for probable primes, False for composites."""
    n = int(n)
    if n < 2:
        raise InvalidInput(f"primality is defined for n >= 2, got {n}")
    if rounds < 1:
        raise InvalidInput("rounds must be >= 1")
    if n in (2, 3):
        return True
    if n % 2 == 0:
        return False
    for p in _SMALL_PRIMES:
        if n == p:
            return True
        if n % p == 0:
            return False
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    if n < MR_DETERMINISTIC_BOUND:
        return not any(_mr_witness(a, n, d, s) for a in _MR_FIXED_WITNESSES)
    if rng is None:
        rng = Rng()
    for _ in range(rounds):
        if _mr_witness(rng.randrange(2, n - 1), n, d, s):
            return False
    return True
