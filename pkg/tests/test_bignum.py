import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import digitref as ref
from cke.bignum import (
    DivisionByZero,
    InvalidInput,
    MR_DETERMINISTIC_BOUND,
    Nat,
    NotInvertible,
    ParseError,
    Rng,
    Underflow,
    add,
    bitlen,
    cmp,
    from_hex,
    gcdext,
    invert,
    miller_rabin,
    modpow,
    modpow_binary,
    modpow_window,
    mul,
    rand_below,
    rem,
    sub,
    to_hex,
)

u64 = st.integers(min_value=0, max_value=2**64 - 1)


def sieve(limit: int) -> list[bool]:
    flags = [True] * limit
    flags[0] = flags[1] = False
    for i in range(2, math.isqrt(limit - 1) + 1):
        if flags[i]:
            flags[i * i :: i] = [False] * len(flags[i * i :: i])
    return flags


@pytest.mark.parametrize("text,value,canon", [("0", 0, "0"), ("ff", 255, "ff"), ("00ff", 255, "ff"), ("ABC", 0xABC, "abc")])
def test_hex_examples(text, value, canon):
    x = from_hex(text)
    assert x == value and to_hex(x) == canon


@pytest.mark.parametrize("bad", ["", "0x10", "g", " 1", "-1", "1 2"])
def test_hex_rejects(bad):
    with pytest.raises(ParseError):
        from_hex(bad)


@given(st.text(alphabet="0123456789abcdefABCDEF", min_size=1, max_size=80))
def test_hex_roundtrip(s):
    stripped = s.lower().lstrip("0") or "0"
    assert to_hex(from_hex(s)) == stripped


def test_nat_canonical_digits():
    assert Nat(0).digits == ()
    x = Nat(2**64 + 5)
    assert x.digits == (5, 0, 1)
    assert x.digits[-1] != 0
    assert Nat.from_digits(x.digits) == x
    with pytest.raises(InvalidInput):
        Nat(-1)


def test_arith_examples():
    assert add(0, 12345) == 12345
    assert sub(23, 23) == 0
    assert rem(2048, 23) == 1
    with pytest.raises(Underflow):
        sub(3, 4)
    with pytest.raises(DivisionByZero):
        rem(5, 0)


@given(u64, u64)
def test_arith_matches_limb_oracle(a, b):
    la, lb = ref.limbs(a), ref.limbs(b)
    assert add(a, b) == ref.value(ref.add(la, lb))
    assert mul(a, b) == ref.value(ref.mul(la, lb))
    assert cmp(a, b) == ref.cmp(la, lb)
    if a >= b:
        assert sub(a, b) == ref.value(ref.sub(la, lb))
    else:
        with pytest.raises(Underflow):
            sub(a, b)
    if b:
        assert rem(a, b) == ref.value(ref.rem(la, lb))


@pytest.mark.parametrize("modpow_fn", [modpow, modpow_binary, modpow_window])
@pytest.mark.parametrize("base,exp,m,expected", [(5, 6, 23, 8), (19, 6, 23, 2), (7, 0, 11, 1), (0, 0, 5, 1), (3, 5, 2, 1)])
def test_modpow_examples(modpow_fn, base, exp, m, expected):
    assert modpow_fn(base, exp, m) == expected


@pytest.mark.parametrize("m", [0, 1])
def test_modpow_small_modulus(m):
    with pytest.raises(DivisionByZero):
        modpow(2, 3, m)


@settings(max_examples=300)
@given(st.integers(0, 2**16 - 1), st.integers(0, 2**12 - 1), st.integers(2, 2**16 - 1))
def test_modpow_matches_repeated_multiplication(base, exp, m):
    acc = 1 % m
    for _ in range(exp):
        acc = acc * base % m
    assert modpow(base, exp, m) == acc


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**512), st.integers(0, 2**300), st.integers(2, 2**512), st.integers(1, 6))
def test_modpow_variants_agree_with_limb_oracle(base, exp, m, k):
    want = ref.value(ref.powmod(ref.limbs(base), exp, ref.limbs(m)))
    assert modpow_binary(base, exp, m) == want
    assert modpow_window(base, exp, m, k) == want


@pytest.mark.parametrize("a,b,expected", [(240, 46, (2, -9, 47)), (7, 3, (1, 1, -2)), (9, 0, (9, 1, 0))])
def test_gcdext_examples(a, b, expected):
    assert gcdext(a, b) == expected


def test_gcdext_zero_zero():
    with pytest.raises(InvalidInput):
        gcdext(0, 0)


def test_bezout_on_wide_pairs():
    rnd = random.Random(2048)
    for _ in range(1000):
        a, b = rnd.getrandbits(rnd.randint(1, 2048)), rnd.getrandbits(rnd.randint(1, 2048))
        if a == b == 0:
            continue
        g, x, y = gcdext(a, b)
        assert a * x + b * y == g == math.gcd(a, b)


@pytest.mark.parametrize("a,m,expected", [(1, 9, 1), (3, 7, 5), (10, 17, 12)])
def test_invert_examples(a, m, expected):
    assert invert(a, m) == expected


@pytest.mark.parametrize("a,m", [(2, 4), (0, 7), (6, 9)])
def test_invert_rejects(a, m):
    with pytest.raises(NotInvertible):
        invert(a, m)


@given(st.integers(0, 2**256), st.integers(2, 2**256))
def test_invert_property(a, m):
    try:
        r = invert(a, m)
    except NotInvertible:
        assert math.gcd(a, m) != 1
    else:
        assert r * a % m == 1


@pytest.mark.parametrize("x,n", [(0, 0), (1, 1), (23, 5), (2**1023, 1024)])
def test_bitlen(x, n):
    assert bitlen(x) == n


def test_rand_below():
    assert rand_below(Rng(1), 2) == 1
    assert [rand_below(Rng("s"), 10**30) for _ in range(3)] == [rand_below(Rng("s"), 10**30) for _ in range(3)]
    rng = Rng(7)
    seen = {rand_below(rng, 23) for _ in range(10_000)}
    assert seen == set(range(1, 23))
    with pytest.raises(InvalidInput):
        rand_below(rng, 1)


def test_rng_seeding():
    assert Rng(5).randbytes(40) == Rng(5).randbytes(40)
    assert Rng(5).randbytes(40) != Rng(6).randbytes(40)
    assert Rng().randbytes(16) != Rng().randbytes(16)
    r = Rng(0)
    assert all(0 <= r.randbits(13) < 2**13 for _ in range(200))


@pytest.mark.parametrize(
    "n,prime",
    [(2, True), (3, True), (561, False), (2305843009213693951, True), (2**61 + 1, False), (MR_DETERMINISTIC_BOUND, False)],
)
def test_miller_rabin_examples(n, prime):
    assert miller_rabin(n) is prime


def test_miller_rabin_matches_sieve():
    flags = sieve(10_000)
    assert all(miller_rabin(n) == flags[n] for n in range(2, 10_000))


def test_miller_rabin_beyond_deterministic_bound():
    # Mersenne prime versus a product of two Mersenne primes.
    assert miller_rabin(2**127 - 1, rng=Rng(3))
    assert not miller_rabin((2**61 - 1) * (2**89 - 1), rng=Rng(3))


@pytest.mark.parametrize("n,rounds", [(1, 40), (0, 40), (7, 0)])
def test_miller_rabin_input_checks(n, rounds):
    with pytest.raises(InvalidInput):
        miller_rabin(n, rounds)
