"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import random
import time

import numpy as np
import pytest

from conftest import small_chains
from cke.bignum import Nat, Rng, add, cmp, miller_rabin, mul, rem, sub
from cke.core import InvalidPublicValue, WeakKey, link_key, session_complete, session_offer, session_respond
from cke.digest import Role, derive_transfer_keys, sha512
from cke.groups import builtin_group
from cke.harness import SCENARIOS, bench_chain_cycle, simulate_transfer, tamper_matrix
from cke.net import SimChannel, simulate
from cke.sectftp import (
    BLOCK_SIZE,
    Ack,
    Data,
    MalformedPacket,
    Opcode,
    Request,
    aes256_encrypt_block,
    decode_packet,
    encode_packet,
)
from cke.wire import Frame, LinkMachine, MalformedFrame, OfferBody, ReplyBody, VerifyBody, decode_frame, encode_frame


@pytest.fixture
def report(capsys):
    def emit(number: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
        assert ok, detail

    return emit


def brute_power(x: int, e: int, p: int) -> int:
    acc = 1
    for _ in range(e):
        acc = acc * x % p
    return acc


def test_c1_small_group_oracle(report):
    t0 = time.perf_counter()
    p, g, chain = 47, 5, 2
    params = builtin_group("test6")
    mismatches = protocol_runs = 0
    for x in range(1, 46):
        pub_a = brute_power(g, x, p)
        for y in range(1, 46):
            pub_b = brute_power(g, y, p)
            oracle = brute_power(pub_b, x, p) * brute_power(g, chain, p) % p
            k_init, k_resp = link_key(pub_b, x, chain, params), link_key(pub_a, y, chain, params)
            mismatches += not (k_init == k_resp == oracle)
            ca, cb = small_chains()
            try:
                eph_a, offer = session_offer(ca, None, params, secret=x)
                eph_b, reply = session_respond(cb, offer, None, secret=y, strong=False)
                k = session_complete(ca, eph_a, reply, strong=False)
            except (WeakKey, InvalidPublicValue):
                continue  # a equal to the chain secret, or a public value of p - 1
            protocol_runs += 1
            mismatches += not (k == eph_b.pending_key.value == oracle)
    elapsed = time.perf_counter() - t0
    report(1, "small-group oracle", mismatches == 0 and elapsed < 10,
           f"2025 pairs, {protocol_runs} through the protocol, {mismatches} mismatches, {elapsed:.2f}s")


def test_c2_worked_fixture(report):
    params = builtin_group("test6")
    ca, cb = small_chains()
    eph_a, offer = session_offer(ca, None, params, secret=10)
    eph_b, reply = session_respond(cb, offer, None, secret=19)
    key = session_complete(ca, eph_a, reply)
    # same values through the wire machines
    wa, wb = small_chains()
    along = LinkMachine(Role.ALONG, wa, Rng(0), params, secret=10)
    busu = LinkMachine(Role.BUSU, wb, Rng(0), secret=19)
    ch = SimChannel()
    simulate([(along, ch, 0), (busu, ch, 1)])
    got = (int(offer.public), int(reply.public), int(key), int(along.key), int(busu.key))
    report(2, "worked fixture", got == (12, 10, 8, 8, 8), f"offer public {got[0]}, reply public {got[1]}, link key {got[2]} (wire {got[3]}/{got[4]})")


def test_c3_chain_integrity(report):
    committed, outcomes = tamper_matrix(builtin_group("test6"), links=10, seed=0)
    false_accepts = sum(o.false_accept for o in outcomes)
    report(3, "chain integrity", committed == 10 and len(outcomes) == 40 and false_accepts == 0,
           f"{committed}/10 links committed, {len(outcomes)} tamper cases, {false_accepts} false accepts")


def test_c4_attack_suite(report):
    lines, ok = [], True
    for name, run in SCENARIOS.items():
        normal, inversion = run(Rng(f"acceptance/{name}"))
        ok &= normal.successes == 0 and inversion.successes > 0 and inversion.verdict == "pass"
        lines.append(f"{name} {normal.successes}/{normal.runs} vs inverted {inversion.successes}/{inversion.runs}")
    report(4, "attack suite", ok, "; ".join(lines))


def test_c5_benchmark_scaling(report):
    small = bench_chain_cycle(1024, trials=10)
    large = bench_chain_cycle(2048, trials=10)
    ratio = large.mean_s / small.mean_s
    report(5, "benchmark scaling", 4 <= ratio <= 12 and small.mean_s < 1.0,
           f"1024-bit {small.mean_s:.4f}s, 2048-bit {large.mean_s:.4f}s, ratio {ratio:.2f}")


def _tamper_block(block: int, where: str):
    def hook(src, data):
        if data[:2] == b"\x00\x03" and int.from_bytes(data[2:4], "big") == block:
            buf = bytearray(data)
            buf[-1 if where == "mac" else 4] ^= 0x01
            return bytes(buf)
        return data

    return hook


def test_c6_transfer_roundtrip(report):
    t0 = time.perf_counter()
    rnd = random.Random(6)
    keys = derive_transfer_keys((1 << 1023) | rnd.getrandbits(1000), 1)
    sizes = [rnd.randint(0, 64 * 1024) for _ in range(100)] + [1 << 20]
    exact = 0
    for i, size in enumerate(sizes):
        payload = rnd.randbytes(size)
        ch = SimChannel(drop_rate=0.05, dup_rate=0.02, latency=(1, 20), seed=i)
        _, _, sink = simulate_transfer(keys, payload, ch, direction="put" if i % 2 else "get")
        exact += sink.data == payload
    rejected = cases = 0
    for i in range(40):
        block, where = 1 + i % 5, "mac" if i % 2 else "ct"
        payload = rnd.randbytes(5 * BLOCK_SIZE + 1)
        ch = SimChannel(seed=100 + i, tamper=_tamper_block(block, where))
        _, _, sink = simulate_transfer(keys, payload, ch, direction="put" if i % 4 < 2 else "get")
        cases += 1
        # the tampered block's plaintext never reached the sink and nothing was committed
        rejected += sink.data is None and sink.written == (block - 1) * BLOCK_SIZE
    elapsed = time.perf_counter() - t0
    report(6, "transfer round-trip", exact == len(sizes) and rejected == cases and elapsed < 60,
           f"{exact}/{len(sizes)} files bit-exact, {rejected}/{cases} tampers rejected, {elapsed:.1f}s")


def _sieve(limit: int) -> list[bool]:
    flags = [True] * limit
    flags[0] = flags[1] = False
    for i in range(2, int(limit**0.5) + 1):
        if flags[i]:
            flags[i * i :: i] = [False] * len(flags[i * i :: i])
    return flags


def test_c7_primitive_conformance(report):
    sha_ok = (
        sha512(b"").hex().startswith("cf83e1357eefb8bdf1542850d66d8007")
        and sha512(b"").hex().endswith("a538327af927da3e")
        and sha512(b"abc").hex().startswith("ddaf35a193617abacc417349ae204131")
        and sha512(b"abc").hex().endswith("2a9ac94fa54ca49f")
    )
    aes_ok = aes256_encrypt_block(bytes(range(32)), bytes.fromhex("00112233445566778899aabbccddeeff")).hex() == "8ea2b7ca516745bfeafc49904b496089"
    flags = _sieve(10_000)
    mr_bad = sum(miller_rabin(n) != flags[n] for n in range(2, 10_000))

    # Native double-width oracle: 32-bit operands in uint64 never overflow.
    gen = np.random.default_rng(7)
    n = 100_000
    xs = gen.integers(0, 2**32, n, dtype=np.uint64)
    ys = gen.integers(1, 2**32, n, dtype=np.uint64)
    sums, prods, mods = xs + ys, xs * ys, xs % ys
    diffs = np.where(xs >= ys, xs - ys, 0)
    cmps = np.sign(xs.astype(np.int64) - ys.astype(np.int64))
    bad = 0
    for i in range(n):
        x, y = Nat(int(xs[i])), Nat(int(ys[i]))
        bad += add(x, y) != int(sums[i]) or mul(x, y) != int(prods[i]) or rem(x, y) != int(mods[i])
        bad += cmp(x, y) != int(cmps[i])
        if x >= y:
            bad += sub(x, y) != int(diffs[i])
    report(7, "primitive conformance", sha_ok and aes_ok and mr_bad == 0 and bad == 0,
           f"sha512 {'ok' if sha_ok else 'bad'}, aes256 {'ok' if aes_ok else 'bad'}, "
           f"miller-rabin {mr_bad} disagreements below 10^4, bignum {bad} mismatches in {n} cases")


def _mutants(seeds: list[bytes], rnd: random.Random, count: int):
    for i in range(count):
        kind = i % 4
        if kind == 0:
            yield rnd.randbytes(rnd.randrange(96))
        else:
            buf = bytearray(rnd.choice(seeds))
            for _ in range(rnd.randint(1, 3)):
                if buf:
                    buf[rnd.randrange(len(buf))] = rnd.randrange(256)
            if kind == 2:
                buf = buf[: rnd.randrange(len(buf) + 1)]
            elif kind == 3:
                buf += rnd.randbytes(rnd.randrange(8))
            yield bytes(buf)


def test_c8_decoder_robustness(report):
    rnd = random.Random(8)
    frame_seeds = [
        encode_frame(Frame(0, OfferBody(Nat(12), Nat(47), Nat(5), Nat(0), 6))),
        encode_frame(Frame(9, ReplyBody(Nat(2**1023 + 5)))),
        encode_frame(Frame(3, VerifyBody(bytes(64)))),
    ]
    packet_seeds = [
        encode_packet(Request(Opcode.RRQ, "a.bin", bytes(8), 4)),
        encode_packet(Data(2, b"z" * 100, bytes(32))),
        encode_packet(Ack(7)),
    ]
    t0 = time.perf_counter()
    crashes, accepted = 0, [0, 0]
    for raw in _mutants(frame_seeds, rnd, 100_000):
        try:
            f = decode_frame(raw)
            crashes += encode_frame(f) != raw
            accepted[0] += 1
        except MalformedFrame:
            pass
        except Exception:
            crashes += 1
    for raw in _mutants(packet_seeds, rnd, 100_000):
        try:
            decode_packet(raw)
            accepted[1] += 1
        except MalformedPacket:
            pass
        except Exception:
            crashes += 1
    elapsed = time.perf_counter() - t0
    report(8, "decoder robustness", crashes == 0 and elapsed < 120,
           f"2 x 100000 inputs, {crashes} unstructured failures, {accepted[0]}/{accepted[1]} decoded, {elapsed:.1f}s")
