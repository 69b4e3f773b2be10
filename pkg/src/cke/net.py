"""Datagram transports and the two ways of running protocol machines.

A machine exposes ``start(now)``, ``receive(data, now)``, ``poll(now)``,
``deadline`` and ``done``.  :func:`drive` runs one machine against a blocking
transport in wall-clock time; :func:`simulate` runs several machines over
:class:`SimChannel` links in virtual time, deterministically per seed.
"""

from __future__ import annotations

import heapq
import itertools
import random
import socket
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol

LINK_PORT = 6969
TFTP_PORT = 6970
MAX_DATAGRAM = 65536


class Transport(Protocol):
    def send(self, data: bytes) -> None: ...

    def recv(self, timeout: float) -> bytes | None: ...


class UdpTransport:
    """One peer over UDP.  Without ``peer`` it learns the address from the first datagram."""

    def __init__(self, sock: socket.socket, peer: tuple[str, int] | None = None):
        self.sock = sock
        self.peer = peer

    @classmethod
    def listen(cls, host: str = "127.0.0.1", port: int = LINK_PORT) -> "UdpTransport":
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((host, port))
        return cls(sock)

    @classmethod
    def connect(cls, host: str, port: int = LINK_PORT) -> "UdpTransport":
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        sock.bind(("0.0.0.0" if host not in ("127.0.0.1", "localhost") else "127.0.0.1", 0))
        return cls(sock, (socket.gethostbyname(host), port))

    @property
    def address(self) -> tuple[str, int]:
        return self.sock.getsockname()

    def send(self, data: bytes) -> None:
        if self.peer is None:
            raise RuntimeError("peer address unknown until a datagram arrives")
        self.sock.sendto(data, self.peer)

    def recv(self, timeout: float) -> bytes | None:
        end = time.monotonic() + max(0.0, timeout)
        while True:
            remaining = end - time.monotonic()
            if remaining <= 0:
                return None
            self.sock.settimeout(remaining)
            try:
                data, addr = self.sock.recvfrom(MAX_DATAGRAM)
            except (socket.timeout, BlockingIOError):
                return None
            if self.peer is None:
                self.peer = addr
            if addr == self.peer:
                return data

    def close(self) -> None:
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def drive(machine, transport: Transport, clock: Callable[[], float] = time.monotonic):
    """Run ``machine`` to completion over a blocking transport."""
    for d in machine.start(clock()):
        transport.send(d)
    while not machine.done:
        now = clock()
        wait = 0.05 if machine.deadline is None else max(0.0, machine.deadline - now)
        data = transport.recv(wait)
        now = clock()
        out = machine.receive(data, now) if data is not None else machine.poll(now)
        for d in out:
            transport.send(d)
    return machine


@dataclass
class ChannelStats:
    sent: int = 0
    dropped: int = 0
    duplicated: int = 0
    corrupted: int = 0
    delivered: int = 0


@dataclass
class SimChannel:
    """Two-ended lossy datagram channel with seeded fault injection.

    Sides are 0 and 1.  ``latency`` is a (min, max) range in milliseconds,
    drawn per datagram, so varying latency also reorders.  ``tamper`` is an
    adversary hook ``(src_side, data) -> data | None`` applied before the
    random faults; returning None swallows the datagram.
    """

    drop_rate: float = 0.0
    dup_rate: float = 0.0
    corrupt_rate: float = 0.0
    latency: tuple[float, float] = (1.0, 5.0)
    seed: int = 0
    tamper: Callable[[int, bytes], bytes | None] | None = None
    stats: ChannelStats = field(default_factory=ChannelStats)

    def __post_init__(self):
        for name in ("drop_rate", "dup_rate", "corrupt_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        self._rng = random.Random(self.seed)
        self._queue: list[tuple[float, int, int, bytes]] = []
        self._seq = itertools.count()
        self.log: list[tuple[float, int, bytes]] = []

    def _delay(self) -> float:
        lo, hi = self.latency
        return self._rng.uniform(lo, hi) / 1000.0

    def send(self, src: int, data: bytes, now: float) -> None:
        """sim_send: queue ``data`` from side ``src`` to the other side."""
        self.stats.sent += 1
        self.log.append((now, src, bytes(data)))
        if self.tamper is not None:
            data = self.tamper(src, bytes(data))
            if data is None:
                self.stats.dropped += 1
                return
        if self._rng.random() < self.drop_rate:
            self.stats.dropped += 1
            return
        copies = 1
        if self._rng.random() < self.dup_rate:
            copies = 2
            self.stats.duplicated += 1
        for _ in range(copies):
            payload = data
            if payload and self._rng.random() < self.corrupt_rate:
                buf = bytearray(payload)
                bit = self._rng.randrange(len(buf) * 8)
                buf[bit // 8] ^= 1 << (bit % 8)
                payload = bytes(buf)
                self.stats.corrupted += 1
            heapq.heappush(self._queue, (now + self._delay(), next(self._seq), 1 - src, payload))

    def recv(self, dst: int, now: float) -> list[bytes]:
        """sim_recv: everything addressed to ``dst`` that has arrived by ``now``."""
        keep, out = [], []
        while self._queue and self._queue[0][0] <= now:
            item = heapq.heappop(self._queue)
            (out if item[2] == dst else keep).append(item)
        for item in keep:
            heapq.heappush(self._queue, item)
        self.stats.delivered += len(out)
        return [item[3] for item in out]

    def next_time(self) -> float | None:
        return self._queue[0][0] if self._queue else None

    def pending(self) -> int:
        return len(self._queue)


def simulate(bindings, max_time: float = 3600.0) -> float:
    """Run machines in virtual time until all are done or nothing is left to happen.

    ``bindings`` is a list of ``(machine, channel, side)``.  Returns the final
    virtual time.
    """
    now = 0.0
    for m, ch, side in bindings:
        for d in m.start(now):
            ch.send(side, d, now)
    channels = list({id(ch): ch for _, ch, _ in bindings}.values())
    while True:
        for m, ch, side in bindings:
            for d in ch.recv(side, now):
                for out in m.receive(d, now):
                    ch.send(side, out, now)
            for out in m.poll(now):
                ch.send(side, out, now)
        if all(m.done for m, _, _ in bindings):
            return now
        times = [t for t in (ch.next_time() for ch in channels) if t is not None]
        times += [m.deadline for m, _, _ in bindings if not m.done and m.deadline is not None]
        if not times:
            return now
        nxt = min(times)
        if nxt > max_time:
            return now
        now = max(now, nxt)
