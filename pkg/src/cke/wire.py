"""Handshake frames and the per-link protocol driver.

Frame layout (big-endian)::

    "CKE1" | version=0x01 | kind | chain_index(4) | payload

The driver is a sans-IO state machine (:class:`LinkMachine`): it consumes
datagrams and clock ticks and emits datagrams.  :func:`run_link` runs it over
a blocking datagram transport; :func:`cke.net.simulate` runs it in virtual time.
"""

from __future__ import annotations

import enum
import hmac
from dataclasses import dataclass, field

from .bignum import Nat, Rng, bitlen
from .core import (
    ChainState,
    Offer,
    ProtocolError,
    Reply,
    SessionEphemeral,
    abort,
    check_verify,
    commit,
    make_verify,
    session_complete,
    session_offer,
    session_respond,
)
from .digest import DIGEST_SIZE, Nonce, Role, encode_nat
from .groups import DomainParams, InvalidGroup

MAGIC = b"CKE1"
VERSION = 0x01
HEADER_SIZE = 10
MAX_FRAME = 64 * 1024


class MsgKind(enum.IntEnum):
    OFFER = 0x01
    REPLY = 0x02
    VERIFY = 0x03
    RETRY = 0x04
    ABORT = 0x05


class AbortReason(enum.IntEnum):
    UNSPECIFIED = 0x00
    INVALID_GROUP = 0x01
    INVALID_PUBLIC = 0x02
    CHAIN_INDEX = 0x03
    GROUP_REUSE = 0x04
    WEAK_KEY = 0x05
    VERIFICATION = 0x06
    INVALID_NONCE = 0x07
    STALE = 0x08
    TIMEOUT = 0x09
    PROTOCOL = 0x0F


class MalformedFrame(ValueError):
    pass


@dataclass(frozen=True)
class OfferBody:
    public: Nat
    p: Nat
    g: Nat
    nonce: Nat
    n_bits: int


@dataclass(frozen=True)
class ReplyBody:
    public: Nat


@dataclass(frozen=True)
class VerifyBody:
    digest: bytes


@dataclass(frozen=True)
class RetryBody:
    attempt: int


@dataclass(frozen=True)
class AbortBody:
    reason: int


_BODY_KIND = {
    OfferBody: MsgKind.OFFER,
    ReplyBody: MsgKind.REPLY,
    VerifyBody: MsgKind.VERIFY,
    RetryBody: MsgKind.RETRY,
    AbortBody: MsgKind.ABORT,
}


@dataclass(frozen=True)
class Frame:
    chain_index: int
    body: OfferBody | ReplyBody | VerifyBody | RetryBody | AbortBody

    @property
    def kind(self) -> MsgKind:
        return _BODY_KIND[type(self.body)]

    @classmethod
    def from_offer(cls, offer: Offer) -> "Frame":
        return cls(offer.index, OfferBody(offer.public, offer.p, offer.g, offer.nonce.value, offer.n_bits))

    def to_offer(self) -> Offer:
        b = self.body
        return Offer(public=b.public, p=b.p, g=b.g, nonce=Nonce(b.nonce, b.n_bits), index=self.chain_index)

    @classmethod
    def from_reply(cls, reply: Reply) -> "Frame":
        return cls(reply.index, ReplyBody(reply.public))

    def to_reply(self) -> Reply:
        return Reply(public=self.body.public, index=self.chain_index)


def encode_frame(f: Frame) -> bytes:
    if not 0 <= f.chain_index < 1 << 32:
        raise ValueError("chain index does not fit in 4 bytes")
    b = f.body
    if isinstance(b, OfferBody):
        payload = encode_nat(b.public) + encode_nat(b.p) + encode_nat(b.g) + encode_nat(b.nonce) + b.n_bits.to_bytes(2, "big")
    elif isinstance(b, ReplyBody):
        payload = encode_nat(b.public)
    elif isinstance(b, VerifyBody):
        if len(b.digest) != DIGEST_SIZE:
            raise ValueError("digest must be 64 bytes")
        payload = bytes(b.digest)
    elif isinstance(b, RetryBody):
        payload = bytes([b.attempt])
    else:
        payload = bytes([b.reason])
    out = MAGIC + bytes([VERSION, f.kind]) + f.chain_index.to_bytes(4, "big") + payload
    if len(out) > MAX_FRAME:
        raise ValueError("frame exceeds 64 KiB")
    return out


class _Reader:
    def __init__(self, data: bytes, pos: int):
        self.data, self.pos = data, pos

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise MalformedFrame(f"truncated {what}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def nat(self, what: str) -> Nat:
        length = int.from_bytes(self.take(4, what + " length"), "big")
        body = self.take(length, what)
        if body[:1] == b"\x00":
            raise MalformedFrame(f"non-minimal encoding of {what}")
        return Nat(int.from_bytes(body, "big"))

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise MalformedFrame(f"{len(self.data) - self.pos} trailing bytes")


def decode_frame(data: bytes) -> Frame:
    """Parse one frame; any defect raises MalformedFrame."""
    data = bytes(data)
    if len(data) > MAX_FRAME:
        raise MalformedFrame("frame exceeds 64 KiB")
    if len(data) < HEADER_SIZE:
        raise MalformedFrame("short header")
    if data[:4] != MAGIC:
        raise MalformedFrame("bad magic")
    if data[4] != VERSION:
        raise MalformedFrame(f"unsupported version {data[4]}")
    try:
        kind = MsgKind(data[5])
    except ValueError:
        raise MalformedFrame(f"unknown kind {data[5]:#x}") from None
    index = int.from_bytes(data[6:10], "big")
    r = _Reader(data, HEADER_SIZE)
    if kind is MsgKind.OFFER:
        public, p, g, nonce = r.nat("public"), r.nat("p"), r.nat("g"), r.nat("nonce")
        n_bits = int.from_bytes(r.take(2, "n_bits"), "big")
        if bitlen(nonce) > n_bits:
            raise MalformedFrame("nonce wider than n_bits")
        body = OfferBody(public, p, g, nonce, n_bits)
    elif kind is MsgKind.REPLY:
        body = ReplyBody(r.nat("public"))
    elif kind is MsgKind.VERIFY:
        body = VerifyBody(r.take(DIGEST_SIZE, "digest"))
    elif kind is MsgKind.RETRY:
        body = RetryBody(r.take(1, "attempt")[0])
    else:
        body = AbortBody(r.take(1, "reason")[0])
    r.finish()
    return Frame(index, body)


# -- link driver -----------------------------------------------------------------


class LinkFailure(Exception):
    def __init__(self, phase: str, detail: str = ""):
        super().__init__(f"{type(self).__name__} in {phase}{': ' + detail if detail else ''}")
        self.phase = phase
        self.detail = detail


class LinkTimeout(LinkFailure):
    pass


class VerificationFailedFinal(LinkFailure):
    pass


class PeerAborted(LinkFailure):
    def __init__(self, phase: str, reason: int):
        try:
            name = AbortReason(reason).name
        except ValueError:
            name = f"{reason:#x}"
        super().__init__(phase, name)
        self.reason = reason


class LinkRejected(LinkFailure):
    """The local side refused the peer's values (bad group, range, index, ...)."""


@dataclass
class LinkConfig:
    timeout: float = 2.0
    retries: int = 3
    # Responder's first wait for an OFFER; None means (retries + 2) * timeout.
    accept_timeout: float | None = None
    # Responder's wait after its VERIFY for a late RETRY/ABORT before committing.
    linger: float | None = None

    @property
    def linger_s(self) -> float:
        return self.linger if self.linger is not None else (self.retries + 2) * self.timeout

    @property
    def accept_s(self) -> float:
        return self.accept_timeout if self.accept_timeout is not None else (self.retries + 2) * self.timeout


def _abort_reason(exc: Exception) -> int:
    if isinstance(exc, ProtocolError):
        return exc.code
    if isinstance(exc, InvalidGroup):
        return AbortReason.INVALID_GROUP
    return AbortReason.PROTOCOL


@dataclass
class LinkStats:
    sent: list[MsgKind] = field(default_factory=list)
    received: list[MsgKind] = field(default_factory=list)
    retries_sent: int = 0
    timeouts: int = 0
    malformed: int = 0
    stale: int = 0


class LinkMachine:
    """One side of one chain link.

    ``start``, ``receive`` and ``poll`` return the datagrams to transmit.
    When ``done`` is set, ``chain`` holds the committed (or unchanged) state
    and ``error`` the failure, if any.
    """

    def __init__(
        self,
        role: Role,
        chain: ChainState,
        rng: Rng,
        params: DomainParams | None = None,
        config: LinkConfig | None = None,
        *,
        secret: int | None = None,
        nonce: Nonce | None = None,
    ):
        if role is Role.ALONG and params is None:
            raise ValueError("the initiator chooses the link group")
        self.role = role
        self.chain = chain
        self.rng = rng
        self.params = params
        self.config = config or LinkConfig()
        self._secret = secret
        self._nonce = nonce
        self.state = "idle"
        self.done = False
        self.error: LinkFailure | None = None
        self.deadline: float | None = None
        self.stats = LinkStats()
        self.eph: SessionEphemeral | None = None
        self.key: Nat | None = None
        self._last: bytes | None = None  # datagram to repeat on timeout/retry
        self._offer_bytes: bytes | None = None
        self._mismatches = 0
        self._timeouts = 0

    # -- plumbing --

    @property
    def committed(self) -> bool:
        return self.done and self.error is None

    def _emit(self, frame: Frame) -> bytes:
        self.stats.sent.append(frame.kind)
        return encode_frame(frame)

    def _frame(self, body) -> Frame:
        return Frame(self.chain.index, body)

    def _fail(self, exc: LinkFailure, reason: int | None = None) -> list[bytes]:
        out = []
        if reason is not None:
            out.append(self._emit(self._frame(AbortBody(int(reason)))))
        self.chain = abort(self.chain, self.eph)
        self.error = exc
        self.done = True
        self.deadline = None
        self.state = "failed"
        return out

    def _succeed(self) -> None:
        self.chain = commit(self.chain, self.eph)
        self.done = True
        self.deadline = None
        self.state = "committed"

    # -- entry points --

    def start(self, now: float) -> list[bytes]:
        if self.role is Role.BUSU:
            self.state = "wait_offer"
            self.deadline = now + self.config.accept_s
            return []
        try:
            self.eph, offer = session_offer(self.chain, self.rng, self.params, secret=self._secret, nonce=self._nonce)
        except (ProtocolError, InvalidGroup) as exc:
            return self._fail(LinkRejected("offer", str(exc)))
        self._last = self._emit(Frame.from_offer(offer))
        self.state = "wait_reply"
        self.deadline = now + self.config.timeout
        return [self._last]

    def receive(self, data: bytes, now: float) -> list[bytes]:
        if self.done:
            return []
        try:
            frame = decode_frame(data)
        except MalformedFrame:
            self.stats.malformed += 1
            return []
        if frame.chain_index != self.chain.index:
            self.stats.stale += 1
            return []
        self.stats.received.append(frame.kind)
        if frame.kind is MsgKind.ABORT:
            return self._fail(PeerAborted(self.state, frame.body.reason))
        handler = getattr(self, f"_on_{self.state}")
        return handler(frame, data, now)

    def poll(self, now: float) -> list[bytes]:
        if self.done or self.deadline is None or now < self.deadline:
            return []
        if self.state == "linger":
            self._succeed()
            return []
        self.stats.timeouts += 1
        self._timeouts += 1
        if self.state == "wait_offer" or self._timeouts > self.config.retries:
            reason = None if self.state == "wait_offer" else AbortReason.TIMEOUT
            return self._fail(LinkTimeout(self.state), reason)
        self.deadline = now + self.config.timeout
        return [self._resend()]

    def _resend(self) -> bytes:
        self.stats.sent.append(MsgKind(self._last[5]))
        return self._last

    # -- initiator --

    def _on_wait_reply(self, frame: Frame, data: bytes, now: float) -> list[bytes]:
        if frame.kind is not MsgKind.REPLY:
            return []
        try:
            self.key = session_complete(self.chain, self.eph, frame.to_reply())
        except (ProtocolError, InvalidGroup) as exc:
            return self._fail(LinkRejected("reply", str(exc)), _abort_reason(exc))
        digest = make_verify(self.chain, Role.ALONG, self.key, self.eph.nonce)
        self._last = self._emit(self._frame(VerifyBody(digest)))
        self.state = "wait_verify"
        self._timeouts = 0
        self.deadline = now + self.config.timeout
        return [self._last]

    def _on_wait_verify(self, frame: Frame, data: bytes, now: float) -> list[bytes]:
        if frame.kind is MsgKind.RETRY:
            self.deadline = now + self.config.timeout
            return [self._resend()]
        if frame.kind is not MsgKind.VERIFY:
            return []
        return self._check_peer_digest(frame, now, on_ok=self._initiator_ok)

    def _initiator_ok(self, now: float) -> list[bytes]:
        self._succeed()
        return []

    # -- responder --

    def _on_wait_offer(self, frame: Frame, data: bytes, now: float) -> list[bytes]:
        if frame.kind is not MsgKind.OFFER:
            return []
        try:
            self.eph, reply = session_respond(self.chain, frame.to_offer(), self.rng, secret=self._secret)
        except (ProtocolError, InvalidGroup) as exc:
            return self._fail(LinkRejected("offer", str(exc)), _abort_reason(exc))
        self.key = self.eph.pending_key.value
        self._offer_bytes = data
        self._last = self._emit(Frame.from_reply(reply))
        self.state = "wait_verify_a"
        self.deadline = now + self.config.timeout
        return [self._last]

    def _on_wait_verify_a(self, frame: Frame, data: bytes, now: float) -> list[bytes]:
        if frame.kind is MsgKind.OFFER:
            # Our REPLY was lost and the initiator repeated its OFFER.
            if hmac.compare_digest(data, self._offer_bytes):
                self.deadline = now + self.config.timeout
                return [self._resend()]
            return []
        if frame.kind is not MsgKind.VERIFY:
            return []
        return self._check_peer_digest(frame, now, on_ok=self._responder_ok)

    def _responder_ok(self, now: float) -> list[bytes]:
        digest = make_verify(self.chain, Role.BUSU, self.key, self.eph.nonce)
        self._last = self._emit(self._frame(VerifyBody(digest)))
        self.state = "linger"
        self.deadline = now + self.config.linger_s
        return [self._last]

    def _on_linger(self, frame: Frame, data: bytes, now: float) -> list[bytes]:
        if frame.kind in (MsgKind.RETRY, MsgKind.VERIFY):
            self.deadline = now + self.config.linger_s
            return [self._resend()]
        return []

    # -- shared --

    def _check_peer_digest(self, frame: Frame, now: float, on_ok) -> list[bytes]:
        try:
            check_verify(self.chain, self.role, self.key, self.eph.nonce, frame.body.digest)
        except ProtocolError:
            self._mismatches += 1
            if self._mismatches > self.config.retries:
                return self._fail(VerificationFailedFinal(self.state), AbortReason.VERIFICATION)
            self.stats.retries_sent += 1
            self.deadline = now + self.config.timeout
            return [self._emit(self._frame(RetryBody(self._mismatches)))]
        return on_ok(now)


def run_link(
    transport,
    role: Role,
    chain: ChainState,
    rng: Rng,
    params: DomainParams | None = None,
    config: LinkConfig | None = None,
    **kwargs,
) -> ChainState:
    """Run one link over a blocking datagram transport; raise LinkFailure on failure."""
    from .net import drive

    machine = LinkMachine(role, chain, rng, params, config, **kwargs)
    drive(machine, transport)
    if machine.error is not None:
        raise machine.error
    return machine.chain
