"""Chained key exchange: root-of-trust setup, then per-link agreement and confirmation.

Every link key is

    link_key = peer_public ** own_secret * g ** chain_secret  (mod p)

where chain_secret is the root key before link 0 and the kdf of the
previous link key after.
Secret values live in zeroizable buffers (:class:`Secret`); commit and abort
wipe whatever the link no longer needs.
"""

from __future__ import annotations

import functools
import hmac
from dataclasses import dataclass, field

from .bignum import Nat, Rng, bitlen, modpow, rand_below
from .digest import Nonce, Role, kdf, link_digest, nat_bytes
from .groups import DomainParams, InvalidGroup, Rejection, generate_group, validate_group

CHAIN_CONTEXT = "chain"
MAX_RESAMPLES = 256


class ProtocolError(Exception):
    """Base for protocol-level failures; ``code`` is the on-wire abort reason."""

    code = 0x0F


class InvalidPublicValue(ProtocolError):
    code = 0x02


class ChainIndexMismatch(ProtocolError):
    code = 0x03


class GroupReuseViolation(ProtocolError):
    code = 0x04


class WeakKey(ProtocolError):
    code = 0x05


class VerificationFailed(ProtocolError):
    code = 0x06


class InvalidNonce(ProtocolError):
    code = 0x07


class StaleState(ProtocolError):
    code = 0x08


class WipedSecret(RuntimeError):
    pass


class Secret:
    """A secret integer held in a mutable buffer so it can be zeroized.

    Python may still hold transient ``int`` copies made during arithmetic;
    only this buffer is guaranteed wiped.
    """

    __slots__ = ("_buf", "_wiped")

    def __init__(self, value: int):
        self._buf = bytearray(nat_bytes(value) or b"\x00")
        self._wiped = False

    @property
    def value(self) -> Nat:
        if self._wiped:
            raise WipedSecret("secret has been wiped")
        return Nat(int.from_bytes(self._buf, "big"))

    def wipe(self) -> None:
        for i in range(len(self._buf)):
            self._buf[i] = 0
        self._wiped = True

    @property
    def wiped(self) -> bool:
        return self._wiped and not any(self._buf)

    def buffer(self) -> bytearray:
        """The raw storage, for post-wipe inspection in tests."""
        return self._buf

    def copy(self) -> "Secret":
        return Secret(self.value)

    def __repr__(self) -> str:
        return "Secret(<wiped>)" if self._wiped else "Secret(<hidden>)"


@functools.lru_cache(maxsize=64)
def _group_rejection(params: DomainParams) -> Rejection | None:
    return validate_group(params)


def check_group(params: DomainParams) -> DomainParams:
    reason = _group_rejection(params)
    if reason is not None:
        raise InvalidGroup(reason)
    return params


def check_public(x: int, p: int) -> Nat:
    # Rejects 0, 1 and p-1: the order-1 and order-2 elements.
    if not 2 <= x <= p - 2:
        raise InvalidPublicValue("public value outside [2, p-2]")
    return Nat(x)


def check_key_strength(key: int, n: int) -> Nat:
    """Raise WeakKey unless bitlen(key) >= n - 2."""
    if bitlen(key) < n - 2:
        raise WeakKey(f"key has {bitlen(key)} bits, need >= {n - 2}")
    return Nat(key)


def next_chain_secret(key: int, n: int) -> Nat:
    return kdf(key, CHAIN_CONTEXT, n)


def _check_link_key(key: int, n: int, current: int | None = None) -> Nat:
    check_key_strength(key, n)
    nxt = next_chain_secret(key, n)
    # A zero chain secret would drop the chaining term from the next link.
    if nxt == 0:
        raise WeakKey("derived chain secret is zero")
    # Keys are never recycled, even where n is small enough for collisions.
    if current is not None and nxt == current:
        raise WeakKey("derived chain secret repeats the current one")
    # A link key equal to the chain secret would make both roles' digests identical.
    if current is not None and key == current:
        raise WeakKey("link key equals the chain secret")
    return Nat(key)


# -- messages ------------------------------------------------------------------


@dataclass(frozen=True)
class CrtOffer:
    public: Nat
    p: Nat
    g: Nat


@dataclass(frozen=True)
class CrtReply:
    public: Nat


@dataclass(frozen=True)
class Offer:
    public: Nat
    p: Nat
    g: Nat
    nonce: Nonce
    index: int

    @property
    def n_bits(self) -> int:
        return self.nonce.width


@dataclass(frozen=True)
class Reply:
    public: Nat
    index: int


# -- state -----------------------------------------------------------------------


@dataclass
class CrtState:
    params: DomainParams
    local_secret: Secret
    local_public: Nat
    peer_public: Nat | None = None
    key_crt: Secret | None = None

    @property
    def complete(self) -> bool:
        return self.key_crt is not None


@dataclass
class ChainState:
    index: int
    chain_secret: Secret
    prev_digest: bytes
    crt_group: tuple[Nat, Nat]
    # Most recent verified link key, kept for deriving transfer keys.
    link_key: Secret | None = None
    link_bits: int = 0
    consumed: bool = False

    @classmethod
    def from_crt(cls, crt: CrtState) -> "ChainState":
        if crt.key_crt is None:
            raise StaleState("root-of-trust setup is not complete")
        return cls(
            index=0,
            chain_secret=crt.key_crt.copy(),
            prev_digest=b"",
            crt_group=(crt.params.p, crt.params.g),
        )

    def _live(self) -> "ChainState":
        if self.consumed:
            raise StaleState("chain state was already advanced or discarded")
        return self

    def wipe(self) -> None:
        self.chain_secret.wipe()
        if self.link_key is not None:
            self.link_key.wipe()
        self.consumed = True


@dataclass
class SessionEphemeral:
    params: DomainParams
    secret: Secret
    public: Nat
    nonce: Nonce
    index: int
    pending_key: Secret | None = None
    wiped: bool = field(default=False)

    def buffers(self) -> list[bytearray]:
        out = [self.secret.buffer()]
        if self.pending_key is not None:
            out.append(self.pending_key.buffer())
        return out

    def wipe(self) -> None:
        self.secret.wipe()
        if self.pending_key is not None:
            self.pending_key.wipe()
        self.wiped = True


# -- root of trust ------------------------------------------------------------


def _draw_secret(rng: Rng, params: DomainParams, avoid: int | None = None) -> Nat:
    p = params.p
    for _ in range(MAX_RESAMPLES):
        s = rand_below(rng, p - 1)  # [1, p-2]
        if s == avoid:
            continue
        # The public value must survive the peer's range check.
        if modpow(params.g, s, p) in (1, p - 1):
            continue
        return s
    raise WeakKey("could not draw an admissible secret")


def crt_offer(
    rng: Rng,
    bits: int | None = None,
    *,
    params: DomainParams | None = None,
    secret: int | None = None,
) -> tuple[CrtState, CrtOffer]:
    """Initiator side of root-of-trust setup: fresh group (unless given) and secret."""
    if params is None:
        if bits is None or bits < 3:
            raise ValueError("need bits >= 3 or explicit params")
        params = generate_group(bits, rng)
    else:
        check_group(params)
    own = Nat(secret) if secret is not None else _draw_secret(rng, params)
    own_public = modpow(params.g, own, params.p)
    state = CrtState(params=params, local_secret=Secret(own), local_public=own_public)
    return state, CrtOffer(public=own_public, p=params.p, g=params.g)


def crt_respond(
    offer: CrtOffer,
    rng: Rng,
    *,
    secret: int | None = None,
    strong: bool = True,
) -> tuple[CrtReply, CrtState]:
    """Responder side; with ``strong`` the root key must pass the length rule."""
    params = check_group(DomainParams.make(offer.p, offer.g))
    peer_public = check_public(offer.public, params.p)
    for _ in range(MAX_RESAMPLES):
        own = Nat(secret) if secret is not None else _draw_secret(rng, params)
        key = modpow(peer_public, own, params.p)
        if strong:
            try:
                check_key_strength(key, params.n)
            except WeakKey:
                if secret is not None:
                    raise
                continue
        own_public = modpow(params.g, own, params.p)
        state = CrtState(params, Secret(own), own_public, peer_public=peer_public, key_crt=Secret(key))
        return CrtReply(public=own_public), state
    raise WeakKey("no strong root key after resampling")


def crt_complete(state: CrtState, reply: CrtReply, *, strong: bool = True) -> CrtState:
    p = state.params.p
    peer_public = check_public(reply.public, p)
    key = modpow(peer_public, state.local_secret.value, p)
    if strong:
        check_key_strength(key, state.params.n)
    state.peer_public = peer_public
    state.key_crt = Secret(key)
    return state


# -- chained session ----------------------------------------------------------


def _check_distinct(chain: ChainState, params: DomainParams) -> None:
    p_crt, g_crt = chain.crt_group
    if params.p == p_crt or params.g == g_crt:
        raise GroupReuseViolation("link group must differ from the root-of-trust group in both p and g")


def session_offer(
    chain: ChainState,
    rng: Rng,
    params: DomainParams,
    *,
    secret: int | None = None,
    nonce: Nonce | None = None,
) -> tuple[SessionEphemeral, Offer]:
    chain._live()
    _check_distinct(chain, params)
    check_group(params)
    current = chain.chain_secret.value
    if secret is not None:
        own = Nat(secret)
        if own == current:
            raise WeakKey("session secret equals the chain secret")
    else:
        own = _draw_secret(rng, params, avoid=current)
    own_public = modpow(params.g, own, params.p)
    if nonce is None:
        if chain.index == 0:
            nonce = Nonce.zero(params.n)
        else:
            nonce = Nonce(Nat(rng.randbits(params.n)), params.n)
    eph = SessionEphemeral(params=params, secret=Secret(own), public=own_public, nonce=nonce, index=chain.index)
    return eph, Offer(public=own_public, p=params.p, g=params.g, nonce=nonce, index=chain.index)


def link_key(peer_public: int, own_secret: int, chain_secret: int, params: DomainParams) -> Nat:
    p = params.p
    return Nat(modpow(peer_public, own_secret, p) * modpow(params.g, chain_secret, p) % p)


def session_respond(
    chain: ChainState,
    offer: Offer,
    rng: Rng,
    *,
    secret: int | None = None,
    strong: bool = True,
) -> tuple[SessionEphemeral, Reply]:
    """Responder side of a link; returns the ephemeral holding the link key as pending."""
    chain._live()
    if offer.index != chain.index:
        raise ChainIndexMismatch(f"offer for link {offer.index}, chain is at {chain.index}")
    params = DomainParams.make(offer.p, offer.g)
    if offer.n_bits != params.n:
        raise InvalidGroup(Rejection.BitLengthMismatch)
    _check_distinct(chain, params)
    check_group(params)
    peer_public = check_public(offer.public, params.p)
    if chain.index == 0 and offer.nonce.value != 0:
        raise InvalidNonce("link 0 uses the all-zero nonce")
    current = chain.chain_secret.value
    for _ in range(MAX_RESAMPLES):
        own = Nat(secret) if secret is not None else _draw_secret(rng, params, avoid=current)
        key = link_key(peer_public, own, current, params)
        if strong:
            try:
                _check_link_key(key, params.n, current)
            except WeakKey:
                if secret is not None:
                    raise
                continue
        own_public = modpow(params.g, own, params.p)
        eph = SessionEphemeral(
            params=params,
            secret=Secret(own),
            public=own_public,
            nonce=offer.nonce,
            index=chain.index,
            pending_key=Secret(key),
        )
        return eph, Reply(public=own_public, index=chain.index)
    raise WeakKey("no strong link key after resampling")


def session_complete(chain: ChainState, eph: SessionEphemeral, reply: Reply, *, strong: bool = True) -> Nat:
    chain._live()
    if reply.index != chain.index or eph.index != chain.index:
        raise ChainIndexMismatch(f"reply for link {reply.index}, chain is at {chain.index}")
    peer_public = check_public(reply.public, eph.params.p)
    key = link_key(peer_public, eph.secret.value, chain.chain_secret.value, eph.params)
    if strong:
        _check_link_key(key, eph.params.n, chain.chain_secret.value)
    eph.pending_key = Secret(key)
    return key


# -- confirmation -------------------------------------------------------------


def make_verify(chain: ChainState, role: Role, key_i: int, nonce: Nonce) -> bytes:
    chain._live()
    return link_digest(role, key_i, chain.chain_secret.value, chain.prev_digest, nonce)


def check_verify(chain: ChainState, role: Role, key_i: int, nonce: Nonce, peer_digest: bytes) -> None:
    """Recompute the peer's digest and compare; raise VerificationFailed on mismatch."""
    expected = make_verify(chain, role.peer, key_i, nonce)
    if not hmac.compare_digest(expected, bytes(peer_digest)):
        raise VerificationFailed(f"{role.peer.value} digest mismatch at link {chain.index}")


def commit(chain: ChainState, eph: SessionEphemeral) -> ChainState:
    """Advance the chain with the verified pending key and wipe the previous link's material."""
    chain._live()
    if eph.pending_key is None or eph.wiped:
        raise StaleState("no pending key to commit")
    if eph.index != chain.index:
        raise ChainIndexMismatch("ephemeral belongs to a different link")
    key = eph.pending_key.value
    n = eph.params.n
    new = ChainState(
        index=chain.index + 1,
        chain_secret=Secret(next_chain_secret(key, n)),
        prev_digest=make_verify(chain, Role.ALONG, key, eph.nonce),
        crt_group=chain.crt_group,
        link_key=Secret(key),
        link_bits=n,
    )
    eph.wipe()
    chain.wipe()
    return new


def abort(chain: ChainState, eph: SessionEphemeral | None) -> ChainState:
    if eph is not None:
        eph.wipe()
    return chain
