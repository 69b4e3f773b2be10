"""Lock-step TFTP (RFC 1350 skeleton) with encrypt-then-MAC DATA blocks.

Packets::

    RRQ/WRQ  opcode(2) | filename 0 | "octet" 0 | transfer_id(8) | chain_index(4)
    DATA     opcode(2) | block(2) | ciphertext(<= 512) | mac(32)
    ACK      opcode(2) | block(2)
    ERROR    opcode(2) | code(2) | message 0

Each block is AES-256-CTR under the link's enc_key with counter block
``transfer_id | block(4) | 0(4)``, and MACed as the first 32 bytes of
``sha512(mac_key | 0x0003 | transfer_id | block(4) | ciphertext)``.
"""

from __future__ import annotations

import enum
import hmac
import io
import os
from dataclasses import dataclass

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .digest import TransferKeys, sha512

BLOCK_SIZE = 512
MAC_SIZE = 32
MAX_BLOCKS = 0xFFFF
TID_SIZE = 8


class Opcode(enum.IntEnum):
    RRQ = 1
    WRQ = 2
    DATA = 3
    ACK = 4
    ERROR = 5


class ErrorCode(enum.IntEnum):
    UNDEFINED = 0
    FILE_NOT_FOUND = 1
    ACCESS_VIOLATION = 2
    ILLEGAL_OPERATION = 4
    UNKNOWN_TID = 5
    FILE_EXISTS = 6
    MAC_MISMATCH = 8
    KEY_MISMATCH = 9


class MalformedPacket(ValueError):
    pass


class MacMismatch(ValueError):
    pass


class TransferError(Exception):
    pass


class TransferTimeout(TransferError):
    pass


class PeerError(TransferError):
    def __init__(self, code: int, message: str):
        super().__init__(f"peer error {code}: {message}")
        self.code = code
        self.message = message


class TransferAborted(TransferError):
    """Local abort (tamper detected, protocol violation); an ERROR was sent."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# -- packets ---------------------------------------------------------------------


@dataclass(frozen=True)
class Request:
    opcode: Opcode  # RRQ or WRQ
    filename: str
    transfer_id: bytes
    chain_index: int
    mode: str = "octet"


@dataclass(frozen=True)
class Data:
    block: int
    ciphertext: bytes
    mac: bytes


@dataclass(frozen=True)
class Ack:
    block: int


@dataclass(frozen=True)
class Error:
    code: int
    message: str


Packet = Request | Data | Ack | Error


def encode_packet(pkt: Packet) -> bytes:
    if isinstance(pkt, Request):
        if len(pkt.transfer_id) != TID_SIZE:
            raise ValueError("transfer_id must be 8 bytes")
        return (
            int(pkt.opcode).to_bytes(2, "big")
            + pkt.filename.encode() + b"\x00"
            + pkt.mode.encode() + b"\x00"
            + pkt.transfer_id
            + pkt.chain_index.to_bytes(4, "big")
        )
    if isinstance(pkt, Data):
        return b"\x00\x03" + pkt.block.to_bytes(2, "big") + pkt.ciphertext + pkt.mac
    if isinstance(pkt, Ack):
        return b"\x00\x04" + pkt.block.to_bytes(2, "big")
    return b"\x00\x05" + pkt.code.to_bytes(2, "big") + pkt.message.encode() + b"\x00"


def _cstring(data: bytes, pos: int, what: str) -> tuple[str, int]:
    end = data.find(b"\x00", pos)
    if end < 0:
        raise MalformedPacket(f"unterminated {what}")
    try:
        return data[pos:end].decode("ascii"), end + 1
    except UnicodeDecodeError:
        raise MalformedPacket(f"non-ascii {what}") from None


def decode_packet(data: bytes) -> Packet:
    data = bytes(data)
    if len(data) < 4:
        raise MalformedPacket("short packet")
    try:
        op = Opcode(int.from_bytes(data[:2], "big"))
    except ValueError:
        raise MalformedPacket("unknown opcode") from None
    if op in (Opcode.RRQ, Opcode.WRQ):
        name, pos = _cstring(data, 2, "filename")
        mode, pos = _cstring(data, pos, "mode")
        if not name:
            raise MalformedPacket("empty filename")
        if mode.lower() != "octet":
            raise MalformedPacket(f"unsupported mode {mode!r}")
        if len(data) - pos != TID_SIZE + 4:
            raise MalformedPacket("bad request trailer")
        tid = data[pos : pos + TID_SIZE]
        index = int.from_bytes(data[pos + TID_SIZE :], "big")
        return Request(op, name, tid, index, mode)
    if op is Opcode.DATA:
        body = data[4:]
        if len(body) < MAC_SIZE or len(body) - MAC_SIZE > BLOCK_SIZE:
            raise MalformedPacket("bad DATA length")
        block = int.from_bytes(data[2:4], "big")
        if block == 0:
            raise MalformedPacket("DATA block 0")
        return Data(block, body[:-MAC_SIZE], body[-MAC_SIZE:])
    if op is Opcode.ACK:
        if len(data) != 4:
            raise MalformedPacket("bad ACK length")
        return Ack(int.from_bytes(data[2:4], "big"))
    message, pos = _cstring(data, 4, "error message")
    if pos != len(data):
        raise MalformedPacket("trailing bytes after ERROR")
    return Error(int.from_bytes(data[2:4], "big"), message)


# -- block crypto ----------------------------------------------------------------


def aes256_encrypt_block(key: bytes, block: bytes) -> bytes:
    """Raw AES-256 on one 16-byte block (known-answer checks)."""
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    return enc.update(block) + enc.finalize()


def _counter_block(transfer_id: bytes, block: int) -> bytes:
    return transfer_id + block.to_bytes(4, "big") + b"\x00\x00\x00\x00"


def _keystream_xor(keys: TransferKeys, transfer_id: bytes, block: int, data: bytes) -> bytes:
    ctr = Cipher(algorithms.AES(keys.enc_key), modes.CTR(_counter_block(transfer_id, block))).encryptor()
    return ctr.update(data) + ctr.finalize()


def _mac(keys: TransferKeys, transfer_id: bytes, block: int, ciphertext: bytes) -> bytes:
    return sha512(keys.mac_key + b"\x00\x03" + transfer_id + block.to_bytes(4, "big") + ciphertext)[:MAC_SIZE]


def seal_block(keys: TransferKeys, transfer_id: bytes, block: int, plaintext: bytes) -> tuple[bytes, bytes]:
    if block < 1:
        raise ValueError("block numbers start at 1")
    if len(plaintext) > BLOCK_SIZE:
        raise ValueError("plaintext exceeds one block")
    ct = _keystream_xor(keys, transfer_id, block, plaintext)
    return ct, _mac(keys, transfer_id, block, ct)


def open_block(keys: TransferKeys, transfer_id: bytes, block: int, ciphertext: bytes, mac: bytes) -> bytes:
    """Verify, then decrypt.  Nothing is decrypted when the MAC is wrong."""
    if not hmac.compare_digest(_mac(keys, transfer_id, block, ciphertext), mac):
        raise MacMismatch(f"block {block}")
    return _keystream_xor(keys, transfer_id, block, ciphertext)


# -- transfer machines -----------------------------------------------------------


@dataclass
class TransferConfig:
    timeout: float = 1.0
    max_retransmits: int = 5

    @property
    def dally(self) -> float:
        # Long enough to re-ACK every retransmission of the final DATA.
        return (self.max_retransmits + 1) * self.timeout


@dataclass
class TransferReport:
    blocks: int = 0
    retransmits: int = 0
    bytes: int = 0
    duplicates: int = 0
    malformed: int = 0


class _Endpoint:
    """Shared plumbing for the four transfer roles."""

    def __init__(self, keys: TransferKeys, config: TransferConfig | None):
        self.keys = keys
        self.config = config or TransferConfig()
        self.report = TransferReport()
        self.done = False
        self.error: TransferError | None = None
        self.deadline: float | None = None
        self.transfer_id: bytes | None = None
        self._mode: str | None = None  # "send" or "recv"
        self._last: bytes | None = None
        self._tries = 0
        # sender
        self._source = None
        self._block = 0
        self._final_sent = False
        # receiver
        self._sink = None
        self._expect = 1
        self._finished = False

    # -- completion --

    def _finish(self) -> list[bytes]:
        self.done = True
        self.deadline = None
        return []

    def _fail(self, exc: TransferError, send_error: tuple[int, str] | None = None) -> list[bytes]:
        self.error = exc
        self.done = True
        self.deadline = None
        self._on_failure()
        if send_error is None:
            return []
        return [encode_packet(Error(*send_error))]

    def _on_failure(self) -> None:
        if hasattr(self._sink, "discard"):
            self._sink.discard()

    # -- sending side --

    def _begin_send(self, now: float) -> list[bytes]:
        self._mode = "send"
        self._block = 0
        return self._next_data(now)

    def _next_data(self, now: float) -> list[bytes]:
        self._block += 1
        if self._block > MAX_BLOCKS:
            return self._fail(TransferAborted(ErrorCode.UNDEFINED, "file too large"), (ErrorCode.UNDEFINED, "file too large"))
        chunk = self._source.read(BLOCK_SIZE)
        self._final_sent = len(chunk) < BLOCK_SIZE
        ct, mac = seal_block(self.keys, self.transfer_id, self._block, chunk)
        self._last = encode_packet(Data(self._block, ct, mac))
        self.report.blocks += 1
        self.report.bytes += len(chunk)
        self._tries = 0
        self.deadline = now + self.config.timeout
        return [self._last]

    def _sender_packet(self, pkt: Packet, now: float) -> list[bytes]:
        if isinstance(pkt, Ack):
            if pkt.block != self._block:
                return []  # stale or duplicate ACK; never resend on it (sorcerer's apprentice)
            if self._final_sent:
                return self._finish()
            return self._next_data(now)
        return []

    # -- receiving side --

    def _begin_recv(self) -> None:
        self._mode = "recv"
        self._expect = 1

    def _receiver_packet(self, pkt: Packet, now: float) -> list[bytes]:
        if not isinstance(pkt, Data):
            return []
        try:
            plaintext = open_block(self.keys, self.transfer_id, pkt.block, pkt.ciphertext, pkt.mac)
        except MacMismatch as exc:
            return self._fail(TransferAborted(ErrorCode.MAC_MISMATCH, str(exc)), (ErrorCode.MAC_MISMATCH, "MAC mismatch"))
        if pkt.block == self._expect - 1 and self._expect > 1:
            self.report.duplicates += 1
            self.deadline = now + (self.config.dally if self._finished else self.config.timeout * (self.config.max_retransmits + 1))
            return [encode_packet(Ack(pkt.block))]
        if pkt.block != self._expect or self._finished:
            return []
        self._sink.write(plaintext)
        self.report.blocks += 1
        self.report.bytes += len(plaintext)
        self._expect += 1
        ack = encode_packet(Ack(pkt.block))
        if len(pkt.ciphertext) < BLOCK_SIZE:
            self._finished = True
            self._on_complete()
            self.deadline = now + self.config.dally
        else:
            self.deadline = now + self.config.timeout * (self.config.max_retransmits + 1)
        return [ack]

    def _on_complete(self) -> None:
        if hasattr(self._sink, "commit"):
            self._sink.commit()

    # -- machine interface --

    def receive(self, data: bytes, now: float) -> list[bytes]:
        if self.done:
            return []
        try:
            pkt = decode_packet(data)
        except MalformedPacket:
            self.report.malformed += 1
            if self._mode == "recv" and len(data) >= 2 and data[:2] == b"\x00\x03":
                # A DATA packet that no longer parses is tampering, not noise.
                return self._fail(TransferAborted(ErrorCode.MAC_MISMATCH, "malformed DATA"), (ErrorCode.MAC_MISMATCH, "malformed DATA"))
            return []
        if isinstance(pkt, Error):
            return self._fail(PeerError(pkt.code, pkt.message))
        return self._handle(pkt, now)

    def poll(self, now: float) -> list[bytes]:
        if self.done or self.deadline is None or now < self.deadline:
            return []
        if self._mode == "recv":
            if self._finished:
                return self._finish()
            return self._fail(TransferTimeout(f"no DATA {self._expect}"))
        if self._tries >= self.config.max_retransmits:
            return self._fail(TransferTimeout("retransmit limit reached"))
        self._tries += 1
        self.report.retransmits += 1
        self.deadline = now + self.config.timeout
        return [self._last]

    def _handle(self, pkt: Packet, now: float) -> list[bytes]:
        raise NotImplementedError


class StagedFile:
    """Writes go to ``path.part``; ``commit`` renames into place, ``discard`` deletes."""

    def __init__(self, path):
        self.path = os.fspath(path)
        self.tmp = self.path + ".part"
        self._fh = open(self.tmp, "wb")

    def write(self, data: bytes) -> int:
        return self._fh.write(data)

    def commit(self) -> None:
        self._fh.close()
        os.replace(self.tmp, self.path)

    def discard(self) -> None:
        self._fh.close()
        if os.path.exists(self.tmp):
            os.remove(self.tmp)


class PutClient(_Endpoint):
    """Upload ``source`` (bytes or a readable binary file) with a WRQ."""

    def __init__(self, keys, filename: str, source, transfer_id: bytes | None = None, config=None):
        super().__init__(keys, config)
        self.filename = filename
        self._source = io.BytesIO(source) if isinstance(source, (bytes, bytearray)) else source
        self.transfer_id = transfer_id or os.urandom(TID_SIZE)
        self._acked_request = False

    def start(self, now: float) -> list[bytes]:
        self._last = encode_packet(Request(Opcode.WRQ, self.filename, self.transfer_id, self.keys.chain_index_bound))
        self.deadline = now + self.config.timeout
        return [self._last]

    def _handle(self, pkt, now):
        if not self._acked_request:
            if isinstance(pkt, Ack) and pkt.block == 0:
                self._acked_request = True
                return self._begin_send(now)
            return []
        return self._sender_packet(pkt, now)


class GetClient(_Endpoint):
    """Download into ``sink`` (a writable binary file) with an RRQ."""

    def __init__(self, keys, filename: str, sink, transfer_id: bytes | None = None, config=None):
        super().__init__(keys, config)
        self.filename = filename
        self._sink = sink
        self.transfer_id = transfer_id or os.urandom(TID_SIZE)

    def start(self, now: float) -> list[bytes]:
        self._begin_recv()
        self._last = encode_packet(Request(Opcode.RRQ, self.filename, self.transfer_id, self.keys.chain_index_bound))
        self.deadline = now + self.config.timeout
        return [self._last]

    def poll(self, now):
        # Until DATA 1 shows up the RRQ itself may have been lost.
        if not self.done and self._expect == 1 and self.deadline is not None and now >= self.deadline:
            if self._tries >= self.config.max_retransmits:
                return self._fail(TransferTimeout("no response to RRQ"))
            self._tries += 1
            self.report.retransmits += 1
            self.deadline = now + self.config.timeout
            return [self._last]
        return super().poll(now)

    def _handle(self, pkt, now):
        return self._receiver_packet(pkt, now)


class Server(_Endpoint):
    """Serve one RRQ or WRQ.

    ``opener(request) -> (kind, fileobj)`` resolves files; the server checks
    the request's chain index against its keys before touching any file.
    """

    def __init__(self, keys, opener, config=None, accept_timeout: float | None = None):
        super().__init__(keys, config)
        self.opener = opener
        self.request: Request | None = None
        self._accept_timeout = accept_timeout

    def start(self, now: float) -> list[bytes]:
        if self._accept_timeout is not None:
            self.deadline = now + self._accept_timeout
        return []

    def poll(self, now):
        if not self.done and self.request is None and self.deadline is not None and now >= self.deadline:
            return self._fail(TransferTimeout("no request"))
        return super().poll(now)

    def _handle(self, pkt, now):
        if self.request is None:
            if not isinstance(pkt, Request):
                return []
            if pkt.chain_index != self.keys.chain_index_bound:
                return self._fail(
                    TransferAborted(ErrorCode.KEY_MISMATCH, "chain index mismatch"),
                    (ErrorCode.KEY_MISMATCH, f"server keys bound to link {self.keys.chain_index_bound}"),
                )
            try:
                fileobj = self.opener(pkt)
            except OSError as exc:
                code = ErrorCode.FILE_NOT_FOUND if isinstance(exc, FileNotFoundError) else ErrorCode.ACCESS_VIOLATION
                return self._fail(TransferAborted(code, str(exc)), (code, "cannot open file"))
            self.request = pkt
            self.transfer_id = pkt.transfer_id
            if pkt.opcode is Opcode.RRQ:
                self._source = fileobj
                return self._begin_send(now)
            self._sink = fileobj
            self._begin_recv()
            self._last = encode_packet(Ack(0))
            self.deadline = now + self.config.timeout * (self.config.max_retransmits + 1)
            return [self._last]
        if isinstance(pkt, Request):
            # Our ACK 0 was lost and the client repeated its WRQ.
            if pkt == self.request and self._mode == "recv" and self._expect == 1:
                return [encode_packet(Ack(0))]
            return []
        if self._mode == "send":
            return self._sender_packet(pkt, now)
        return self._receiver_packet(pkt, now)


# -- file-level helpers ----------------------------------------------------------


def put_file(transport, keys: TransferKeys, path, remote_name: str | None = None, config=None) -> TransferReport:
    from .net import drive

    with open(path, "rb") as src:
        m = PutClient(keys, remote_name or os.path.basename(path), src, config=config)
        drive(m, transport)
    if m.error is not None:
        raise m.error
    return m.report


def get_file(transport, keys: TransferKeys, remote_name: str, path, config=None) -> TransferReport:
    """Download to ``path``; bytes land in ``path.part`` and are renamed only on success."""
    from .net import drive

    sink = StagedFile(path)
    m = GetClient(keys, remote_name, sink, config=config)
    try:
        drive(m, transport)
    finally:
        if not m.done or m.error is not None:
            sink.discard()
    if m.error is not None:
        raise m.error
    return m.report


def directory_opener(root):
    """Opener for :class:`Server` confined to ``root``."""
    root = os.path.realpath(root)

    def opener(req: Request):
        target = os.path.realpath(os.path.join(root, req.filename))
        if os.path.dirname(target) != root:
            raise PermissionError(f"{req.filename!r} escapes the served directory")
        if req.opcode is Opcode.RRQ:
            return open(target, "rb")
        return StagedFile(target)

    return opener
