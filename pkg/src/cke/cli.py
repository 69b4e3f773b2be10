"""``cke`` command line: pairing, chain links, encrypted transfers, benchmarks, attacks.

Exit codes: 0 ok, 2 protocol or transfer failure, 3 store or authentication
failure, 4 usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .bignum import Nat, Rng
from .core import ChainState, CrtOffer, CrtReply, ProtocolError, crt_complete, crt_offer, crt_respond
from .digest import KeyTooShort, Role, derive_transfer_keys, encode_nat, sha512
from .groups import DomainParams, InvalidGroup, UnknownGroup, builtin_group, format_record, generate_group, parse_records
from .keystore import KeyStore, StoreError, fingerprint, read_passphrase
from .net import LINK_PORT, UdpTransport, drive
from .sectftp import Server, TransferConfig, TransferError, directory_opener, get_file, put_file
from .wire import LinkConfig, LinkFailure, run_link

log = logging.getLogger("cke")

EXIT_OK, EXIT_PROTOCOL, EXIT_STORE, EXIT_USAGE = 0, 2, 3, 4
DEFAULT_LINK_GROUP = "bench1024"
DEFAULT_CRT_BITS = 256


class UsageError(Exception):
    pass


class AlreadyInitialized(UsageError):
    pass


class UnknownScenario(UsageError):
    pass


class NoSessionKey(Exception):
    """No committed link with a key long enough for transfers."""


class ConfirmationMismatch(Exception):
    """The reply's key-confirmation tag does not match our root key."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _hostport(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        return text, LINK_PORT
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad HOST:PORT {text!r}") from None


def _common_options(ap: argparse.ArgumentParser, defaults: bool) -> None:
    # Registered on the main parser and on every subcommand so options may
    # come before or after the command; subcommands leave unset values alone.
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    ap.add_argument("--store", default=d(None), help="encrypted key store file")
    ap.add_argument("--role", choices=["along", "busu"], default=d(None), help="initiator (along) or responder (busu); fixed per store")
    ap.add_argument("--listen", type=_hostport, default=d(None), metavar="HOST:PORT")
    ap.add_argument("--connect", type=_hostport, default=d(None), metavar="HOST:PORT")
    grp = ap.add_mutually_exclusive_group()
    grp.add_argument("--group", default=d(None), metavar="NAME", help="pinned group name")
    grp.add_argument("--gen-bits", type=int, default=d(None), metavar="N", help="generate a fresh safe-prime group")
    ap.add_argument("--timeout", type=int, default=d(2000), metavar="MS")
    ap.add_argument("--retries", type=int, default=d(3), metavar="COUNT")
    ap.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cke", description="Chained Diffie-Hellman key exchange peer.")
    _common_options(ap, defaults=True)
    common = _Parser(add_help=False)
    _common_options(common, defaults=False)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    p = add("init-crt", help="offline root-of-trust pairing via files")
    p.add_argument("--offer-out", help="along: write the offer here")
    p.add_argument("--offer-in", help="busu: read the offer from here")
    p.add_argument("--reply-out", help="busu: write the reply here")
    p.add_argument("--reply-in", help="along: read the reply and finish")

    p = add("link", help="run one chain link with the peer")
    p.add_argument("--wait", type=float, default=60.0, metavar="S", help="busu: how long to wait for the offer")

    p = add("put", help="upload a file to a serving peer")
    p.add_argument("local")
    p.add_argument("remote", nargs="?")
    p = add("get", help="download a file from a serving peer")
    p.add_argument("remote")
    p.add_argument("local")
    p = add("serve", help="answer one put or get")
    p.add_argument("--root", default=".", help="directory to serve")

    p = add("bench", help="time one chain cycle")
    p.add_argument("bits", nargs="*", type=int, default=[1024, 2048])
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--setup", default="this machine")
    p.add_argument("--csv", help="also write CSV here")
    p.add_argument("--reference", action="store_true", help="append published timings")

    p = add("attack", help="run an adversary scenario")
    p.add_argument("scenario", help="state-reveal, forward-secrecy, impersonation, replay or all")
    p.add_argument("--seed", default=None)

    add("inspect", help="show public store information")
    return ap


# -- helpers ---------------------------------------------------------------------


def _link_config(args) -> LinkConfig:
    return LinkConfig(timeout=args.timeout / 1000.0, retries=args.retries, accept_timeout=getattr(args, "wait", None))


def _transfer_config(args) -> TransferConfig:
    return TransferConfig(timeout=args.timeout / 1000.0, max_retransmits=max(args.retries, 1) + 2)


def _select_group(args, default_name: str | None, default_bits: int | None, rng: Rng) -> DomainParams:
    if args.gen_bits:
        return generate_group(args.gen_bits, rng)
    if args.group:
        return builtin_group(args.group)
    if default_name:
        return builtin_group(default_name)
    return generate_group(default_bits, rng)


def _role(store: KeyStore, args) -> Role:
    stored = store.data.role
    if args.role and stored and args.role != stored:
        raise UsageError(f"store belongs to {stored}, not {args.role}")
    role = args.role or stored
    if role is None:
        raise UsageError("--role is required for a new store")
    store.data.role = role
    return Role.ALONG if role == "along" else Role.BUSU


def _need_store(args) -> str:
    if not args.store:
        raise UsageError("--store is required")
    return args.store


def _confirm_tag(key_crt: int, A: int, B: int) -> str:
    return sha512(b"CKE-CRT-CONFIRM" + encode_nat(key_crt) + encode_nat(A) + encode_nat(B))[:16].hex()


def _write_record(path: str, fields: dict) -> None:
    with open(path, "w") as fh:
        fh.write(format_record(fields))


def _read_record(path: str, kind: str) -> dict:
    with open(path) as fh:
        recs = parse_records(fh.read())
    if len(recs) != 1 or recs[0].get("kind") != kind:
        raise ProtocolError(f"{path} is not a {kind} file")
    return recs[0]


def _hexnat(rec: dict, key: str) -> Nat:
    try:
        return Nat(int(rec[key], 16))
    except (KeyError, ValueError) as exc:
        raise ProtocolError(f"bad field {key!r}") from exc


def _session_keys(store: KeyStore):
    chain = store.data.chain
    if chain is None or chain.link_key is None:
        raise NoSessionKey("no committed link yet; run `cke link` first")
    try:
        return derive_transfer_keys(chain.link_key.value, chain.index)
    except KeyTooShort as exc:
        raise NoSessionKey(f"newest link key too short for transfers ({exc})") from exc


# -- commands --------------------------------------------------------------------


def cmd_init_crt(args, store: KeyStore) -> int:
    role = _role(store, args)
    rng = Rng()
    data = store.data
    if data.chain is not None or (data.crt is not None and data.crt.complete):
        raise AlreadyInitialized("root of trust already established")
    if role is Role.ALONG:
        if args.offer_out:
            params = _select_group(args, None, DEFAULT_CRT_BITS, rng)
            state, offer = crt_offer(rng, params=params)
            _write_record(args.offer_out, {"kind": "crt-offer", "p": f"{offer.p:x}", "g": f"{offer.g:x}", "public": f"{offer.public:x}"})
            data.crt = state
            store.save()
            print(f"offer written to {args.offer_out} ({params.n}-bit group)")
            return EXIT_OK
        if args.reply_in:
            if data.crt is None:
                raise UsageError("no pending offer; run with --offer-out first")
            rec = _read_record(args.reply_in, "crt-reply")
            state = data.crt
            crt_complete(state, CrtReply(public=_hexnat(rec, "public")))
            if rec.get("confirm") != _confirm_tag(state.key_crt.value, state.local_public, state.peer_public):
                raise ConfirmationMismatch("reply does not confirm our root key")
            data.chain = ChainState.from_crt(state)
            store.save()
            print(f"root of trust established; fingerprint {fingerprint(state.key_crt.value)}")
            return EXIT_OK
        raise UsageError("along needs --offer-out or --reply-in")
    if not (args.offer_in and args.reply_out):
        raise UsageError("busu needs --offer-in and --reply-out")
    rec = _read_record(args.offer_in, "crt-offer")
    offer = CrtOffer(public=_hexnat(rec, "public"), p=_hexnat(rec, "p"), g=_hexnat(rec, "g"))
    reply, state = crt_respond(offer, rng)
    tag = _confirm_tag(state.key_crt.value, offer.public, reply.public)
    _write_record(args.reply_out, {"kind": "crt-reply", "public": f"{reply.public:x}", "confirm": tag})
    data.crt = state
    data.chain = ChainState.from_crt(state)
    store.save()
    print(f"reply written to {args.reply_out}; fingerprint {fingerprint(state.key_crt.value)}")
    return EXIT_OK


def cmd_link(args, store: KeyStore) -> int:
    role = _role(store, args)
    chain = store.data.chain
    if chain is None:
        raise UsageError("root of trust not established; run init-crt")
    rng = Rng()
    if role is Role.ALONG:
        if not args.connect:
            raise UsageError("along needs --connect")
        params = _select_group(args, DEFAULT_LINK_GROUP, None, rng)
        transport = UdpTransport.connect(*args.connect)
    else:
        if not args.listen:
            raise UsageError("busu needs --listen")
        params = None
        transport = UdpTransport.listen(*args.listen)
    with transport:
        new_chain = run_link(transport, role, chain, rng, params, _link_config(args))
    store.data.chain = new_chain
    store.save()
    print(f"link committed; chain index {new_chain.index}, fingerprint {fingerprint(new_chain.chain_secret.value)}")
    return EXIT_OK


def _report(prefix: str, rep) -> None:
    print(f"{prefix}: {rep.bytes} bytes in {rep.blocks} blocks, {rep.retransmits} retransmits")


def cmd_put(args, store: KeyStore) -> int:
    keys = _session_keys(store)
    if not args.connect:
        raise UsageError("put needs --connect")
    with UdpTransport.connect(*args.connect) as t:
        rep = put_file(t, keys, args.local, args.remote, _transfer_config(args))
    _report("put", rep)
    return EXIT_OK


def cmd_get(args, store: KeyStore) -> int:
    keys = _session_keys(store)
    if not args.connect:
        raise UsageError("get needs --connect")
    with UdpTransport.connect(*args.connect) as t:
        rep = get_file(t, keys, args.remote, args.local, _transfer_config(args))
    _report("get", rep)
    return EXIT_OK


def cmd_serve(args, store: KeyStore) -> int:
    keys = _session_keys(store)
    if not args.listen:
        raise UsageError("serve needs --listen")
    cfg = _transfer_config(args)
    server = Server(keys, directory_opener(args.root), cfg, accept_timeout=(args.retries + 2) * cfg.timeout * 5)
    with UdpTransport.listen(*args.listen) as t:
        drive(server, t)
    if server.error is not None:
        raise server.error
    _report(f"served {server.request.filename}", server.report)
    return EXIT_OK


def cmd_inspect(args, store: KeyStore) -> int:
    d = store.data
    print(f"role: {d.role or '-'}")
    if d.crt is not None:
        c = d.crt
        print(f"crt group: {c.params.n} bits, fingerprint {fingerprint(c.params.p)}/{fingerprint(c.params.g)}")
        print(f"crt local public: {fingerprint(c.local_public)}")
        if c.peer_public is not None:
            print(f"crt peer public: {fingerprint(c.peer_public)}")
        print(f"crt complete: {'yes' if c.complete else 'no'}")
        if c.key_crt is not None:
            print(f"crt fingerprint: {fingerprint(c.key_crt.value)}")
    if d.chain is not None:
        ch = d.chain
        print(f"chain index: {ch.index}")
        print(f"chain fingerprint: {fingerprint(ch.chain_secret.value)}")
        print(f"newest link key: {ch.link_bits or '-'} bits")
    else:
        print("chain index: -")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .harness import bench_chain_cycle, report_table

    stats = [bench_chain_cycle(n, args.trials, setup=args.setup) for n in args.bits]
    text, csv_text = report_table(stats, references=args.reference)
    print(text)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(csv_text)
    return EXIT_OK


def cmd_attack(args) -> int:
    from .harness import SCENARIOS

    names = list(SCENARIOS) if args.scenario == "all" else [args.scenario]
    for name in names:
        if name not in SCENARIOS:
            raise UnknownScenario(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)} or all")
    rng = Rng(args.seed)
    ok = True
    for name in names:
        for rep in SCENARIOS[name](rng):
            print(rep)
            ok &= rep.verdict == "pass"
    return EXIT_OK if ok else EXIT_PROTOCOL


STORE_COMMANDS = {
    "init-crt": cmd_init_crt,
    "link": cmd_link,
    "put": cmd_put,
    "get": cmd_get,
    "serve": cmd_serve,
    "inspect": cmd_inspect,
}


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, StoreError):
        return EXIT_STORE
    if isinstance(exc, (UsageError, UnknownGroup, FileNotFoundError, IsADirectoryError)):
        return EXIT_USAGE
    if isinstance(exc, (LinkFailure, ProtocolError, InvalidGroup, TransferError, NoSessionKey, ConfirmationMismatch, OSError)):
        return EXIT_PROTOCOL
    raise exc


def run(args) -> int:
    if args.command == "bench":
        return cmd_bench(args)
    if args.command == "attack":
        return cmd_attack(args)
    path = _need_store(args)
    if args.command == "inspect" and not os.path.exists(path):
        raise UsageError(f"no store at {path}")
    passphrase = read_passphrase(confirm=not os.path.exists(path) and sys.stdin.isatty())
    with KeyStore.open(path, passphrase) as store:
        return STORE_COMMANDS[args.command](args, store)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return run(args)
    except Exception as exc:  # noqa: BLE001 - mapped to a stable exit code
        code = exit_code_for(exc)
        print(f"cke: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
