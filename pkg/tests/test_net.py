import threading

import pytest

from conftest import small_chains
from cke.bignum import Rng
from cke.digest import Role, derive_transfer_keys
from cke.net import UdpTransport, drive
from cke.sectftp import Server, TransferConfig, directory_opener, get_file, put_file
from cke.wire import LinkConfig, LinkTimeout, run_link


def _in_thread(fn):
    box = {}

    def target():
        try:
            box["value"] = fn()
        except Exception as exc:  # surfaced by the caller
            box["error"] = exc

    t = threading.Thread(target=target, daemon=True)
    t.start()
    return t, box


def test_udp_link_roundtrip(test6):
    ca, cb = small_chains()
    cfg = LinkConfig(timeout=0.5, retries=3, accept_timeout=5.0)
    with UdpTransport.listen("127.0.0.1", 0) as server:
        port = server.address[1]
        t, box = _in_thread(lambda: run_link(server, Role.BUSU, cb, Rng(2), config=cfg))
        with UdpTransport.connect("127.0.0.1", port) as client:
            new_a = run_link(client, Role.ALONG, ca, Rng(1), test6, cfg)
        t.join(10)
    assert "error" not in box
    new_b = box["value"]
    assert new_a.index == new_b.index == 1
    assert new_a.chain_secret.value == new_b.chain_secret.value


def test_udp_link_without_peer_times_out(test6):
    ca, _ = small_chains()
    with UdpTransport.listen("127.0.0.1", 0) as sink:
        with UdpTransport.connect("127.0.0.1", sink.address[1]) as client:
            with pytest.raises(LinkTimeout):
                run_link(client, Role.ALONG, ca, Rng(1), test6, LinkConfig(timeout=0.1, retries=1))


def test_send_before_peer_known():
    with UdpTransport.listen("127.0.0.1", 0) as t:
        with pytest.raises(RuntimeError):
            t.send(b"x")
        assert t.recv(0.05) is None


@pytest.mark.parametrize("size", [0, 700, 70_000])
def test_udp_put_then_get(tmp_path, size):
    keys = derive_transfer_keys((1 << 1023) | 77, 1)
    cfg = TransferConfig(timeout=0.2, max_retransmits=4)
    served = tmp_path / "served"
    served.mkdir()
    src = tmp_path / "src.bin"
    payload = bytes((i * 7) & 0xFF for i in range(size))
    src.write_bytes(payload)

    def serve_once(transport):
        m = Server(keys, directory_opener(served), cfg, accept_timeout=5.0)
        drive(m, transport)
        return m

    with UdpTransport.listen("127.0.0.1", 0) as srv:
        t, box = _in_thread(lambda: serve_once(srv))
        with UdpTransport.connect("127.0.0.1", srv.address[1]) as cli:
            put_file(cli, keys, src, "copy.bin", cfg)
        t.join(10)
    assert box["value"].error is None
    assert (served / "copy.bin").read_bytes() == payload

    with UdpTransport.listen("127.0.0.1", 0) as srv:
        t, box = _in_thread(lambda: serve_once(srv))
        with UdpTransport.connect("127.0.0.1", srv.address[1]) as cli:
            get_file(cli, keys, "copy.bin", tmp_path / "back.bin", cfg)
        t.join(10)
    assert (tmp_path / "back.bin").read_bytes() == payload
    assert not (tmp_path / "back.bin.part").exists()
