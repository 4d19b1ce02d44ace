"""Live endpoint: handshake, edit acks, broadcasts, both transports."""

import base64
import json
import os
import socket
import threading
import time

import pytest

from creaselift.scene import parse_scene
from creaselift.service import (LineClient, SimulationService, _Client,
                                _ws_accept, _WsReader)

SCENE = {
    "version": 1,
    "name": "svc",
    "dimension": 2,
    "domain": {"kind": "box", "lo": [0.0, 0.0], "hi": [1.0, 1.0]},
    "interface": {"family": "vline_square", "alpha_range": [0.0, 1.0],
                  "alpha": 0.5},
    "lift": {"mode": "gradient", "s": 0.125},
    "material": {"kind": "interface_side", "w_neg": 1.0, "w_pos": 4.0},
    "elasticity": {"young": 1.0, "poisson": 0.3},
    "network": {"k": 2, "width": 8, "layers": 3, "omega0": 5.0, "n_freq": 1,
                "seed": 2},
    "integrator": {"h": 0.01, "inner_iterations": 4, "max_halvings": 4,
                   "n_cubature": 32},
    "handles": [{"kind": "pin", "point": [0.9, 0.5], "target": [0.9, 0.5],
                 "stiffness": 1.0}],
    "tracers": [[0.25, 0.5]],
}


@pytest.fixture(scope="module")
def scene():
    return parse_scene(json.dumps(SCENE))


@pytest.fixture
def service(scene):
    s = SimulationService(scene, scene.network(), port=0, paused=True,
                          max_fps=120.0).start()
    yield s
    s.stop()


@pytest.fixture
def client(service):
    c = LineClient(service.host, service.port)
    yield c
    c.close()


# -- handshake and config -------------------------------------------------------

def test_hello_then_config(client):
    hello = client.recv()
    assert hello == {"type": "hello", "protocol": "creaselift/1",
                     "version": 1}
    cfg = client.recv()
    assert cfg["type"] == "config" and cfg["step"] == 0
    assert cfg["name"] == "svc" and cfg["dimension"] == 2
    assert cfg["bbox"] == [[0.0, 0.0], [1.0, 1.0]]
    assert cfg["alpha"] == 0.5 and cfg["alpha_range"] == [0.0, 1.0]
    assert len(cfg["crease"]) >= 2
    assert all(abs(v[0] - 0.5) < 1e-12 for v in cfg["crease"])
    assert cfg["cut"] is None
    assert cfg["tracers"] == [[0.25, 0.5]] and cfg["tracer_side"] == [-1]
    assert cfg["handles"][0]["kind"] == "pin"
    assert cfg["paused"] is True and cfg["out_of_family"] is False


def test_set_alpha_round_trip(client):
    client.recv_type("config")
    client.send({"type": "set_alpha", "alpha": 0.75, "id": "a1"})
    ack = client.recv_type("ack")
    assert ack == {"type": "ack", "id": "a1", "ok": True,
                   "applies_at_step": 1}
    cfg = client.recv_type("config")
    assert cfg["alpha"] == 0.75
    assert all(abs(v[0] - 0.625) < 1e-12 for v in cfg["crease"])


def test_set_alpha_rejections(client):
    client.recv_type("config")
    client.send({"type": "set_alpha", "alpha": 1.5, "id": "r1"})
    ack = client.recv_type("ack")
    assert not ack["ok"] and "outside range" in ack["reason"]
    client.send({"type": "set_alpha", "alpha": "mid", "id": "r2"})
    assert "must be a number" in client.recv_type("ack")["reason"]
    client.send({"type": "set_alpha", "alpha": True, "id": "r3"})
    assert not client.recv_type("ack")["ok"]


def test_malformed_line_keeps_connection(client):
    client.recv_type("config")
    client.sock.sendall(b"{oops\n")
    ack = client.recv_type("ack")
    assert ack["id"] is None and not ack["ok"]
    assert ack["reason"].startswith("malformed message")
    client.sock.sendall(b'"just a string"\n')
    assert "JSON object" in client.recv_type("ack")["reason"]
    client.send({"type": "pause", "id": "still-alive"})
    assert client.recv_type("ack")["ok"]


def test_unknown_type_nack(client):
    client.recv_type("config")
    client.send({"type": "warp", "id": "u1"})
    ack = client.recv_type("ack")
    assert not ack["ok"] and "unknown message type" in ack["reason"]


def test_resume_streams_frames_pause_stops(client):
    client.recv_type("config")
    client.send({"type": "resume", "id": "go"})
    assert client.recv_type("ack")["ok"]
    steps = [client.recv_type("frame")["step"] for _ in range(3)]
    assert steps[0] >= 1 and steps[0] < steps[1] < steps[2]
    client.send({"type": "pause", "id": "halt"})
    client.recv_type("ack")
    client.sock.settimeout(0.4)
    with pytest.raises(TimeoutError):
        while True:   # drain in-flight frames; the stream must go quiet
            client.recv()


def test_move_handle(client):
    client.recv_type("config")
    client.send({"type": "move_handle", "handle": 0, "target": [0.8, 0.4],
                 "id": "m1"})
    assert client.recv_type("ack")["ok"]
    cfg = client.recv_type("config")
    assert cfg["handles"][0]["target"] == [0.8, 0.4]
    client.send({"type": "move_handle", "handle": 5, "target": [0.0, 0.0]})
    assert "no such handle" in client.recv_type("ack")["reason"]
    client.send({"type": "move_handle", "handle": 0, "target": [0.0]})
    assert "dimension" in client.recv_type("ack")["reason"]


def test_set_crease_fits_family(client):
    client.recv_type("config")
    client.send({"type": "set_crease",
                 "vertices": [[0.7, 0.0], [0.7, 1.0]], "id": "c1"})
    assert client.recv_type("ack")["ok"]
    cfg = client.recv_type("config")
    assert cfg["alpha"] == pytest.approx(0.9, abs=1e-6)
    assert not cfg["out_of_family"]
    client.send({"type": "set_crease",
                 "vertices": [[0.0, 0.0], [1.0, 1.0]], "id": "c2"})
    assert client.recv_type("ack")["ok"]
    assert client.recv_type("config")["out_of_family"]
    client.send({"type": "set_crease", "vertices": [[0.5, 0.5]], "id": "c3"})
    assert "need >= 2 vertices" in client.recv_type("ack")["reason"]


def test_reset_restores_initial_config(client):
    client.recv_type("config")
    client.send({"type": "set_alpha", "alpha": 0.9, "id": "a"})
    client.recv_type("ack")
    client.send({"type": "resume", "id": "go"})
    client.recv_type("ack")
    assert client.recv_type("frame")["step"] >= 1
    client.send({"type": "reset", "id": "z"})
    client.recv_type("ack")
    cfg = client.recv_type("config")
    assert cfg["step"] == 0 and cfg["alpha"] == 0.5


def test_config_updates_reach_other_clients(service):
    a = LineClient(service.host, service.port)
    b = LineClient(service.host, service.port)
    try:
        a.recv_type("config")
        b.recv_type("config")
        b.send({"type": "set_alpha", "alpha": 0.25, "id": "x"})
        assert b.recv_type("ack")["ok"]
        assert a.recv_type("config")["alpha"] == 0.25
    finally:
        a.close()
        b.close()


def test_port_busy_raises(service, scene):
    with pytest.raises(OSError):
        SimulationService(scene, scene.network(), port=service.port)


# -- websocket transport ---------------------------------------------------------

def ws_connect(host, port):
    sock = socket.create_connection((host, port), timeout=10)
    key = base64.b64encode(os.urandom(16)).decode()
    sock.sendall((f"GET / HTTP/1.1\r\nHost: {host}\r\n"
                  "Upgrade: websocket\r\nConnection: Upgrade\r\n"
                  f"Sec-WebSocket-Key: {key}\r\n"
                  "Sec-WebSocket-Version: 13\r\n\r\n").encode())
    buf = b""
    while b"\r\n\r\n" not in buf:
        buf += sock.recv(4096)
    head, _, rest = buf.partition(b"\r\n\r\n")
    assert b" 101 " in head.split(b"\r\n", 1)[0]
    assert _ws_accept(key).encode() in head
    reader = _WsReader()
    reader.feed(rest)
    return sock, reader


def ws_send_json(sock, msg):
    payload = json.dumps(msg).encode()
    mask = os.urandom(4)
    masked = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    assert len(payload) < 126
    sock.sendall(bytes([0x81, 0x80 | len(payload)]) + mask + masked)


def ws_recv_json(sock, reader):
    while True:
        frame = reader.next_frame()
        if frame is not None:
            opcode, payload = frame
            assert opcode == 0x1
            return json.loads(payload)
        data = sock.recv(65536)
        if not data:
            raise ConnectionError("closed")
        reader.feed(data)


def test_websocket_upgrade_and_edit(service):
    sock, reader = ws_connect(service.host, service.port)
    try:
        assert ws_recv_json(sock, reader)["type"] == "hello"
        assert ws_recv_json(sock, reader)["type"] == "config"
        ws_send_json(sock, {"type": "set_alpha", "alpha": 0.3, "id": "w"})
        while True:
            msg = ws_recv_json(sock, reader)
            if msg["type"] == "ack":
                break
        assert msg["ok"] and msg["applies_at_step"] == 1
        while msg["type"] != "config":
            msg = ws_recv_json(sock, reader)
        assert msg["alpha"] == 0.3
    finally:
        sock.close()


# -- framing units ----------------------------------------------------------------

def test_ws_accept_rfc_vector():
    assert _ws_accept("dGhlIHNhbXBsZSBub25jZQ==") \
        == "s3pPLMBiTxaQ9kYGzzhZRbK+xOo="


def test_ws_reader_masked_and_partial():
    payload = b'{"type":"x"}'
    mask = bytes([1, 2, 3, 4])
    masked = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    frame = bytes([0x81, 0x80 | len(payload)]) + mask + masked
    r = _WsReader()
    r.feed(frame[:5])
    assert r.next_frame() is None   # incomplete
    r.feed(frame[5:])
    assert r.next_frame() == (0x1, payload)
    r.feed(bytes([0x01, 0x00]))     # fin bit clear: fragmented
    with pytest.raises(ValueError, match="fragmented"):
        r.next_frame()


def test_ws_reader_extended_length():
    payload = bytes(300)
    frame = bytes([0x82, 126]) + (300).to_bytes(2, "big") + payload
    r = _WsReader()
    r.feed(frame)
    assert r.next_frame() == (0x2, payload)


# -- writer coalescing -------------------------------------------------------------

class GateSocket:
    """sendall blocks while the gate is closed; records every write."""

    def __init__(self):
        self.sent = []
        self.gate = threading.Event()
        self.gate.set()

    def sendall(self, data):
        self.gate.wait(timeout=5.0)
        self.sent.append(bytes(data))

    def shutdown(self, how):
        pass

    def close(self):
        pass


def wait_for(cond, timeout=5.0):
    t0 = time.monotonic()
    while not cond():
        if time.monotonic() - t0 > timeout:
            raise TimeoutError("condition not reached")
        time.sleep(0.002)


def test_client_coalesces_frames_never_control():
    sock = GateSocket()
    sock.gate.clear()
    c = _Client(sock, addr=None)
    c.push_control("c1")
    wait_for(lambda: not c.ctrl)      # writer holds the first batch
    c.push_frame("f1")
    c.push_frame("f2")
    c.push_frame("f3")
    c.push_control("c2")
    sock.gate.set()
    wait_for(lambda: len(sock.sent) >= 2)
    assert sock.sent[0] == b"c1\n"
    assert sock.sent[1] == b"c2\nf3\n"   # stale frames dropped, control kept
    c.kill()
    c.push_frame("after-death")
    time.sleep(0.05)
    assert len(sock.sent) == 2
