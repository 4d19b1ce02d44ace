"""Live-simulation endpoint.

One thread owns the simulation loop; network readers enqueue edits into a
bounded inbox drained between steps, so a frame always reflects a single
configuration (basis and lift swap atomically between steps). Accepted edits
are acknowledged with the step index at which they take effect; malformed
messages get an error reply and the loop keeps running.

Transport: newline-delimited JSON over plain TCP, with an in-place upgrade
to RFC 6455 WebSocket text frames when the first bytes spell an HTTP GET
(browsers connect directly). Frames are throttled to max_fps and coalesced
per client - a slow reader drops frames, it never stalls the loop.

Message schema is documented field-by-field in PROTOCOL.md.
"""

import base64
import hashlib
import json
import logging
import queue
import socket
import struct
import threading
import time
from collections import deque

import numpy as np

PROTOCOL = "creaselift/1"

_log = logging.getLogger("creaselift.service")

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


# ---------------------------------------------------------------------------
# websocket framing
# ---------------------------------------------------------------------------

def _ws_accept(key: str) -> str:
    digest = hashlib.sha1((key + _WS_GUID).encode()).digest()
    return base64.b64encode(digest).decode()


def _ws_encode_text(payload: bytes) -> bytes:
    n = len(payload)
    head = bytearray([0x81])  # FIN + text opcode
    if n < 126:
        head.append(n)
    elif n < 1 << 16:
        head.append(126)
        head += struct.pack(">H", n)
    else:
        head.append(127)
        head += struct.pack(">Q", n)
    return bytes(head) + payload


def _ws_encode_close() -> bytes:
    return bytes([0x88, 0x00])


def _ws_encode_pong(payload: bytes) -> bytes:
    return bytes([0x8A, len(payload)]) + payload


class _WsReader:
    """Incremental client-to-server frame decoder (masked text frames)."""

    def __init__(self):
        self.buf = bytearray()

    def feed(self, data: bytes):
        self.buf += data

    def next_frame(self):
        """(opcode, payload) or None when incomplete."""
        buf = self.buf
        if len(buf) < 2:
            return None
        opcode = buf[0] & 0x0F
        fin = buf[0] & 0x80
        masked = buf[1] & 0x80
        n = buf[1] & 0x7F
        pos = 2
        if n == 126:
            if len(buf) < pos + 2:
                return None
            n = struct.unpack_from(">H", buf, pos)[0]
            pos += 2
        elif n == 127:
            if len(buf) < pos + 8:
                return None
            n = struct.unpack_from(">Q", buf, pos)[0]
            pos += 8
        mask = b""
        if masked:
            if len(buf) < pos + 4:
                return None
            mask = bytes(buf[pos:pos + 4])
            pos += 4
        if len(buf) < pos + n:
            return None
        payload = bytes(buf[pos:pos + n])
        del buf[:pos + n]
        if masked:
            payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        if not fin:
            raise ValueError("fragmented websocket frames unsupported")
        return opcode, payload


# ---------------------------------------------------------------------------
# client connection
# ---------------------------------------------------------------------------

class _Client:
    """One connection. A dedicated writer thread drains a control queue and
    a single coalescing frame slot, so the simulation loop never blocks on a
    slow socket; only frames are dropped, control messages never are."""

    def __init__(self, sock: socket.socket, addr):
        self.sock = sock
        self.addr = addr
        self.ws = False
        self.cv = threading.Condition()
        self.ctrl = deque()
        self.frame = None
        self.dead = False
        self.writer = threading.Thread(target=self._write_loop, daemon=True)
        self.writer.start()

    def push_control(self, text: str):
        with self.cv:
            if not self.dead:
                self.ctrl.append(text)
                self.cv.notify()

    def push_frame(self, text: str):
        with self.cv:
            if not self.dead:
                self.frame = text
                self.cv.notify()

    def kill(self):
        with self.cv:
            self.dead = True
            self.cv.notify()
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass

    def _encode(self, text: str) -> bytes:
        data = text.encode()
        if self.ws:
            return _ws_encode_text(data)
        return data + b"\n"

    def _write_loop(self):
        while True:
            with self.cv:
                while not self.ctrl and self.frame is None and not self.dead:
                    self.cv.wait()
                if self.dead:
                    return
                batch = [self._encode(t) for t in self.ctrl]
                self.ctrl.clear()
                if self.frame is not None:
                    batch.append(self._encode(self.frame))
                    self.frame = None
            try:
                self.sock.sendall(b"".join(batch))
            except OSError:
                self.dead = True
                return


# ---------------------------------------------------------------------------
# service
# ---------------------------------------------------------------------------

class SimulationService:
    """Owns the simulation loop and the listening socket."""

    def __init__(self, scene, net, host="127.0.0.1", port=0,
                 max_fps: float = 60.0, paused: bool = False,
                 inbox_size: int = 256):
        self.scene = scene
        self.net = net
        self.sim = scene.simulation(net)
        self.max_fps = float(max_fps)
        self.paused = paused
        self._inbox = queue.Queue(maxsize=inbox_size)
        self._clients = []
        self._clients_lock = threading.Lock()
        self._stop = threading.Event()
        self._last_frame_time = 0.0
        self._config_dirty = False

        self._server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._server.bind((host, port))
        self._server.listen(8)
        self.host, self.port = self._server.getsockname()

        self._accept_thread = threading.Thread(target=self._accept_loop,
                                               daemon=True)
        self._loop_thread = threading.Thread(target=self._sim_loop,
                                             daemon=True)

    # -- lifecycle ----------------------------------------------------------

    def start(self):
        self._accept_thread.start()
        self._loop_thread.start()
        return self

    def stop(self):
        self._stop.set()
        try:
            self._server.close()
        except OSError:
            pass
        with self._clients_lock:
            clients = list(self._clients)
            self._clients.clear()
        for c in clients:
            c.kill()
        self._loop_thread.join(timeout=5.0)

    def wait(self):
        while not self._stop.is_set():
            time.sleep(0.2)

    # -- messages -----------------------------------------------------------

    def _hello(self) -> dict:
        return {"type": "hello", "protocol": PROTOCOL, "version": 1}

    def _config(self) -> dict:
        sim = self.sim
        scene = self.scene
        crease = sim.problem.family.mesh(sim.alpha).vertices
        mat = scene.material
        if mat.kind == "uniform":
            material = {"kind": "uniform", "w": mat.w_uniform}
            tracer_side = [0] * sim.tracers.shape[0]
        else:
            material = {"kind": "interface_side", "w_neg": mat.w_neg,
                        "w_pos": mat.w_pos}
            tracer_side = [int(v) for v in
                           sim.problem.family.side(sim.tracers, sim.alpha)] \
                if sim.tracers.shape[0] else []
        lo, hi = scene.domain.bbox()
        return {
            "type": "config",
            "step": sim.state.step_index,
            "name": scene.name,
            "dimension": scene.dimension,
            "bbox": [lo.tolist(), hi.tolist()],
            "alpha": sim.alpha,
            "alpha_range": list(scene.family.alpha_range),
            "crease": crease.tolist(),
            "cut": None if scene.cut_vertices is None
            else scene.cut_vertices.tolist(),
            "tracers": sim.tracers.tolist(),
            "tracer_side": tracer_side,
            "handles": [{"kind": h.kind, "stiffness": h.stiffness,
                         "points": h.points.tolist(),
                         "target": h.target.tolist()}
                        for h in sim.handles],
            "material": material,
            "paused": self.paused,
            "out_of_family": bool(sim.out_of_family),
        }

    def _frame(self, frame) -> dict:
        return {"type": "frame", "step": frame.step, "alpha": frame.alpha,
                "tracers": frame.tracers.tolist(), "note": frame.note,
                "out_of_family": bool(self.sim.out_of_family)}

    # -- network ------------------------------------------------------------

    def _accept_loop(self):
        while not self._stop.is_set():
            try:
                sock, addr = self._server.accept()
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            threading.Thread(target=self._client_loop, args=(sock, addr),
                             daemon=True).start()

    def _client_loop(self, sock, addr):
        client = _Client(sock, addr)
        # Sniff the transport: websocket clients open with an HTTP GET right
        # away; a silent peer is a plain line client waiting for the hello.
        try:
            sock.settimeout(0.25)
            first = sock.recv(4, socket.MSG_PEEK)
        except TimeoutError:
            first = b""
        except OSError:
            client.kill()
            return
        finally:
            sock.settimeout(None)
        try:
            if first.startswith(b"GET"):
                if not self._ws_handshake(client):
                    client.kill()
                    return
                client.ws = True
        except (OSError, ValueError) as e:
            _log.warning("websocket handshake failed: %s", e)
            client.kill()
            return
        with self._clients_lock:
            self._clients.append(client)
        client.push_control(json.dumps(self._hello()))
        client.push_control(json.dumps(self._config()))
        try:
            if client.ws:
                self._read_ws(client)
            else:
                self._read_lines(client)
        finally:
            with self._clients_lock:
                if client in self._clients:
                    self._clients.remove(client)
            client.kill()

    def _ws_handshake(self, client) -> bool:
        sock = client.sock
        data = b""
        while b"\r\n\r\n" not in data:
            chunk = sock.recv(4096)
            if not chunk:
                return False
            data += chunk
            if len(data) > 65536:
                return False
        head, _, rest = data.partition(b"\r\n\r\n")
        lines = head.decode("latin1").split("\r\n")
        headers = {}
        for line in lines[1:]:
            name, _, value = line.partition(":")
            headers[name.strip().lower()] = value.strip()
        key = headers.get("sec-websocket-key")
        if key is None or "websocket" not in \
                headers.get("upgrade", "").lower():
            return False
        resp = ("HTTP/1.1 101 Switching Protocols\r\n"
                "Upgrade: websocket\r\n"
                "Connection: Upgrade\r\n"
                f"Sec-WebSocket-Accept: {_ws_accept(key)}\r\n\r\n")
        sock.sendall(resp.encode("latin1"))
        client._ws_rest = rest
        return True

    def _read_lines(self, client):
        buf = b""
        while not self._stop.is_set():
            try:
                data = client.sock.recv(65536)
            except OSError:
                return
            if not data:
                return
            buf += data
            while b"\n" in buf:
                line, buf = buf.split(b"\n", 1)
                if line.strip():
                    self._ingest(client, line)

    def _read_ws(self, client):
        reader = _WsReader()
        reader.feed(getattr(client, "_ws_rest", b""))
        while not self._stop.is_set():
            try:
                frame = reader.next_frame()
            except ValueError as e:
                client.push_control(json.dumps(
                    {"type": "ack", "id": None, "ok": False,
                     "reason": str(e)}))
                return
            if frame is None:
                try:
                    data = client.sock.recv(65536)
                except OSError:
                    return
                if not data:
                    return
                reader.feed(data)
                continue
            opcode, payload = frame
            if opcode == 0x8:           # close
                try:
                    client.sock.sendall(_ws_encode_close())
                except OSError:
                    pass
                return
            if opcode == 0x9:           # ping
                try:
                    client.sock.sendall(_ws_encode_pong(payload))
                except OSError:
                    return
                continue
            if opcode in (0x1, 0x2) and payload.strip():
                self._ingest(client, payload)

    def _ingest(self, client, raw: bytes):
        try:
            msg = json.loads(raw)
            if not isinstance(msg, dict):
                raise ValueError("message must be a JSON object")
        except (ValueError, json.JSONDecodeError) as e:
            client.push_control(json.dumps(
                {"type": "ack", "id": None, "ok": False,
                 "reason": f"malformed message: {e}"}))
            return
        try:
            self._inbox.put_nowait((client, msg))
        except queue.Full:
            client.push_control(json.dumps(
                {"type": "ack", "id": msg.get("id"), "ok": False,
                 "reason": "edit queue full"}))

    # -- broadcast ----------------------------------------------------------

    def _broadcast_control(self, payload: dict):
        text = json.dumps(payload)
        with self._clients_lock:
            clients = list(self._clients)
        for c in clients:
            c.push_control(text)

    def _broadcast_frame(self, payload: dict):
        text = json.dumps(payload)
        with self._clients_lock:
            clients = list(self._clients)
        for c in clients:
            c.push_frame(text)

    # -- edits --------------------------------------------------------------

    def _nack(self, client, msg, reason: str):
        client.push_control(json.dumps(
            {"type": "ack", "id": msg.get("id"), "ok": False,
             "reason": reason}))

    def _ack(self, client, msg):
        client.push_control(json.dumps(
            {"type": "ack", "id": msg.get("id"), "ok": True,
             "applies_at_step": self.sim.state.step_index + 1}))

    def _apply(self, client, msg):
        kind = msg.get("type")
        sim = self.sim
        if kind == "set_alpha":
            alpha = msg.get("alpha")
            lo, hi = self.scene.family.alpha_range
            if not isinstance(alpha, (int, float)) or isinstance(alpha, bool):
                return self._nack(client, msg, "alpha must be a number")
            if not lo <= float(alpha) <= hi:
                return self._nack(
                    client, msg, f"alpha outside range [{lo}, {hi}]")
            sim.queue_set_alpha(float(alpha))
            sim.out_of_family = False
            self._config_dirty = True
            return self._ack(client, msg)
        if kind == "set_crease":
            verts = msg.get("vertices")
            ok = (isinstance(verts, list) and len(verts) >= 2 and all(
                isinstance(p, list) and len(p) == self.scene.dimension
                and all(isinstance(v, (int, float)) for v in p)
                for p in verts))
            if not ok:
                return self._nack(
                    client, msg,
                    f"need >= 2 vertices of dimension {self.scene.dimension}")
            v = np.asarray(verts, dtype=np.float64)
            sim.queue_set_crease(v[0], v[-1])
            self._config_dirty = True
            return self._ack(client, msg)
        if kind == "move_handle":
            idx = msg.get("handle")
            target = msg.get("target")
            if not isinstance(idx, int) or not 0 <= idx < len(sim.handles):
                return self._nack(client, msg, "no such handle")
            if not (isinstance(target, list)
                    and len(target) == self.scene.dimension):
                return self._nack(
                    client, msg,
                    f"target must have dimension {self.scene.dimension}")
            sim.queue_move_handle(idx, np.asarray(target, dtype=np.float64))
            self._config_dirty = True
            return self._ack(client, msg)
        if kind == "pause":
            self.paused = True
            self._config_dirty = True
            return self._ack(client, msg)
        if kind == "resume":
            self.paused = False
            self._config_dirty = True
            return self._ack(client, msg)
        if kind == "reset":
            self.sim = self.scene.simulation(self.net)
            self._config_dirty = True
            return self._ack(client, msg)
        return self._nack(client, msg, f"unknown message type '{kind}'")

    # -- loop ---------------------------------------------------------------

    def _drain_inbox(self):
        while True:
            try:
                client, msg = self._inbox.get_nowait()
            except queue.Empty:
                break
            try:
                self._apply(client, msg)
            except Exception as e:   # a bad edit must not kill the loop
                _log.warning("edit failed: %s", e)
                self._nack(client, msg, f"edit failed: {e}")

    def _sim_loop(self):
        while not self._stop.is_set():
            self._drain_inbox()
            try:
                self.sim.apply_pending_edits()
            except Exception as e:
                _log.warning("queued edit rejected: %s", e)
            if self._config_dirty:
                self._broadcast_control(self._config())
                self._config_dirty = False
            if self.paused:
                time.sleep(0.005)
                continue
            frame = self.sim.step()
            now = time.monotonic()
            if now - self._last_frame_time >= 1.0 / self.max_fps:
                self._broadcast_frame(self._frame(frame))
                self._last_frame_time = now


def serve(scene, net, host="127.0.0.1", port=8787, max_fps: float = 60.0,
          paused: bool = False):
    """Run the endpoint until interrupted. Raises OSError if the port is
    taken."""
    service = SimulationService(scene, net, host=host, port=port,
                                max_fps=max_fps, paused=paused).start()
    print(f"serving '{scene.name}' on {service.host}:{service.port} "
          f"({PROTOCOL})")
    try:
        service.wait()
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()


# ---------------------------------------------------------------------------
# test/debug client
# ---------------------------------------------------------------------------

class LineClient:
    """Blocking newline-JSON client used by tests and quick checks."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.buf = b""

    def send(self, msg: dict):
        self.sock.sendall(json.dumps(msg).encode() + b"\n")

    def recv(self) -> dict:
        while b"\n" not in self.buf:
            data = self.sock.recv(65536)
            if not data:
                raise ConnectionError("server closed the connection")
            self.buf += data
        line, self.buf = self.buf.split(b"\n", 1)
        return json.loads(line)

    def recv_type(self, kind: str, limit: int = 500) -> dict:
        """Next message of the given type, skipping others."""
        for _ in range(limit):
            msg = self.recv()
            if msg.get("type") == kind:
                return msg
        raise TimeoutError(f"no '{kind}' message within {limit} reads")

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass
