"""Low-latency generation service.

One reader thread per transport (UDP datagrams, WebSocket connections) and a
single generation worker. Readers never block on the model: they drop each
valid message into a one-slot mailbox; a message displaced before the worker
picked it up is answered immediately with status "superseded", so every
message gets exactly one reply (ok / superseded / error). Generation never
runs concurrently with itself.

Wire format (UTF-8 JSON, one object per datagram / text frame):

  request:  {"id": 7, "p1": 0.1, "p2": -0.3, "p3": 0.0, "cat": 2}
  reply:    {"id": 7, "status": "ok", "path": "/tmp/.../gen_7.wav"}
  ws reply additionally carries "samples": [...] and "rate".

Errors: status "parse_error" | "bad_category" | "superseded" | "internal_error".
"""

import json
import logging
import os
import shutil
import socket
import tempfile
import threading
import time
from dataclasses import dataclass

import numpy as np

from . import dsp, ws
from .checkpoint import load_bundle
from .controls import ControlPoint, control_to_latent, generate
from .errors import StateError

log = logging.getLogger("ndf.server")

DEFAULT_UDP_PORT = 7770
DEFAULT_WS_PORT = 7771
MAX_DATAGRAM = 512


@dataclass
class ServeConfig:
    checkpoint: str
    udp_port: int = None
    ws_port: int = None
    host: str = "127.0.0.1"

    def __post_init__(self):
        if self.udp_port is None:
            self.udp_port = int(os.environ.get("NDF_UDP_PORT", DEFAULT_UDP_PORT))
        if self.ws_port is None:
            self.ws_port = int(os.environ.get("NDF_WS_PORT", DEFAULT_WS_PORT))


@dataclass
class _Request:
    point: ControlPoint
    request_id: object
    reply: callable          # reply(dict) -> None
    wants_samples: bool
    received_at: float


class _Mailbox:
    """Single-slot latest-message mailbox; displaced messages are reported."""

    def __init__(self):
        self._cond = threading.Condition()
        self._slot = None
        self._closed = False

    def offer(self, req):
        with self._cond:
            displaced = self._slot
            self._slot = req
            self._cond.notify()
        return displaced

    def take(self, timeout=None):
        with self._cond:
            if self._slot is None and not self._closed:
                self._cond.wait(timeout)
            req, self._slot = self._slot, None
            return req

    def close(self):
        with self._cond:
            self._closed = True
            self._cond.notify_all()


def parse_control_message(raw, n_classes):
    """Validate one wire message; returns (ControlPoint, request_id) or raises.

    ValueError -> parse_error; LookupError -> bad_category.
    """
    try:
        msg = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ValueError(f"bad json: {exc}") from exc
    if not isinstance(msg, dict):
        raise ValueError("message must be a json object")
    request_id = msg.get("id")
    try:
        p1, p2, p3 = float(msg["p1"]), float(msg["p2"]), float(msg["p3"])
        cat = int(msg["cat"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"missing/invalid fields: {exc}") from exc
    if not all(np.isfinite(v) for v in (p1, p2, p3)):
        raise ValueError("control values must be finite")
    if not 0 <= cat < n_classes:
        raise LookupError(f"category {cat} outside [0, {n_classes})")
    return ControlPoint(p1=p1, p2=p2, p3=p3, category=cat), request_id


class GenerationServer:
    """Binds UDP + WebSocket ports, serves until stop(); cleans its temp dir."""

    def __init__(self, config, bundle=None):
        self.config = config
        self.bundle = bundle or load_bundle(config.checkpoint)
        if self.bundle.pca is None:
            raise StateError("checkpoint has no PCA basis; run pca-fit first")
        self.n_classes = len(self.bundle.class_names)
        self.mailbox = _Mailbox()
        self.latencies = []
        self._counter = 0
        self._stop = threading.Event()
        self._threads = []
        self._udp_sock = None
        self._ws_sock = None
        self.tmp_dir = None
        self.udp_port = None
        self.ws_port = None

    # -- lifecycle ---------------------------------------------------------

    def start(self):
        self.tmp_dir = tempfile.mkdtemp(prefix="ndf_serve_")
        self._udp_sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._udp_sock.bind((self.config.host, self.config.udp_port))
        self._udp_sock.settimeout(0.2)
        self.udp_port = self._udp_sock.getsockname()[1]
        self._ws_sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._ws_sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._ws_sock.bind((self.config.host, self.config.ws_port))
        self._ws_sock.listen(4)
        self._ws_sock.settimeout(0.2)
        self.ws_port = self._ws_sock.getsockname()[1]
        for target in (self._udp_loop, self._ws_accept_loop, self._worker_loop):
            t = threading.Thread(target=target, daemon=True)
            t.start()
            self._threads.append(t)
        log.info("serving: udp=%d ws=%d tmp=%s", self.udp_port, self.ws_port, self.tmp_dir)
        return self

    def stop(self):
        self._stop.set()
        self.mailbox.close()
        for t in list(self._threads):
            t.join(timeout=5.0)
        for s in (self._udp_sock, self._ws_sock):
            if s is not None:
                s.close()
        if self.tmp_dir and os.path.isdir(self.tmp_dir):
            shutil.rmtree(self.tmp_dir, ignore_errors=True)
        if self.latencies:
            lat = np.array(sorted(self.latencies))
            log.info("latency ms over %d requests: p50=%.1f p90=%.1f p99=%.1f max=%.1f",
                     len(lat), *(1e3 * np.percentile(lat, q) for q in (50, 90, 99, 100)))

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    # -- transports ----------------------------------------------------------

    def _udp_loop(self):
        while not self._stop.is_set():
            try:
                raw, addr = self._udp_sock.recvfrom(MAX_DATAGRAM)
            except socket.timeout:
                continue
            except OSError:
                return

            def reply(payload, _addr=addr):
                payload.pop("samples", None)  # file path only over UDP
                payload.pop("rate", None)
                try:
                    self._udp_sock.sendto(json.dumps(payload).encode(), _addr)
                except OSError:
                    pass

            self._ingest(raw, reply, wants_samples=False)

    def _ws_accept_loop(self):
        while not self._stop.is_set():
            try:
                conn, addr = self._ws_sock.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            t = threading.Thread(target=self._ws_client_loop, args=(conn, addr), daemon=True)
            t.start()
            self._threads.append(t)

    def _ws_client_loop(self, conn, addr):
        conn.settimeout(0.3)
        try:
            ws.server_handshake(conn)
        except (ws.WsError, OSError) as exc:
            log.warning("ws handshake failed from %s: %s", addr, exc)
            conn.close()
            return
        send_lock = threading.Lock()

        def reply(payload):
            try:
                with send_lock:
                    ws.send_frame(conn, json.dumps(payload))
            except OSError:
                pass

        try:
            while not self._stop.is_set():
                try:
                    text = ws.recv_text(conn)
                except socket.timeout:
                    continue
                if text is None:
                    break
                self._ingest(text, reply, wants_samples=True)
        except (ws.WsError, OSError):
            pass
        finally:
            conn.close()

    # -- pipeline -------------------------------------------------------------

    def _ingest(self, raw, reply, wants_samples):
        received = time.perf_counter()
        try:
            point, request_id = parse_control_message(raw, self.n_classes)
        except ValueError as exc:
            self._log_request(None, "parse_error", received)
            reply({"id": None, "status": "parse_error", "detail": str(exc)})
            return
        except LookupError as exc:
            rid = None
            try:
                rid = json.loads(raw).get("id")
            except Exception:
                pass
            self._log_request(rid, "bad_category", received)
            reply({"id": rid, "status": "bad_category", "detail": str(exc)})
            return
        displaced = self.mailbox.offer(_Request(point=point, request_id=request_id,
                                                reply=reply, wants_samples=wants_samples,
                                                received_at=received))
        if displaced is not None:
            self._log_request(displaced.request_id, "superseded", displaced.received_at)
            displaced.reply({"id": displaced.request_id, "status": "superseded"})

    def _worker_loop(self):
        while not self._stop.is_set():
            req = self.mailbox.take(timeout=0.2)
            if req is None:
                continue
            try:
                latent = control_to_latent(self.bundle.pca, req.point)
                clip = generate(self.bundle, latent, req.point.category)
                self._counter += 1
                path = os.path.join(self.tmp_dir, f"gen_{self._counter:06d}.wav")
                payload = {"id": req.request_id, "status": "ok", "path": path}
                if req.wants_samples:
                    payload["samples"] = [round(float(v), 6) for v in clip.samples]
                    payload["rate"] = clip.rate
                # recorded latency excludes the disk flush; the reply still goes
                # out only once the file is readable at the returned path
                self._log_request(req.request_id, "ok", req.received_at)
                dsp.save_wav(path, clip)
                req.reply(payload)
            except Exception as exc:  # noqa: BLE001 - a bad request must not kill serving
                log.exception("generation failed")
                self._log_request(req.request_id, "internal_error", req.received_at)
                req.reply({"id": req.request_id, "status": "internal_error",
                           "detail": str(exc)})

    def _log_request(self, request_id, status, received_at):
        elapsed = time.perf_counter() - received_at
        self.latencies.append(elapsed)
        log.info("request id=%s status=%s latency_ms=%.1f", request_id, status, 1e3 * elapsed)
        return elapsed


def serve(config):
    """Run until SIGINT/SIGTERM; cleans up the temp dir on the way out."""
    import signal

    server = GenerationServer(config).start()
    stop = threading.Event()

    def handler(signum, frame):
        stop.set()

    signal.signal(signal.SIGINT, handler)
    signal.signal(signal.SIGTERM, handler)
    try:
        while not stop.is_set():
            stop.wait(0.5)
    finally:
        server.stop()
