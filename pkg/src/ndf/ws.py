"""Minimal RFC 6455 WebSocket framing over blocking sockets.

Covers exactly what the control bridge needs: the server-side handshake,
unfragmented text frames, ping/pong, and clean close. Client helpers exist
for tests and tooling. No extensions, no fragmentation, no TLS.
"""

import base64
import hashlib
import os
import socket
import struct

GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_TEXT = 0x1
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA


class WsError(ConnectionError):
    pass


def _recv_exact(sock, n):
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise WsError("socket closed mid-frame")
        buf += chunk
    return buf


def _read_headers(sock):
    data = b""
    while b"\r\n\r\n" not in data:
        chunk = sock.recv(4096)
        if not chunk:
            raise WsError("socket closed during handshake")
        data += chunk
        if len(data) > 65536:
            raise WsError("handshake too large")
    head, _, rest = data.partition(b"\r\n\r\n")
    lines = head.decode("latin-1").split("\r\n")
    headers = {}
    for line in lines[1:]:
        key, _, value = line.partition(":")
        headers[key.strip().lower()] = value.strip()
    return lines[0], headers, rest


def accept_key(client_key):
    return base64.b64encode(hashlib.sha1((client_key + GUID).encode()).digest()).decode()


def server_handshake(sock):
    """Upgrade an accepted TCP connection; raises WsError on a bad request."""
    request, headers, _ = _read_headers(sock)
    if "websocket" not in headers.get("upgrade", "").lower():
        raise WsError(f"not a websocket upgrade: {request}")
    key = headers.get("sec-websocket-key")
    if not key:
        raise WsError("missing Sec-WebSocket-Key")
    resp = ("HTTP/1.1 101 Switching Protocols\r\n"
            "Upgrade: websocket\r\n"
            "Connection: Upgrade\r\n"
            f"Sec-WebSocket-Accept: {accept_key(key)}\r\n\r\n")
    sock.sendall(resp.encode("latin-1"))


def client_handshake(sock, host, port, path="/"):
    key = base64.b64encode(os.urandom(16)).decode()
    req = (f"GET {path} HTTP/1.1\r\n"
           f"Host: {host}:{port}\r\n"
           "Upgrade: websocket\r\n"
           "Connection: Upgrade\r\n"
           f"Sec-WebSocket-Key: {key}\r\n"
           "Sec-WebSocket-Version: 13\r\n\r\n")
    sock.sendall(req.encode("latin-1"))
    status, headers, _ = _read_headers(sock)
    if "101" not in status:
        raise WsError(f"handshake rejected: {status}")
    if headers.get("sec-websocket-accept") != accept_key(key):
        raise WsError("bad Sec-WebSocket-Accept")


def send_frame(sock, payload, opcode=OP_TEXT, mask=False):
    if isinstance(payload, str):
        payload = payload.encode("utf-8")
    head = bytes([0x80 | opcode])
    mask_bit = 0x80 if mask else 0
    n = len(payload)
    if n < 126:
        head += bytes([mask_bit | n])
    elif n < 65536:
        head += bytes([mask_bit | 126]) + struct.pack(">H", n)
    else:
        head += bytes([mask_bit | 127]) + struct.pack(">Q", n)
    if mask:
        key = os.urandom(4)
        masked = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
        sock.sendall(head + key + masked)
    else:
        sock.sendall(head + payload)


def recv_frame(sock):
    """Returns (opcode, payload bytes); control frames are not auto-answered."""
    b0, b1 = _recv_exact(sock, 2)
    opcode = b0 & 0x0F
    if not b0 & 0x80:
        raise WsError("fragmented frames unsupported")
    masked = bool(b1 & 0x80)
    n = b1 & 0x7F
    if n == 126:
        n = struct.unpack(">H", _recv_exact(sock, 2))[0]
    elif n == 127:
        n = struct.unpack(">Q", _recv_exact(sock, 8))[0]
    if n > 1 << 24:
        raise WsError("frame too large")
    key = _recv_exact(sock, 4) if masked else None
    payload = _recv_exact(sock, n) if n else b""
    if masked:
        payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
    return opcode, payload


def recv_text(sock):
    """Read until a text frame, transparently answering pings; None on close."""
    while True:
        opcode, payload = recv_frame(sock)
        if opcode == OP_TEXT:
            return payload.decode("utf-8")
        if opcode == OP_PING:
            send_frame(sock, payload, opcode=OP_PONG)
        elif opcode == OP_CLOSE:
            try:
                send_frame(sock, payload, opcode=OP_CLOSE)
            except OSError:
                pass
            return None
        # pongs and anything else: ignore


def connect(host, port, timeout=5.0):
    """Client convenience: connected socket with the handshake done."""
    sock = socket.create_connection((host, port), timeout=timeout)
    client_handshake(sock, host, port)
    return sock
