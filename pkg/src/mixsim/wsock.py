"""Minimal RFC 6455 WebSocket framing over blocking sockets.

Just enough for localhost teleoperation: HTTP upgrade handshake, text and
binary messages, close/ping/pong control frames.  No extensions, no
fragmentation on send (fragmented receives are reassembled).
"""

from __future__ import annotations

import base64
import hashlib
import os
import socket
import struct

WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_CONT = 0x0
OP_TEXT = 0x1
OP_BINARY = 0x2
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA


class WsError(Exception):
    pass


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise WsError("socket closed")
        buf += chunk
    return buf


def accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + WS_GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def server_handshake(sock: socket.socket):
    """Read the HTTP upgrade request and complete the handshake."""
    data = b""
    while b"\r\n\r\n" not in data:
        chunk = sock.recv(4096)
        if not chunk:
            raise WsError("client closed during handshake")
        data += chunk
        if len(data) > 65536:
            raise WsError("oversized handshake request")
    headers = {}
    for line in data.split(b"\r\n")[1:]:
        if b":" in line:
            k, v = line.split(b":", 1)
            headers[k.strip().lower().decode()] = v.strip().decode()
    key = headers.get("sec-websocket-key")
    if not key or "websocket" not in headers.get("upgrade", "").lower():
        raise WsError("not a websocket upgrade request")
    response = (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {accept_key(key)}\r\n\r\n"
    )
    sock.sendall(response.encode("ascii"))


def client_handshake(sock: socket.socket, host: str, path: str = "/"):
    key = base64.b64encode(os.urandom(16)).decode("ascii")
    request = (
        f"GET {path} HTTP/1.1\r\n"
        f"Host: {host}\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Key: {key}\r\n"
        "Sec-WebSocket-Version: 13\r\n\r\n"
    )
    sock.sendall(request.encode("ascii"))
    data = b""
    while b"\r\n\r\n" not in data:
        chunk = sock.recv(4096)
        if not chunk:
            raise WsError("server closed during handshake")
        data += chunk
    status = data.split(b"\r\n", 1)[0]
    if b"101" not in status:
        raise WsError(f"handshake rejected: {status!r}")
    for line in data.split(b"\r\n"):
        if line.lower().startswith(b"sec-websocket-accept:"):
            got = line.split(b":", 1)[1].strip().decode()
            if got != accept_key(key):
                raise WsError("bad Sec-WebSocket-Accept")
            return
    raise WsError("missing Sec-WebSocket-Accept")


def encode_frame(opcode: int, payload: bytes, mask: bool) -> bytes:
    head = struct.pack("B", 0x80 | opcode)
    n = len(payload)
    mask_bit = 0x80 if mask else 0x00
    if n < 126:
        head += struct.pack("B", mask_bit | n)
    elif n < 1 << 16:
        head += struct.pack("!BH", mask_bit | 126, n)
    else:
        head += struct.pack("!BQ", mask_bit | 127, n)
    if mask:
        key = os.urandom(4)
        masked = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
        return head + key + masked
    return head + payload


def read_frame(sock: socket.socket):
    """Returns (opcode, payload) of the next complete frame."""
    b0, b1 = _recv_exact(sock, 2)
    fin = b0 & 0x80
    opcode = b0 & 0x0F
    masked = b1 & 0x80
    n = b1 & 0x7F
    if n == 126:
        (n,) = struct.unpack("!H", _recv_exact(sock, 2))
    elif n == 127:
        (n,) = struct.unpack("!Q", _recv_exact(sock, 8))
    key = _recv_exact(sock, 4) if masked else None
    payload = _recv_exact(sock, n) if n else b""
    if key:
        payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
    if not fin:
        # reassemble continuation frames
        more_op, more = read_frame(sock)
        if more_op != OP_CONT:
            raise WsError("unexpected opcode in fragmented message")
        payload += more
    return opcode, payload


class WsConnection:
    """One established connection; `server` picks the masking direction."""

    def __init__(self, sock: socket.socket, server: bool):
        self.sock = sock
        self.server = server

    def send_text(self, text: str):
        self.sock.sendall(encode_frame(OP_TEXT, text.encode("utf-8"), mask=not self.server))

    def send_binary(self, payload: bytes):
        self.sock.sendall(encode_frame(OP_BINARY, payload, mask=not self.server))

    def recv_message(self):
        """(kind, payload): kind in {'text', 'binary', 'closed'}.  Control
        frames are answered inline and reading continues."""
        while True:
            try:
                opcode, payload = read_frame(self.sock)
            except (WsError, OSError):
                return "closed", b""
            if opcode == OP_TEXT:
                return "text", payload.decode("utf-8")
            if opcode == OP_BINARY:
                return "binary", payload
            if opcode == OP_PING:
                self.sock.sendall(encode_frame(OP_PONG, payload, mask=not self.server))
                continue
            if opcode == OP_CLOSE:
                try:
                    self.sock.sendall(encode_frame(OP_CLOSE, b"", mask=not self.server))
                except OSError:
                    pass
                return "closed", b""
            # pong / continuation already handled; ignore anything else

    def close(self):
        try:
            self.sock.sendall(encode_frame(OP_CLOSE, b"", mask=not self.server))
        except OSError:
            pass
        self.sock.close()
