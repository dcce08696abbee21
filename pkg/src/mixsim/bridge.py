"""Out-of-process agent attachment over a local stream socket.

Wire format: 4-byte big-endian payload length, then UTF-8 JSON.  Each tick
the harness sends one observation message and expects one command message
within the response deadline; a missed deadline holds the previous command
(a safe-brake default before the first reply).

    observation: {"tick", "t", "ego": {"x","y","heading","speed"},
                  "path": [[x, y], ...], "frame"?: {"png_base64", "depth_ref"}}
    command:     {"desired_speed": v} | {"brake": b}, optional "steer_override"
"""

from __future__ import annotations

import base64
import io
import json
import socket
import struct
import threading

import numpy as np
from PIL import Image

from .autonomy import AgentCommand, AgentObservation


class BridgeError(Exception):
    pass


def send_message(sock: socket.socket, payload: dict):
    data = json.dumps(payload, sort_keys=True).encode("utf-8")
    sock.sendall(struct.pack(">I", len(data)) + data)


def recv_message(sock: socket.socket) -> dict | None:
    """One length-prefixed message; None on clean EOF; socket timeouts raise."""
    header = _recv_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    if length > 64 * 1024 * 1024:
        raise BridgeError(f"implausible message length {length}")
    body = _recv_exact(sock, length)
    if body is None:
        raise BridgeError("connection closed mid-message")
    return json.loads(body.decode("utf-8"))


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            if not buf:
                return None  # clean EOF on a message boundary
            raise BridgeError("connection closed mid-message")
        buf += chunk
    return buf


def observation_to_wire(obs: AgentObservation, include_frame: bool = False) -> dict:
    msg = {
        "tick": obs.tick,
        "t": obs.t,
        "ego": {
            "x": obs.ego.pose.x,
            "y": obs.ego.pose.y,
            "heading": obs.ego.pose.heading,
            "speed": obs.ego.speed,
        },
        "path": obs.path.waypoints.tolist(),
    }
    if include_frame:
        buf = io.BytesIO()
        Image.fromarray(obs.frame.color).save(buf, format="PNG")
        msg["frame"] = {
            "png_base64": base64.b64encode(buf.getvalue()).decode("ascii"),
            "depth_ref": None,
        }
    return msg


def command_from_wire(msg: dict) -> AgentCommand:
    steer = msg.get("steer_override")
    if "desired_speed" in msg:
        return AgentCommand(desired_speed=float(msg["desired_speed"]), steer_override=steer)
    if "brake" in msg:
        return AgentCommand(brake=float(msg["brake"]), steer_override=steer)
    raise BridgeError(f"command carries neither desired_speed nor brake: {msg}")


class ExternalAgentBridge:
    """Harness-side client: one request/response round trip per tick."""

    name = "external"

    def __init__(self, address: str, deadline_s: float = 0.2, include_frame: bool = False):
        host, _, port = address.rpartition(":")
        self.address = (host or "127.0.0.1", int(port))
        self.deadline_s = deadline_s
        self.include_frame = include_frame
        self._sock: socket.socket | None = None
        self._last = AgentCommand(brake=1.0)  # safe default before the first reply

    def _connect(self):
        if self._sock is None:
            self._sock = socket.create_connection(self.address, timeout=2.0)
            self._sock.settimeout(self.deadline_s)

    def step(self, obs: AgentObservation) -> AgentCommand:
        self._connect()
        try:
            send_message(self._sock, observation_to_wire(obs, self.include_frame))
            msg = recv_message(self._sock)
            if msg is None:
                raise BridgeError("external agent closed the connection")
            self._last = command_from_wire(msg)
        except socket.timeout:
            pass  # deadline missed: hold the last command
        return self._last

    def reset(self):
        self._last = AgentCommand(brake=1.0)

    def close(self):
        if self._sock is not None:
            self._sock.close()
            self._sock = None


class AgentServer:
    """Minimal counterpart for implementing an external agent: accepts one
    client and answers each observation with `handler(obs_dict) -> cmd_dict`."""

    def __init__(self, handler, host: str = "127.0.0.1", port: int = 0):
        self.handler = handler
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self._listener.listen(1)
        self.port = self._listener.getsockname()[1]
        self._thread: threading.Thread | None = None
        self._stop = threading.Event()

    def start(self):
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._thread.start()
        return self

    def _serve(self):
        self._listener.settimeout(0.2)
        while not self._stop.is_set():
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            with conn:
                conn.settimeout(1.0)
                while not self._stop.is_set():
                    try:
                        msg = recv_message(conn)
                    except (socket.timeout, OSError, BridgeError):
                        break
                    if msg is None:
                        break
                    try:
                        send_message(conn, self.handler(msg))
                    except OSError:
                        break

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
        self._listener.close()
