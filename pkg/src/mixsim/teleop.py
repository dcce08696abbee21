"""Human-in-the-loop teleoperation service.

Serves the live composited frame stream over WebSocket and feeds the latest
received (brake, steer) command into the episode's plant.  The network side
never blocks the simulation loop: frames go through bounded drop-oldest
queues and commands land in a single-slot mailbox the loop reads once per
tick.  A client that goes silent past the liveness deadline gets full brake.

Binary frame message: 16-byte little-endian header
    tick u32 | flags u32 (bit0 triggered, bit1 collided, bit2 goal) |
    speed f32 | reserved f32
followed by the JPEG-encoded composited frame.

Text messages are JSON: client sends {"type": "cmd", "brake", "steer"}
(steer normalized to [-1, 1]) or {"type": "ack"}; the server sends
{"type": "start"|"end", ...} and {"type": "error", ...} on bad input.
"""

from __future__ import annotations

import io
import json
import math
import socket
import struct
import threading
import time
from collections import deque
from dataclasses import dataclass, field

from PIL import Image

from .autonomy import AgentCommand, AgentObservation
from .harness import RunConfig, run_episode
from .render.mesh import AssetLibrary
from .scenario import Scenario
from .wsock import WsConnection, server_handshake

FLAG_TRIGGERED = 1
FLAG_COLLIDED = 2
FLAG_GOAL = 4


def pack_frame_header(tick: int, flags: int, speed: float, reserved: float = 0.0) -> bytes:
    return struct.pack("<IIff", tick, flags, speed, reserved)


@dataclass
class TeleopConfig:
    port: int = 8700
    host: str = "127.0.0.1"
    liveness_deadline_s: float = 0.5
    jpeg_quality: int = 80
    lockstep: bool = False        # deterministic test mode: wait for a client
    lockstep_timeout_s: float = 5.0
    queue_depth: int = 4


class TeleopSession:
    """Latest-wins command mailbox shared between reader threads and the loop."""

    def __init__(self, steer_max: float, deadline_s: float):
        self.steer_max = steer_max
        self.deadline_s = deadline_s
        self._lock = threading.Lock()
        self._brake = 1.0
        self._steer = 0.0
        self._receipt_t: float | None = None
        self.current_t = 0.0  # sim time, updated by the loop each tick
        self.message_event = threading.Event()

    def apply_command(self, msg: dict) -> bool:
        """Clamp and store; invalid payloads are dropped (returns False)."""
        try:
            brake = float(msg["brake"])
            steer = float(msg["steer"])
        except (KeyError, TypeError, ValueError):
            return False
        if math.isnan(brake) or math.isnan(steer):
            return False
        with self._lock:
            self._brake = min(max(brake, 0.0), 1.0)
            self._steer = min(max(steer, -1.0), 1.0)
            self._receipt_t = self.current_t
        return True

    def latest(self):
        with self._lock:
            return self._brake, self._steer, self._receipt_t


class HumanTeleopAgent:
    """Maps the mailbox to plant commands; full brake on silence."""

    name = "human"

    def __init__(self, session: TeleopSession):
        self.session = session

    def reset(self):
        pass

    def step(self, obs: AgentObservation) -> AgentCommand:
        brake, steer, receipt_t = self.session.latest()
        if receipt_t is None or obs.t - receipt_t > self.session.deadline_s:
            return AgentCommand(brake=1.0, steer_override=0.0)
        return AgentCommand(brake=brake, steer_override=steer * self.session.steer_max)


class _Client:
    def __init__(self, conn: WsConnection, depth: int):
        self.conn = conn
        self.queue: deque[bytes] = deque(maxlen=depth)  # drop-oldest on overflow
        self.ready = threading.Event()
        self.alive = True


class TeleopServer:
    """Accepts WebSocket clients and runs one episode with a human agent."""

    def __init__(self, config: TeleopConfig, run_config: RunConfig):
        self.config = config
        self.run_config = run_config
        self.session = TeleopSession(
            steer_max=run_config.plant.steer_max, deadline_s=config.liveness_deadline_s
        )
        self._clients: list[_Client] = []
        self._clients_lock = threading.Lock()
        self._stop = threading.Event()
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((config.host, config.port))
        self._listener.listen(4)
        self.port = self._listener.getsockname()[1]
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    # --- network side -----------------------------------------------------

    def _accept_loop(self):
        self._listener.settimeout(0.2)
        while not self._stop.is_set():
            try:
                sock, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            try:
                server_handshake(sock)
            except Exception:
                sock.close()
                continue
            conn = WsConnection(sock, server=True)
            client = _Client(conn, self.config.queue_depth)
            with self._clients_lock:
                self._clients.append(client)
            conn.send_text(json.dumps({"type": "start", "tick_rate": self.run_config.tick_rate}))
            threading.Thread(target=self._reader, args=(client,), daemon=True).start()
            threading.Thread(target=self._sender, args=(client,), daemon=True).start()

    def _reader(self, client: _Client):
        while not self._stop.is_set() and client.alive:
            kind, payload = client.conn.recv_message()
            if kind == "closed":
                client.alive = False
                break
            if kind != "text":
                continue
            try:
                msg = json.loads(payload)
            except json.JSONDecodeError:
                try:
                    client.conn.send_text(json.dumps({"type": "error", "error": "bad json"}))
                except OSError:
                    client.alive = False
                continue
            if msg.get("type") == "cmd":
                if not self.session.apply_command(msg):
                    try:
                        client.conn.send_text(
                            json.dumps({"type": "error", "error": "invalid command"})
                        )
                    except OSError:
                        client.alive = False
            self.session.message_event.set()

    def _sender(self, client: _Client):
        while not self._stop.is_set() and client.alive:
            if not client.ready.wait(timeout=0.2):
                continue
            client.ready.clear()
            while client.queue:
                try:
                    payload = client.queue.popleft()
                except IndexError:
                    break
                try:
                    client.conn.send_binary(payload)
                except OSError:
                    client.alive = False
                    break

    def _broadcast(self, payload: bytes):
        with self._clients_lock:
            clients = list(self._clients)
        for c in clients:
            if c.alive:
                c.queue.append(payload)  # deque(maxlen) drops oldest
                c.ready.set()

    def _broadcast_text(self, text: str):
        with self._clients_lock:
            clients = list(self._clients)
        for c in clients:
            if c.alive:
                try:
                    c.conn.send_text(text)
                except OSError:
                    c.alive = False

    # --- simulation side ---------------------------------------------------

    def _on_tick(self, tick: int, t: float, frame, info: dict):
        self.session.current_t = t
        flags = (
            (FLAG_TRIGGERED if info["triggered"] else 0)
            | (FLAG_COLLIDED if info["collided"] else 0)
            | (FLAG_GOAL if info["goal"] else 0)
        )
        buf = io.BytesIO()
        Image.fromarray(frame.color).save(buf, format="JPEG", quality=self.config.jpeg_quality)
        self._broadcast(pack_frame_header(tick, flags, info["speed"]) + buf.getvalue())
        if self.config.lockstep:
            self.session.message_event.clear()
            # hold the loop until the scripted client reacts to this frame
            deadline = time.monotonic() + self.config.lockstep_timeout_s
            while not self._stop.is_set() and time.monotonic() < deadline:
                if self.session.message_event.wait(timeout=0.05):
                    break

    def serve(self, scenario: Scenario, seed: int = 0, assets: AssetLibrary | None = None):
        """Run the episode to completion; returns (EpisodeReport, log lines)."""
        agent = HumanTeleopAgent(self.session)
        try:
            report, lines = run_episode(
                self.run_config,
                scenario,
                seed,
                agent=agent,
                assets=assets,
                on_tick=self._on_tick,
            )
        finally:
            pass
        self._broadcast_text(json.dumps({"type": "end", "report": report.to_dict()}))
        return report, lines

    def close(self):
        self._stop.set()
        with self._clients_lock:
            for c in self._clients:
                c.alive = False
                try:
                    c.conn.close()
                except OSError:
                    pass
        self._listener.close()
