"""Live telemetry/command server for interactive sessions.

One WebSocket endpoint; every frame is a JSON object with a ``type`` field.
Outbound: ``map`` (once, static geometry), ``welcome`` (role assignment),
``snapshot`` (20 Hz), ``refusal`` and ``error``.  Inbound: ``hello`` (role
request), ``driver_input``, ``engage``, ``disengage``, ``reset_emergency``,
``pause``.  Multiple viewers may watch; at most one client holds the driver
role, and inbound commands are queued and applied at the next step boundary
by the simulation loop.  A disconnected driver leaves zeroed inputs, so the
scripted driver (or nobody) takes back over.
"""

import json
import queue
import threading
import time

from websockets.sync.server import serve

from .simulation import LiveDriver, Simulation

INBOUND_TYPES = ("hello", "driver_input", "engage", "disengage",
                 "reset_emergency", "pause")


class _Client:
    def __init__(self, ws, role):
        self.ws = ws
        self.role = role
        self.outbox = queue.Queue(maxsize=8)
        self.alive = True

    def send(self, text):
        try:
            self.outbox.put_nowait(text)
        except queue.Full:
            try:  # drop the oldest frame, keep the stream fresh
                self.outbox.get_nowait()
                self.outbox.put_nowait(text)
            except queue.Empty:
                pass

    def writer(self):
        while self.alive:
            try:
                text = self.outbox.get(timeout=0.25)
            except queue.Empty:
                continue
            try:
                self.ws.send(text)
            except Exception:
                self.alive = False


class TelemetryServer:
    def __init__(self, sim: Simulation, host="127.0.0.1", port=8700):
        self.sim = sim
        self.host = host
        self.port = port
        self.inbound = queue.Queue()
        sim.inbound = self.inbound
        sim.on_snapshot = self.broadcast
        sim.on_refusal = self.broadcast
        self.clients = []
        self.driver = None
        self.lock = threading.Lock()
        self._server = serve(self._handler, host, port)
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        daemon=True)

    # -- lifecycle -----------------------------------------------------------

    def start(self):
        self._thread.start()

    def stop(self):
        self._server.shutdown()

    # -- broadcasting ----------------------------------------------------------

    def broadcast(self, frame: dict):
        text = json.dumps(frame, separators=(",", ":"))
        with self.lock:
            clients = list(self.clients)
        for c in clients:
            c.send(text)

    # -- per-connection ----------------------------------------------------------

    def _handler(self, ws):
        client = _Client(ws, role="viewer")
        writer = threading.Thread(target=client.writer, daemon=True)
        writer.start()
        with self.lock:
            self.clients.append(client)
        client.send(json.dumps(self.sim.map_payload(), separators=(",", ":")))
        try:
            for raw in ws:
                reply = self._on_message(client, raw)
                if reply is not None:
                    client.send(json.dumps(reply, separators=(",", ":")))
        except Exception:
            pass
        finally:
            client.alive = False
            with self.lock:
                if client in self.clients:
                    self.clients.remove(client)
                if self.driver is client:
                    self.driver = None
                    if self.sim.ego.live is not None:
                        self.sim.ego.live.connected = False

    def _on_message(self, client, raw):
        try:
            msg = json.loads(raw)
            if not isinstance(msg, dict) or "type" not in msg:
                raise ValueError("frame must be an object with a 'type'")
        except (json.JSONDecodeError, ValueError) as exc:
            return {"type": "error", "message": f"malformed frame: {exc}"}
        mtype = msg["type"]
        if mtype not in INBOUND_TYPES:
            return {"type": "error", "message": f"unknown frame type {mtype!r}"}

        if mtype == "hello":
            want = msg.get("role", "viewer")
            if want == "driver":
                with self.lock:
                    if self.driver is None:
                        self.driver = client
                        client.role = "driver"
                        if self.sim.ego.live is None:
                            self.sim.ego.live = LiveDriver(
                                self.sim.cfg.sim.input_hold_s)
                        self.sim.ego.live.connected = True
                    else:
                        return {"type": "refusal", "reason": "driver_role_taken",
                                "requested": "driver"}
            return {"type": "welcome", "role": client.role}

        if client.role != "driver":
            return {"type": "error",
                    "message": f"{mtype!r} requires the driver role"}
        self.inbound.put(msg)
        return None


def run_paced(sim: Simulation, server: TelemetryServer = None, rt_factor=1.0,
              should_stop=None):
    """Advance the simulation wall-clock locked to sim time (scaled)."""
    dt = sim.cfg.sim.dt
    total = int(round(sim.scenario.duration / dt))
    next_wall = time.monotonic()
    while sim.step_index < total:
        if should_stop is not None and should_stop():
            break
        if sim.paused:
            time.sleep(0.05)
            next_wall = time.monotonic()
            continue
        sim.step_once()
        next_wall += dt / rt_factor
        delay = next_wall - time.monotonic()
        if delay > 0:
            time.sleep(delay)
    return sim.metrics()
