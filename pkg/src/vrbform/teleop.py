"""Live teleoperation gateway.

One asyncio task owns the world and steps it at wall-clock pace; websocket
handlers exchange JSON messages with it through shared state only.  The
newest operator command from any client wins, and a command older than
COMMAND_TIMEOUT_S is treated as zero: a silent operator leaves the
formation holding position while obstacle repulsion keeps working.

Wire protocol (one JSON document per websocket text frame, schema v1):
  client -> server  {"v":1,"type":"cmd","deta":[d_phi,d_sx,d_sy,d_tx,d_ty],"stamp":ms}
  server -> client  {"v":1,"type":"state","tick":...,"robots":[...],"pairs":[...]}
The first state frame per connection additionally carries the obstacle map.
"""
from __future__ import annotations

import asyncio
import json
import pathlib
from dataclasses import dataclass, field

import numpy as np
from aiohttp import WSMsgType, web

from .scenario import Scenario
from .sim import WorldState, build_world, step_world

PROTOCOL_VERSION = 1
COMMAND_TIMEOUT_S = 0.5
# Per-axis operator rate limits: rotation (rad/s), scale (1/s), translation (m/s).
RATE_LIMITS = np.array([0.5, 0.5, 0.5, 1.0, 1.0])


def clamp_command(deta) -> np.ndarray:
    deta = np.asarray(deta, dtype=float).reshape(5)
    return np.clip(deta, -RATE_LIMITS, RATE_LIMITS)


@dataclass
class _Client:
    queue: asyncio.Queue
    obstacles_sent: bool = False


@dataclass
class TeleopServer:
    scenario: Scenario
    ui_dir: str | None = None  # serve the operator console from here if set
    world: WorldState = None  # type: ignore[assignment]
    clients: dict = field(default_factory=dict)
    error_count: int = 0
    _command: np.ndarray = field(default_factory=lambda: np.zeros(5))
    _command_time: float = -1e9
    _runner: web.AppRunner = None  # type: ignore[assignment]
    _loop_task: asyncio.Task = None  # type: ignore[assignment]

    def __post_init__(self):
        self.world = build_world(self.scenario)

    # -- lifecycle ----------------------------------------------------------

    def make_app(self) -> web.Application:
        app = web.Application()
        app.router.add_get("/ws", self._ws_handler)
        app.router.add_get("/health", self._health)
        if self.ui_dir is not None:
            root = pathlib.Path(self.ui_dir)

            async def index(request):
                return web.FileResponse(root / "index.html")

            app.router.add_get("/", index)
            if (root / "build").is_dir():
                app.router.add_static("/build/", root / "build")
        app.on_startup.append(self._on_startup)
        app.on_cleanup.append(self._on_cleanup)
        return app

    async def start(self, host: str = "127.0.0.1", port: int = 0) -> int:
        """Bind and start serving; returns the actual port."""
        self._runner = web.AppRunner(self.make_app())
        await self._runner.setup()
        site = web.TCPSite(self._runner, host, port)
        await site.start()
        return self._runner.addresses[0][1]

    async def stop(self):
        if self._runner is not None:
            await self._runner.cleanup()

    async def _on_startup(self, app):
        self._loop_task = asyncio.get_running_loop().create_task(self._sim_loop())

    async def _on_cleanup(self, app):
        if self._loop_task is not None:
            self._loop_task.cancel()
            try:
                await self._loop_task
            except asyncio.CancelledError:
                pass

    # -- simulation loop ----------------------------------------------------

    def effective_command(self) -> np.ndarray:
        age = asyncio.get_event_loop().time() - self._command_time
        if age > COMMAND_TIMEOUT_S:
            return np.zeros(5)
        return self._command

    async def _sim_loop(self):
        dt = self.scenario.config.dt
        loop = asyncio.get_running_loop()
        deadline = loop.time() + dt
        while True:
            step_world(self.world, self.effective_command())
            snapshot = self._snapshot_dict()
            for client in list(self.clients.values()):
                _put_latest(client.queue, snapshot)
            delay = deadline - loop.time()
            if delay > 0:
                await asyncio.sleep(delay)
            deadline = max(deadline + dt, loop.time())

    def _snapshot_dict(self) -> dict:
        m = self.world.metrics
        k = len(m) - 1
        robots = []
        for i in range(self.scenario.n_robots):
            cov = self.world.robots[i].belief.covariance
            robots.append({
                "id": i,
                "pos": _vec(m.positions[k][i]),
                "ref": _vec(m.references[k][i]),
                "belief": _vec(m.belief_means[k][i]),
                "cov": [float(cov[0, 0]), float(cov[0, 1]), float(cov[1, 1])],
                "radius": float(self.world.robots[i].radius),
            })
        pairs = [{"i": p.i, "j": p.j, "dist": p.dist_true, "bound": p.bound,
                  "active": p.active} for p in m.pairs[k]]
        return {"v": PROTOCOL_VERSION, "type": "state", "tick": m.ticks[k],
                "robots": robots, "pairs": pairs}

    def _obstacles_dict(self) -> dict:
        obs = self.scenario.obstacles
        return {
            "circles": [[float(c[0]), float(c[1]), float(r)] for c, r in obs.circles],
            "segments": [[_vec(p), _vec(q)] for p, q in obs.segments],
        }

    # -- handlers -------------------------------------------------------------

    async def _health(self, request) -> web.Response:
        return web.json_response({
            "v": PROTOCOL_VERSION,
            "status": "running",
            "tick": self.world.tick,
            "clients": len(self.clients),
            "errors": self.error_count,
        })

    async def _ws_handler(self, request) -> web.WebSocketResponse:
        ws = web.WebSocketResponse()
        await ws.prepare(request)
        client = _Client(queue=asyncio.Queue(maxsize=1))
        self.clients[id(ws)] = client
        sender = asyncio.get_running_loop().create_task(self._send_loop(ws, client))
        try:
            async for msg in ws:
                if msg.type != WSMsgType.TEXT:
                    continue
                self._apply_command(msg.data)
        finally:
            self.clients.pop(id(ws), None)
            sender.cancel()
            try:
                await sender
            except asyncio.CancelledError:
                pass
        return ws

    async def _send_loop(self, ws, client: _Client):
        while True:
            snapshot = await client.queue.get()
            if not client.obstacles_sent:
                snapshot = dict(snapshot, obstacles=self._obstacles_dict())
                client.obstacles_sent = True
            await ws.send_str(json.dumps(snapshot, separators=(",", ":")))

    def _apply_command(self, text: str):
        try:
            msg = json.loads(text)
            if msg.get("v") != PROTOCOL_VERSION or msg.get("type") != "cmd":
                raise ValueError("not a v1 command")
            deta = np.asarray(msg["deta"], dtype=float)
            if deta.shape != (5,) or not np.all(np.isfinite(deta)):
                raise ValueError("deta must be 5 finite rates")
        except (ValueError, KeyError, TypeError) as exc:
            self.error_count += 1
            return
        self._command = clamp_command(deta)
        self._command_time = asyncio.get_event_loop().time()


def _put_latest(queue: asyncio.Queue, item):
    """Replace the queued snapshot; a slow client just skips frames."""
    if queue.full():
        try:
            queue.get_nowait()
        except asyncio.QueueEmpty:
            pass
    queue.put_nowait(item)


def _vec(v) -> list[float]:
    return [float(v[0]), float(v[1])]


def default_ui_dir() -> str | None:
    candidate = pathlib.Path(__file__).resolve().parents[2] / "frontend"
    return str(candidate) if (candidate / "index.html").is_file() else None


async def serve(scenario: Scenario, host: str, port: int, ui_dir: str | None = None):
    server = TeleopServer(scenario, ui_dir=ui_dir)
    bound = await server.start(host, port)
    print(f"teleop service on ws://{host}:{bound}/ws (health at /health)")
    if ui_dir is not None:
        print(f"operator console at http://{host}:{bound}/")
    try:
        while True:
            await asyncio.sleep(3600)
    finally:
        await server.stop()


def serve_blocking(scenario: Scenario, host: str, port: int,
                   ui_dir: str | None = None):
    try:
        asyncio.run(serve(scenario, host, port, ui_dir=ui_dir))
    except KeyboardInterrupt:
        pass
