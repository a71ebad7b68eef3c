"""Live interactive service: one WebSocket connection drives one session.

Protocol ("worldwalk/1", JSON text frames, PNG payloads in base64):

  client -> server
    {"proto": "worldwalk/1", "type": "init", "scene": {...}}   or
    {... "type": "init", "image_png_b64": ..., "depth_png16_b64": ...,
         "depth_scale": ..., "depth_mode": "z"|"ray"}
    {"type": "action", "keys": "WA", "eta": ..., "theta_deg": ..., "frames": ...}
    {"type": "reset"}

  server -> client
    {"type": "ready", "proto": "worldwalk/1", "session": id,
     "intrinsics": {...}, "frames": f}
    {"type": "frame", "step": n, "k": k, "png_b64": ..., "pose": {"R": [...], "t": [...]}}
    {"type": "retrieval", "step": n, "entries": [[index, score], ...]}
    {"type": "stepped", "step": n, "occupancy": c, "evictions": [...]}
    {"type": "error", "code": ..., "message": ...}

Every action yields exactly f frame messages (k ascending 1..f), one
retrieval message, then one stepped message, or a single error message.
Actions arriving mid-step queue up to depth 8; overflow is answered with an
error and the action is dropped. Each connection owns an isolated session;
the server never buffers more than the step being sent.
"""
from __future__ import annotations

import asyncio
import base64
import http
import io as _io
import json
import os
import sys
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from websockets.asyncio.server import serve as ws_serve
from websockets.datastructures import Headers
from websockets.exceptions import ConnectionClosed
from websockets.http11 import Response

from .geometry import Action, ActionParams, CameraIntrinsics
from .pointcloud import DepthMap
from .scenes import SceneDescription
from .session import SessionConfig, init_session, make_generator
from . import session as session_mod
from .wire import PROTOCOL, GeneratorError, frame_from_b64, frame_to_b64

ACTION_QUEUE_DEPTH = 8

DEFAULT_SCENE = SceneDescription(
    kind="box-room", half_extents=(9.0, 6.0, 14.0), checker_period=8.0, palette_seed=7)


@dataclass(frozen=True)
class ServerConfig:
    intrinsics: CameraIntrinsics
    scene: SceneDescription | None = DEFAULT_SCENE
    generator_spec: str = "passthrough"
    generator_timeout: float = 300.0
    defaults: ActionParams = ActionParams()
    splat_radius: int = 1
    stride: int = 1
    static_dir: str | None = None


def _error(code: str, message: str) -> str:
    return json.dumps({"type": "error", "code": code, "message": message})


class _Connection:
    """Per-connection state machine: strictly ordered command processing."""

    def __init__(self, ws, config: ServerConfig):
        self.ws = ws
        self.config = config
        self.state = None
        self.init_message = None
        self.queue: asyncio.Queue = asyncio.Queue(maxsize=ACTION_QUEUE_DEPTH)
        self.generator = None

    async def run(self) -> None:
        worker = asyncio.create_task(self._worker())
        try:
            async for raw in self.ws:
                await self._receive(raw)
        except ConnectionClosed:
            pass
        finally:
            worker.cancel()
            if self.generator is not None and hasattr(self.generator, "close"):
                self.generator.close()

    async def _receive(self, raw) -> None:
        try:
            msg = json.loads(raw)
            if not isinstance(msg, dict):
                raise ValueError("message must be an object")
        except (json.JSONDecodeError, UnicodeDecodeError, ValueError) as exc:
            await self.ws.send(_error("bad_message", f"unparseable message: {exc}"))
            return
        kind = msg.get("type")
        if kind == "init":
            if msg.get("proto") != PROTOCOL:
                await self.ws.send(_error(
                    "bad_protocol", f"expected proto {PROTOCOL!r}, got {msg.get('proto')!r}"))
                await self.ws.close(code=1002, reason="protocol mismatch")
                return
            if self.state is not None:
                await self.ws.send(_error("already_initialized", "session already running"))
                return
            await self._init_session(msg)
        elif kind in ("action", "reset"):
            if self.state is None:
                await self.ws.send(_error("not_initialized", "send init first"))
                return
            try:
                self.queue.put_nowait(msg)
            except asyncio.QueueFull:
                await self.ws.send(_error(
                    "queue_full", f"action queue depth {ACTION_QUEUE_DEPTH} exceeded; dropped"))
        else:
            await self.ws.send(_error("bad_message", f"unknown message type {kind!r}"))

    def _build_state(self, msg: dict):
        cfg = self.config
        scene = cfg.scene
        image = depth = None
        if msg.get("scene") is not None:
            scene = SceneDescription.from_dict(msg["scene"])
        if msg.get("image_png_b64"):
            image = frame_from_b64(msg["image_png_b64"])
            scene = None if msg.get("scene") is None else scene
        depth_mode = msg.get("depth_mode", "ray")
        if msg.get("depth_png16_b64"):
            from PIL import Image

            raw = np.asarray(Image.open(_io.BytesIO(
                base64.b64decode(msg["depth_png16_b64"]))), dtype=np.float64)
            depth = DepthMap.from_values(raw * float(msg.get("depth_scale", 1.0)))
        if image is not None and depth is None and scene is None:
            raise ValueError("an image payload needs depth_png16_b64 or a scene")
        if image is None and scene is None:
            raise ValueError("init needs a scene config or an image payload")

        intr = cfg.intrinsics
        if image is not None:
            intr = CameraIntrinsics(
                fx=float(msg.get("fx", image.width / 2.0)),
                fy=float(msg.get("fy", image.width / 2.0)),
                cx=(image.width - 1) / 2.0, cy=(image.height - 1) / 2.0,
                width=image.width, height=image.height)
        defaults = cfg.defaults
        overrides = msg.get("overrides") or {}
        defaults = ActionParams(
            eta=float(overrides.get("eta", defaults.eta)),
            theta_deg=float(overrides.get("theta_deg", defaults.theta_deg)),
            frames=int(overrides.get("frames", defaults.frames)))
        if self.generator is None:
            self.generator = make_generator(cfg.generator_spec, cfg.generator_timeout)
        session_config = SessionConfig(
            intrinsics=intr, generator=self.generator, scene=scene,
            splat_radius=cfg.splat_radius, stride=cfg.stride)
        return init_session(image, depth, session_config), defaults

    async def _init_session(self, msg: dict) -> None:
        try:
            self.state, self.defaults = await asyncio.to_thread(self._build_state, msg)
            self.init_message = msg
        except (ValueError, OSError) as exc:
            await self.ws.send(_error("bad_init", str(exc)))
            return
        await self.ws.send(json.dumps({
            "type": "ready",
            "proto": PROTOCOL,
            "session": uuid.uuid4().hex,
            "intrinsics": self.state.config.intrinsics.to_dict(),
            "frames": int(self.defaults.frames),
        }))

    async def _worker(self) -> None:
        while True:
            msg = await self.queue.get()
            if msg["type"] == "reset":
                try:
                    self.state, self.defaults = await asyncio.to_thread(
                        self._build_state, self.init_message)
                    await self.ws.send(json.dumps(
                        {"type": "stepped", "step": 0, "occupancy": 0, "evictions": []}))
                except (ValueError, OSError) as exc:
                    await self.ws.send(_error("bad_init", str(exc)))
                continue
            try:
                action = Action(
                    frozenset(str(msg.get("keys", "")).upper()),
                    ActionParams(
                        eta=float(msg.get("eta", self.defaults.eta)),
                        theta_deg=float(msg.get("theta_deg", self.defaults.theta_deg)),
                        frames=int(msg.get("frames", self.defaults.frames))))
            except (ValueError, TypeError) as exc:
                await self.ws.send(_error("bad_action", str(exc)))
                continue
            try:
                result = await asyncio.to_thread(session_mod.step, self.state, action)
            except (GeneratorError, ValueError) as exc:
                await self.ws.send(_error("step_failed", str(exc)))
                continue
            self.state = result.state
            n = result.state.step
            for k, frame in enumerate(result.frames, start=1):
                await self.ws.send(json.dumps({
                    "type": "frame", "step": n, "k": k,
                    "png_b64": frame_to_b64(frame),
                    "pose": result.trajectory[k].to_dict(),
                }))
            await self.ws.send(json.dumps({
                "type": "retrieval", "step": n,
                "entries": [[r.index, r.score] for r in result.retrieval.selected],
            }))
            await self.ws.send(json.dumps({
                "type": "stepped", "step": n,
                "occupancy": result.state.cache.occupancy,
                "evictions": list(result.evicted),
            }))


_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".png": "image/png",
    ".svg": "image/svg+xml",
}


def _process_request(static_dir: str | None):
    def handler(connection, request):
        path = request.path.split("?", 1)[0]
        if path == "/healthz":
            return connection.respond(http.HTTPStatus.OK, "ok")
        if path == "/session":
            return None  # proceed with the WebSocket handshake
        if static_dir is not None:
            rel = "index.html" if path == "/" else path.lstrip("/")
            target = (Path(static_dir) / rel).resolve()
            if target.is_file() and str(target).startswith(str(Path(static_dir).resolve())):
                ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
                body = target.read_bytes()
                return Response(200, "OK", Headers([
                    ("Content-Type", ctype), ("Content-Length", str(len(body)))]), body)
        return connection.respond(http.HTTPStatus.NOT_FOUND, "not found")

    return handler


async def serve(bind: str, config: ServerConfig, *, ready: "threading.Event | None" = None,
                port_box: list | None = None) -> None:
    """Run the service until cancelled. ``bind`` is host:port; port 0 picks a
    free port (reported through ``port_box`` for embedding in tests)."""
    host, _, port_s = bind.rpartition(":")
    host = host or "127.0.0.1"

    async def handler(ws):
        await _Connection(ws, config).run()

    async with ws_serve(handler, host, int(port_s), max_size=None,
                        process_request=_process_request(config.static_dir)) as server:
        if port_box is not None:
            port_box.append(server.sockets[0].getsockname()[1])
        if ready is not None:
            ready.set()
        await asyncio.get_running_loop().create_future()  # run forever


class BackgroundServer:
    """Embeds the service in a daemon thread; used by tests and demos."""

    def __init__(self, config: ServerConfig, host: str = "127.0.0.1"):
        self.config = config
        self.host = host
        self.port = None
        self._loop = None
        self._thread = None

    def __enter__(self) -> "BackgroundServer":
        ready = threading.Event()
        port_box: list = []

        def run():
            self._loop = asyncio.new_event_loop()
            asyncio.set_event_loop(self._loop)
            task = self._loop.create_task(
                serve(f"{self.host}:0", self.config, ready=ready, port_box=port_box))
            try:
                self._loop.run_until_complete(task)
            except asyncio.CancelledError:
                pass
            finally:
                self._loop.close()

        self._thread = threading.Thread(target=run, daemon=True)
        self._thread.start()
        if not ready.wait(timeout=30):
            raise RuntimeError("server did not start")
        self.port = port_box[0]
        return self

    @property
    def url(self) -> str:
        return f"ws://{self.host}:{self.port}/session"

    def __exit__(self, *exc) -> None:
        if self._loop is not None:
            self._loop.call_soon_threadsafe(
                lambda: [t.cancel() for t in asyncio.all_tasks(self._loop)])
        self._thread.join(timeout=10)


def serve_command(args) -> int:
    bind = args.bind or os.environ.get("WORLDWALK_BIND") or "127.0.0.1:8765"
    scene_path = args.scene or os.environ.get("WORLDWALK_SCENE")
    scene = SceneDescription.from_file(scene_path) if scene_path else DEFAULT_SCENE
    fx = args.width / 2.0
    intr = CameraIntrinsics(fx=fx, fy=fx, cx=(args.width - 1) / 2.0,
                            cy=(args.height - 1) / 2.0, width=args.width, height=args.height)
    config = ServerConfig(
        intrinsics=intr, scene=scene, generator_spec=args.generator,
        generator_timeout=args.generator_timeout,
        defaults=ActionParams(eta=args.eta, theta_deg=args.theta, frames=args.frames),
        splat_radius=args.splat_radius, stride=args.stride, static_dir=args.static)
    print(f"worldwalk server on ws://{bind}/session (health: http://{bind}/healthz)",
          file=sys.stderr)
    try:
        asyncio.run(serve(bind, config))
    except KeyboardInterrupt:
        pass
    return 0
