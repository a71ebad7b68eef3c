"""The interactive autoregressive loop: one session holds the camera pose,
the last observed frame and depth, and the latent history cache; each action
runs the fixed step pipeline

    action -> trajectory -> point cloud -> rendered views -> retrieval
           -> generator -> latent encode -> cache update -> new state

around a pluggable frame generator. Reference generators: ``passthrough``
(returns the rendered views verbatim), ``holefill`` (paints holes from the
best retrieved latent), and an external process or WebSocket endpoint
speaking the wire protocol.
"""
from __future__ import annotations

import json
import shlex
import subprocess
import threading
import queue as queue_mod
from dataclasses import dataclass

import numpy as np

from .geometry import Action, CameraIntrinsics, CameraPose, Trajectory, action_to_trajectory
from .pointcloud import DepthMap, Frame, build_point_cloud, render_trajectory
from .scenes import SceneDescription, analytic_render, depth_from_render
from .cache import (
    DEFAULT_CAPACITY, DEFAULT_SPATIAL_FACTOR, DEFAULT_TEMPORAL_FACTOR,
    HistoryCache, LatentFrame, RetrievalResult,
    cache_update, encode_latents, retrieve,
)
from .wire import GeneratorError, GeneratorTimeoutError, encode_generate_request, parse_generate_reply

DEPTH_FEEDBACK_MODES = ("auto", "analytic", "rendered", "file")


@dataclass(frozen=True)
class SessionConfig:
    intrinsics: CameraIntrinsics
    generator: object = None  # callable(GeneratorInput) -> list[Frame]
    scene: SceneDescription | None = None
    depth_feedback: str = "auto"
    depth_mode: str = "z"  # interpretation of file-based depth maps
    splat_radius: int = 1
    stride: int = 1
    background: tuple = (0, 0, 0)
    spatial_factor: int = DEFAULT_SPATIAL_FACTOR
    temporal_factor: int = DEFAULT_TEMPORAL_FACTOR
    cache_capacity: int = DEFAULT_CAPACITY

    def __post_init__(self):
        if self.depth_feedback not in DEPTH_FEEDBACK_MODES:
            raise ValueError(f"unknown depth feedback mode {self.depth_feedback!r}")
        if self.generator is None:
            object.__setattr__(self, "generator", generator_passthrough)

    @property
    def feedback(self) -> str:
        if self.depth_feedback != "auto":
            return self.depth_feedback
        return "analytic" if self.scene is not None else "rendered"


@dataclass(frozen=True, eq=False)
class SessionState:
    """Immutable snapshot between interaction steps."""

    config: SessionConfig
    pose: CameraPose
    last_frame: Frame
    last_depth: DepthMap
    last_depth_mode: str
    last_valid: np.ndarray  # which last_frame pixels hold real content
    cache: HistoryCache
    step: int


@dataclass(frozen=True, eq=False)
class GeneratorInput:
    """Everything one generation step conditions on."""

    first_frame: Frame
    action: Action
    pc_video: list
    history: RetrievalResult
    step: int

    def __post_init__(self):
        if len(self.pc_video) != self.action.params.frames:
            raise ValueError("pc_video length must equal the action frame count")
        if len(self.history) > 3:
            raise ValueError("history holds at most 3 latents")


@dataclass(frozen=True, eq=False)
class StepResult:
    frames: list
    trajectory: Trajectory
    pc_video: list
    retrieval: RetrievalResult
    state: SessionState
    evicted: list

    def cache_record(self) -> dict:
        return {
            "step": self.state.step,
            "occupancy": self.state.cache.occupancy,
            "evicted": list(self.evicted),
            "retrieved": [[r.index, r.score] for r in self.retrieval.selected],
        }


def _encode_single(frame: Frame, spatial_factor: int, origin: str) -> LatentFrame:
    lat = encode_latents([frame], spatial_factor, temporal_factor=1)[0]
    return LatentFrame(lat.values, origin)


def init_session(scene_image: Frame | None, depth_source: DepthMap | None,
                 config: SessionConfig) -> SessionState:
    """Start a session at the origin with an empty cache.

    With an analytic scene configured, a missing image and/or depth map is
    synthesized from the scene at the start pose. The scene-image latent is
    staged to become the pinned cache entry at the first update.
    """
    intr = config.intrinsics
    pose = CameraPose.identity()

    synth_frame = synth_depth = None
    if config.scene is not None and (scene_image is None or depth_source is None):
        synth_frame, synth_depth = analytic_render(config.scene, intr, pose)
    if scene_image is None:
        scene_image = synth_frame
    if scene_image is None:
        raise ValueError("no scene image given and no scene configured to synthesize one")
    if (scene_image.width, scene_image.height) != (intr.width, intr.height):
        raise ValueError(
            f"image is {scene_image.width}x{scene_image.height}, intrinsics expect "
            f"{intr.width}x{intr.height}")

    depth_mode = config.depth_mode
    if depth_source is None:
        depth_source = synth_depth
        depth_mode = "z"
    if depth_source is None:
        raise ValueError("no depth source: give a depth map or configure a scene")
    if (depth_source.width, depth_source.height) != (intr.width, intr.height):
        raise ValueError("depth dimensions do not match the intrinsics")
    if config.feedback == "analytic" and config.scene is None:
        raise ValueError("analytic depth feedback requires a scene")

    cache = HistoryCache(config.cache_capacity).with_staged_pin(
        _encode_single(scene_image, config.spatial_factor, "scene-image"))
    return SessionState(
        config=config,
        pose=pose,
        last_frame=scene_image,
        last_depth=depth_source,
        last_depth_mode=depth_mode,
        last_valid=np.ones((intr.height, intr.width), bool),
        cache=cache,
        step=0,
    )


def step(state: SessionState, action: Action) -> StepResult:
    """Run one interaction step. Raises on generator failure, leaving the
    caller's state untouched (states are immutable)."""
    cfg = state.config
    intr = cfg.intrinsics
    n = state.step + 1

    traj = action_to_trajectory(action, state.pose)

    # cloud from the current first frame, restricted to pixels that hold
    # real content and valid depth
    masked = DepthMap(state.last_depth.values, state.last_depth.valid & state.last_valid)
    cloud = build_point_cloud(state.last_frame, masked, intr, state.pose,
                              cfg.stride, state.last_depth_mode)
    pc_video = render_trajectory(cloud, intr, traj, cfg.splat_radius, cfg.background)

    query = _encode_single(state.last_frame, cfg.spatial_factor, f"step{n}/query")
    retrieval = retrieve(state.cache, query)

    gen_input = GeneratorInput(state.last_frame, action, pc_video, retrieval, n)
    frames = cfg.generator(gen_input)
    _check_frames(frames, action.params.frames, intr)

    latents = encode_latents(frames, cfg.spatial_factor, cfg.temporal_factor, origin_step=n)
    new_cache, evicted = cache_update(state.cache, latents)

    feedback = cfg.feedback
    final_render = pc_video[-1]
    if feedback == "analytic":
        _, new_depth = analytic_render(cfg.scene, intr, traj.final)
        new_depth_mode = "z"
    elif feedback == "rendered":
        new_depth = depth_from_render(final_render)
        new_depth_mode = "z"
    else:  # file: static depth
        new_depth = state.last_depth
        new_depth_mode = state.last_depth_mode

    if getattr(cfg.generator, "fills_holes", True):
        new_valid = np.ones((intr.height, intr.width), bool)
    else:
        new_valid = final_render.valid.copy()

    new_state = SessionState(
        config=cfg,
        pose=traj.final,
        last_frame=frames[-1],
        last_depth=new_depth,
        last_depth_mode=new_depth_mode,
        last_valid=new_valid,
        cache=new_cache,
        step=n,
    )
    return StepResult(frames, traj, pc_video, retrieval, new_state, evicted)


def _check_frames(frames, expected: int, intr: CameraIntrinsics) -> None:
    if len(frames) != expected:
        raise GeneratorError(f"wrong frame count: expected {expected}, got {len(frames)}")
    for i, fr in enumerate(frames):
        if (fr.width, fr.height) != (intr.width, intr.height):
            raise GeneratorError(f"frame {i + 1} has wrong dimensions")


# ---------------------------------------------------------------------------
# Reference generators

def generator_passthrough(gen_input: GeneratorInput) -> list[Frame]:
    """Return the rendered point-cloud views verbatim (pure geometric warp)."""
    return [ro.color for ro in gen_input.pc_video]


generator_passthrough.fills_holes = False


def generator_holefill(gen_input: GeneratorInput) -> list[Frame]:
    """Fill hole pixels from the best retrieved latent, upsampled nearest
    neighbor; with no history the holes keep the background already there."""
    best = gen_input.history.best()
    if best is None:
        return [Frame(ro.color.pixels.copy()) for ro in gen_input.pc_video]
    first = gen_input.pc_video[0]
    h, w = first.color.height, first.color.width
    c, lh, lw = best.latent.shape
    if c != 3 or h % lh or w % lw:
        raise ValueError("latent shape is incompatible with the frame size")
    up = np.repeat(np.repeat(best.latent.values, h // lh, axis=1), w // lw, axis=2)
    fill = np.clip(np.rint(up * 256.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    out = []
    for ro in gen_input.pc_video:
        px = ro.color.pixels.copy()
        hole = ~ro.valid
        px[hole] = fill[hole]
        out.append(Frame(px))
    return out


generator_holefill.fills_holes = True


class ExternalGenerator:
    """Bridge to a real generator over the wire protocol.

    ``endpoint`` is either a shell command (spawned once, spoken to over
    stdin/stdout, one JSON line each way per step) or a ws:// URL. A timeout,
    a malformed reply, or a wrong frame count aborts the step; the child is
    restarted on the next call if it died.
    """

    fills_holes = True

    def __init__(self, endpoint: str, timeout: float = 300.0):
        self.endpoint = endpoint
        self.timeout = timeout
        self._proc = None
        self._ws = None

    @property
    def is_websocket(self) -> bool:
        return self.endpoint.startswith(("ws://", "wss://"))

    def __call__(self, gen_input: GeneratorInput) -> list[Frame]:
        request = encode_generate_request(gen_input)
        intr_w = gen_input.first_frame.width
        intr_h = gen_input.first_frame.height
        if self.is_websocket:
            reply = self._roundtrip_ws(request)
        else:
            reply = self._roundtrip_proc(request)
        return parse_generate_reply(reply, gen_input.step,
                                    int(gen_input.action.params.frames), intr_w, intr_h)

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()
        self._proc = None
        if self._ws is not None:
            try:
                self._ws.close()
            finally:
                self._ws = None

    # -- child process transport

    def _roundtrip_proc(self, request: dict) -> dict:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                shlex.split(self.endpoint), stdin=subprocess.PIPE,
                stdout=subprocess.PIPE, text=True, bufsize=1)
        proc = self._proc
        try:
            proc.stdin.write(json.dumps(request) + "\n")
            proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self.close()
            raise GeneratorError(f"generator process died: {exc}") from exc

        box: queue_mod.Queue = queue_mod.Queue()
        reader = threading.Thread(target=lambda: box.put(proc.stdout.readline()), daemon=True)
        reader.start()
        try:
            line = box.get(timeout=self.timeout)
        except queue_mod.Empty:
            self.close()
            raise GeneratorTimeoutError(
                f"generator did not reply within {self.timeout} s") from None
        if not line:
            self.close()
            raise GeneratorError("generator process closed its output stream")
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise GeneratorError(f"generator reply is not JSON: {exc}") from exc

    # -- websocket transport

    def _roundtrip_ws(self, request: dict) -> dict:
        from websockets.sync.client import connect

        try:
            if self._ws is None:
                self._ws = connect(self.endpoint, open_timeout=self.timeout, max_size=None)
            self._ws.send(json.dumps(request))
            line = self._ws.recv(timeout=self.timeout)
        except TimeoutError as exc:
            self.close()
            raise GeneratorTimeoutError(
                f"generator did not reply within {self.timeout} s") from exc
        except Exception as exc:
            self.close()
            raise GeneratorError(f"generator endpoint failed: {exc}") from exc
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise GeneratorError(f"generator reply is not JSON: {exc}") from exc


def make_generator(spec: str, timeout: float = 300.0):
    """Build a generator from its CLI spelling: ``passthrough``,
    ``holefill``, or ``external:<command or ws url>``."""
    if spec == "passthrough":
        return generator_passthrough
    if spec == "holefill":
        return generator_holefill
    if spec.startswith("external:"):
        endpoint = spec[len("external:"):]
        if not endpoint:
            raise ValueError("external generator needs a command or ws:// URL")
        return ExternalGenerator(endpoint, timeout=timeout)
    raise ValueError(f"unknown generator {spec!r}")
