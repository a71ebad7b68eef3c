"""External-generator wire protocol: line-delimited JSON with base64 PNG
payloads, spoken either over a child process's standard streams or over one
WebSocket.

Request shape:
    {"type": "generate", "step": n, "frames": f,
     "action": {"keys": "WA", "eta": ..., "theta_deg": ...},
     "first_frame_png_b64": "...",
     "pc_video_png_b64": [... f items ...],
     "pc_validity_rle": [... f items ...],
     "history": [{"index": i, "score": s, "latent": [...]}, ... up to 3]}

Reply shape:
    {"type": "frames", "step": n, "frames_png_b64": [... f items ...]}

Anything else is malformed. Validity masks are run-length encoded over the
row-major flattened mask as alternating run lengths, the first run counting
invalid pixels (so a fully valid mask is [0, size]).
"""
from __future__ import annotations

import base64

import numpy as np

from .fileio import frame_from_png_bytes, frame_to_png_bytes
from .pointcloud import Frame

PROTOCOL = "worldwalk/1"


class GeneratorError(RuntimeError):
    """The external generator failed; the step must be aborted."""


class GeneratorTimeoutError(GeneratorError):
    """The external generator did not reply within the deadline."""


def rle_encode(mask: np.ndarray) -> list[int]:
    flat = np.asarray(mask, bool).ravel()
    if flat.size == 0:
        return []
    boundaries = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    edges = np.concatenate([[0], boundaries, [flat.size]])
    runs = np.diff(edges).tolist()
    if flat[0]:  # runs must start with an invalid count
        runs = [0] + runs
    return [int(r) for r in runs]


def rle_decode(runs: list[int], shape: tuple[int, int]) -> np.ndarray:
    total = int(np.prod(shape))
    if sum(runs) != total or any(r < 0 for r in runs):
        raise ValueError("run lengths do not cover the mask")
    flat = np.empty(total, bool)
    pos = 0
    value = False
    for r in runs:
        flat[pos:pos + r] = value
        pos += r
        value = not value
    return flat.reshape(shape)


def frame_to_b64(frame: Frame) -> str:
    return base64.b64encode(frame_to_png_bytes(frame)).decode("ascii")


def frame_from_b64(data: str) -> Frame:
    return frame_from_png_bytes(base64.b64decode(data))


def encode_generate_request(gen_input) -> dict:
    action = gen_input.action
    return {
        "type": "generate",
        "step": gen_input.step,
        "frames": int(action.params.frames),
        "action": {
            "keys": action.keys_string(),
            "eta": action.params.eta,
            "theta_deg": action.params.theta_deg,
        },
        "first_frame_png_b64": frame_to_b64(gen_input.first_frame),
        "pc_video_png_b64": [frame_to_b64(ro.color) for ro in gen_input.pc_video],
        "pc_validity_rle": [rle_encode(ro.valid) for ro in gen_input.pc_video],
        "history": [
            {"index": r.index, "score": r.score, "latent": [float(v) for v in r.latent.values.ravel()]}
            for r in gen_input.history.selected
        ],
    }


def parse_generate_reply(reply: dict, step: int, frames: int,
                         width: int, height: int) -> list[Frame]:
    """Validate a generator reply and decode its frames."""
    if not isinstance(reply, dict) or reply.get("type") != "frames":
        raise GeneratorError(f"malformed generator reply: {_describe(reply)}")
    if reply.get("step") != step:
        raise GeneratorError(f"generator replied for step {reply.get('step')!r}, expected {step}")
    payload = reply.get("frames_png_b64")
    if not isinstance(payload, list) or len(payload) != frames:
        got = len(payload) if isinstance(payload, list) else payload
        raise GeneratorError(f"wrong frame count: expected {frames}, got {got}")
    out = []
    for i, item in enumerate(payload):
        try:
            frame = frame_from_b64(item)
        except Exception as exc:
            raise GeneratorError(f"malformed frame {i + 1}: {exc}") from exc
        if (frame.width, frame.height) != (width, height):
            raise GeneratorError(
                f"frame {i + 1} is {frame.width}x{frame.height}, expected {width}x{height}")
        out.append(frame)
    return out


def _describe(obj) -> str:
    if isinstance(obj, dict):
        return f"type={obj.get('type')!r}"
    return type(obj).__name__
