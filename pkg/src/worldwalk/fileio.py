"""Image and depth file formats: 8-bit RGB PNG frames, PFM and 16-bit
grayscale PNG depth maps."""
from __future__ import annotations

import io
import re

import numpy as np
from PIL import Image

from .pointcloud import DepthMap, Frame

DEPTH_FORMATS = ("pfm", "png16")


def read_frame(path) -> Frame:
    with Image.open(path) as im:
        return Frame(np.asarray(im.convert("RGB"), dtype=np.uint8))


def write_frame(frame: Frame, path) -> None:
    Image.fromarray(frame.pixels, mode="RGB").save(path, format="PNG")


def frame_to_png_bytes(frame: Frame) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(frame.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def frame_from_png_bytes(data: bytes) -> Frame:
    with Image.open(io.BytesIO(data)) as im:
        return Frame(np.asarray(im.convert("RGB"), dtype=np.uint8))


def load_depth(path, format: str = "pfm", scale: float = 1.0) -> DepthMap:
    """Load a depth file and scale it to world units.

    Non-positive and non-finite entries come back marked invalid. For PFM the
    header scale's sign selects endianness as usual; its magnitude is ignored
    in favor of the explicit ``scale`` argument.
    """
    if format == "pfm":
        raw = _read_pfm(path)
    elif format == "png16":
        with Image.open(path) as im:
            if im.mode not in ("I", "I;16", "I;16B", "L"):
                raise ValueError(f"not a 16-bit grayscale PNG: mode {im.mode!r}")
            raw = np.asarray(im, dtype=np.float64)
    else:
        raise ValueError(f"unknown depth format {format!r}")
    return DepthMap.from_values(raw * scale)


def save_depth(depth: DepthMap, path, format: str = "pfm", scale: float = 1.0) -> None:
    """Write a depth map; invalid pixels are stored as 0 (invalid on reload)."""
    vals = np.where(depth.valid, depth.values, 0.0)
    if format == "pfm":
        _write_pfm(path, (vals / scale).astype(np.float32))
    elif format == "png16":
        counts = np.rint(vals / scale)
        if depth.valid.any() and counts[depth.valid].max() > 65535:
            raise ValueError("depth exceeds png16 range at this scale")
        Image.fromarray(counts.astype(np.uint16)).save(path, format="PNG")
    else:
        raise ValueError(f"unknown depth format {format!r}")


def _read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.readline().rstrip()
        if header == b"PF":
            raise ValueError("color PFM not supported; expected grayscale 'Pf'")
        if header != b"Pf":
            raise ValueError(f"not a PFM file (header {header!r})")
        dims = f.readline().decode("ascii", "replace")
        m = re.match(r"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not m:
            raise ValueError(f"malformed PFM dimension line {dims!r}")
        width, height = int(m.group(1)), int(m.group(2))
        scale_line = float(f.readline().decode("ascii", "replace").strip())
        endian = "<" if scale_line < 0 else ">"
        data = np.fromfile(f, endian + "f4", width * height)
    if data.size != width * height:
        raise ValueError("PFM payload truncated")
    # PFM rows are stored bottom-up
    return np.flipud(data.reshape(height, width)).astype(np.float64)


def _write_pfm(path, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=np.float32)
    h, w = values.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")  # negative scale: little-endian
        np.flipud(values).astype("<f4").tofile(f)
