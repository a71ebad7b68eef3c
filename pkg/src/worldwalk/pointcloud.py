"""Depth-based point clouds: pinhole projection, cloud construction from an
image plus depth, and z-buffered splat rendering of the cloud along a camera
trajectory."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraIntrinsics, CameraPose, Trajectory

NEAR_CLIP = 1e-6

# Depth interpretation modes: "z" means depth is -z in camera space,
# "ray" means depth is distance along the unit pixel ray.
DEPTH_MODES = ("z", "ray")


class InvalidDepthError(ValueError):
    """Raised for non-positive or non-finite depth input."""


class BehindCameraError(ValueError):
    """Raised when projecting a point at or behind the near plane."""


@dataclass(frozen=True, eq=False)
class Frame:
    """8-bit RGB image, shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise ValueError("pixels must be a (H, W, 3) uint8 array")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def filled(cls, width: int, height: int, color=(0, 0, 0)) -> "Frame":
        px = np.empty((height, width, 3), np.uint8)
        px[:] = np.asarray(color, np.uint8)
        return cls(px)


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Per-pixel depth in world units with a validity mask."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if vals.ndim != 2 or valid.shape != vals.shape:
            raise ValueError("values and valid must be matching (H, W) arrays")
        ok = vals[valid]
        if ok.size and not (np.all(np.isfinite(ok)) and np.all(ok > 0)):
            raise ValueError("valid depth entries must be finite and > 0")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "valid", valid)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @classmethod
    def from_values(cls, values) -> "DepthMap":
        """Mark non-finite and non-positive entries invalid."""
        vals = np.asarray(values, dtype=np.float64)
        valid = np.isfinite(vals) & (vals > 0)
        return cls(np.where(valid, vals, 0.0), valid)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """World-coordinate points with parallel 8-bit colors."""

    positions: np.ndarray
    colors: np.ndarray

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64).reshape(-1, 3)
        col = np.ascontiguousarray(self.colors, dtype=np.uint8).reshape(-1, 3)
        if len(pos) != len(col):
            raise ValueError("positions and colors must have equal length")
        if pos.size and not np.all(np.isfinite(pos)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "colors", col)

    def __len__(self) -> int:
        return len(self.positions)

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), np.uint8))


@dataclass(frozen=True, eq=False)
class RenderOutput:
    """One rendered view: color, per-pixel depth (inf = hole), validity."""

    color: Frame
    depth: np.ndarray
    valid: np.ndarray


def _ray_directions(intr: CameraIntrinsics, u, v):
    """Unnormalized camera rays ((u-cx)/fx, -(v-cy)/fy, -1)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return np.stack([
        (u - intr.cx) / intr.fx,
        -(v - intr.cy) / intr.fy,
        -np.ones_like(u),
    ], axis=-1)


def unproject(intr: CameraIntrinsics, pixel, depth: float, mode: str = "ray") -> np.ndarray:
    """Lift one pixel to camera coordinates.

    mode "z": depth is -z; mode "ray": depth is distance along the unit ray.
    """
    if mode not in DEPTH_MODES:
        raise ValueError(f"unknown depth mode {mode!r}")
    if not (np.isfinite(depth) and depth > 0):
        raise InvalidDepthError(f"depth must be finite and > 0, got {depth!r}")
    u, v = pixel
    if not (0 <= u < intr.width and 0 <= v < intr.height):
        raise ValueError(f"pixel {pixel!r} outside image bounds")
    d = _ray_directions(intr, u, v)
    if mode == "ray":
        d = d / np.linalg.norm(d)
    return depth * d


def project(intr: CameraIntrinsics, point_camera) -> tuple[float, float]:
    """Project a camera-space point to continuous pixel coordinates."""
    x, y, z = np.asarray(point_camera, dtype=np.float64)
    if z >= -NEAR_CLIP:
        raise BehindCameraError(f"point at z={z!r} is at or behind the near plane")
    d = -z
    return (intr.cx + intr.fx * (x / d), intr.cy - intr.fy * (y / d))


def build_point_cloud(frame: Frame, depth: DepthMap, intr: CameraIntrinsics,
                      pose: CameraPose, stride: int = 1, mode: str = "ray") -> PointCloud:
    """Unproject every valid pixel on the stride grid into a world-space cloud."""
    if mode not in DEPTH_MODES:
        raise ValueError(f"unknown depth mode {mode!r}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if (frame.height, frame.width) != (depth.height, depth.width):
        raise ValueError("frame and depth dimensions differ")

    ys = np.arange(0, frame.height, stride)
    xs = np.arange(0, frame.width, stride)
    vv, uu = np.meshgrid(ys, xs, indexing="ij")
    d = depth.values[::stride, ::stride]
    ok = depth.valid[::stride, ::stride]

    dirs = _ray_directions(intr, uu, vv)
    if mode == "ray":
        dirs = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    cam = d[..., None] * dirs
    world = cam.reshape(-1, 3) @ pose.rotation.as_matrix().T + pose.translation
    colors = frame.pixels[::stride, ::stride].reshape(-1, 3)
    keep = ok.reshape(-1)
    return PointCloud(world[keep], colors[keep])


def render_point_cloud(cloud: PointCloud, intr: CameraIntrinsics, pose: CameraPose,
                       splat_radius: int = 1, background=(0, 0, 0)) -> RenderOutput:
    """Render the cloud from a camera pose with square splats and a z-buffer.

    Each point paints a (2r+1)x(2r+1) square at its rounded projection. Per
    pixel, candidates within a 2% depth band of the nearest one count as the
    same surface and the splat centered closest to the pixel wins; exact ties
    go to the lower point index. Pixels no splat touches keep the background
    color and infinite depth.
    """
    if splat_radius < 0:
        raise ValueError("splat_radius must be >= 0")
    from ._raster import splat_points

    h, w = intr.height, intr.width
    color = np.empty((h, w, 3), np.uint8)
    color[:] = np.asarray(background, np.uint8)
    depth = np.full((h, w), np.inf)
    index = np.full((h, w), -1, np.int64)
    if len(cloud):
        dmin = np.full((h, w), np.inf)
        best_dist = np.full((h, w), np.inf)
        rt = np.ascontiguousarray(pose.rotation.as_matrix().T)
        t = pose.translation
        splat_points(cloud.positions, cloud.colors, rt, t[0], t[1], t[2],
                     float(intr.fx), float(intr.fy), float(intr.cx), float(intr.cy),
                     h, w, int(splat_radius), dmin, best_dist, color, depth, index)
    return RenderOutput(Frame(color), depth, index >= 0)


def render_trajectory(cloud: PointCloud, intr: CameraIntrinsics, traj: Trajectory,
                      splat_radius: int = 1, background=(0, 0, 0)) -> list[RenderOutput]:
    """Render the cloud at trajectory poses 1..f, in order."""
    return [
        render_point_cloud(cloud, intr, traj[k], splat_radius, background)
        for k in range(1, len(traj))
    ]
