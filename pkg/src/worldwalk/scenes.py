"""Analytic synthetic scenes with exact closed-form color and depth, plus
depth feedback helpers.

Three scene kinds are supported: a fronto-parallel textured plane, the inside
of a textured box room, and a field of vertical textured columns. Textures
are integer-hash checkers, so ground truth is deterministic across platforms
and exact at every query point.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .geometry import CameraIntrinsics, CameraPose
from .pointcloud import DepthMap, Frame, RenderOutput, _ray_directions

SCENE_KINDS = ("textured-plane", "box-room", "column-field")


@dataclass(frozen=True)
class SceneDescription:
    """Geometry and texture parameters for one analytic scene.

    The checker period is the full repeat length: squares have side
    period / 2, so two points half a period apart along a checker axis always
    land in adjacent squares.
    """

    kind: str
    plane_distance: float = 5.0
    half_extents: tuple = (8.0, 5.0, 10.0)
    column_spacing: float = 4.0
    column_radius: float = 0.6
    column_count: int = 3
    checker_period: float = 2.0
    palette_seed: int = 7

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise ValueError(f"unknown scene kind {self.kind!r}")
        he = tuple(float(v) for v in self.half_extents)
        if len(he) != 3 or any(v <= 0 for v in he):
            raise ValueError("half_extents must be three positive numbers")
        object.__setattr__(self, "half_extents", he)
        for name in ("plane_distance", "column_spacing", "column_radius", "checker_period"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.column_count < 1:
            raise ValueError("column_count must be >= 1")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "plane_distance": self.plane_distance,
            "half_extents": list(self.half_extents),
            "column_spacing": self.column_spacing,
            "column_radius": self.column_radius,
            "column_count": self.column_count,
            "checker_period": self.checker_period,
            "palette_seed": self.palette_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneDescription":
        known = {k: d[k] for k in (
            "kind", "plane_distance", "half_extents", "column_spacing",
            "column_radius", "column_count", "checker_period", "palette_seed",
        ) if k in d}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown scene config keys: {sorted(unknown)}")
        if "half_extents" in known:
            known["half_extents"] = tuple(known["half_extents"])
        return cls(**known)

    @classmethod
    def from_file(cls, path) -> "SceneDescription":
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass(frozen=True)
class GroundTruthSample:
    """Exact color and z-depth of one camera ray; hit=False means the ray
    escapes the scene."""

    color: tuple
    depth: float
    hit: bool


def _mix64(h: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer
    h = h.astype(np.uint64)
    h ^= h >> np.uint64(30)
    h *= np.uint64(0xBF58476D1CE4E5B9)
    h ^= h >> np.uint64(27)
    h *= np.uint64(0x94D049BB133111EB)
    h ^= h >> np.uint64(31)
    return h


def _cell_colors(sa, sb, face, seed: int) -> np.ndarray:
    """Deterministic color per checker cell.

    Cells of opposite parity draw from disjoint palettes (warm vs cool red
    channel), so neighbors along a checker axis always differ.
    """
    sa = np.asarray(sa, np.int64)
    sb = np.asarray(sb, np.int64)
    face = np.asarray(face, np.int64)
    with np.errstate(over="ignore"):
        h = _mix64(sa.astype(np.uint64) + np.uint64(seed) * np.uint64(0x9E3779B97F4A7C15))
        h = _mix64(h ^ (sb.astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)))
        h = _mix64(h ^ (face.astype(np.uint64) * np.uint64(0x165667B19E3779F9)))
    parity = ((sa + sb) & 1).astype(bool)
    warm = np.stack([
        150 + (h & np.uint64(63)),
        60 + ((h >> np.uint64(6)) & np.uint64(63)),
        40 + ((h >> np.uint64(12)) & np.uint64(63)),
    ], axis=-1)
    cool = np.stack([
        40 + ((h >> np.uint64(18)) & np.uint64(63)),
        80 + ((h >> np.uint64(24)) & np.uint64(63)),
        150 + ((h >> np.uint64(30)) & np.uint64(63)),
    ], axis=-1)
    return np.where(parity[..., None], cool, warm).astype(np.uint8)


def _texture(scene: SceneDescription, a, b, face) -> np.ndarray:
    half = scene.checker_period / 2.0
    sa = np.floor(np.asarray(a) / half).astype(np.int64)
    sb = np.floor(np.asarray(b) / half).astype(np.int64)
    return _cell_colors(sa, sb, face, scene.palette_seed)


def in_free_space(scene: SceneDescription, point) -> bool:
    p = np.asarray(point, dtype=float)
    if scene.kind == "textured-plane":
        return bool(p[2] > -scene.plane_distance)
    if scene.kind == "box-room":
        hx, hy, hz = scene.half_extents
        return bool(abs(p[0]) < hx and abs(p[1]) < hy and abs(p[2]) < hz)
    cx, cz = _column_centers(scene)
    d2 = (p[0] - cx) ** 2 + (p[2] - cz) ** 2
    return bool(np.all(d2 > scene.column_radius ** 2))


def _column_centers(scene: SceneDescription):
    n = scene.column_count
    ii, jj = np.meshgrid(np.arange(-n, n + 1), np.arange(-n, n + 1), indexing="ij")
    keep = ~((ii == 0) & (jj == 0))  # keep the origin clear for the camera
    return (ii[keep] * scene.column_spacing, jj[keep] * scene.column_spacing)


def _trace(scene: SceneDescription, origin: np.ndarray, dirs: np.ndarray):
    """Intersect rays origin + s * dirs with the scene.

    Returns (s, colors, hit). With pixel rays scaled to z = -1 in camera
    space, the parameter s is exactly the z-depth of the hit.
    """
    o = origin
    flat = dirs.reshape(-1, 3)
    if scene.kind == "textured-plane":
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (-scene.plane_distance - o[2]) / flat[:, 2]
        hit = np.isfinite(s) & (s > 1e-12)
        s = np.where(hit, s, np.inf)
        p = o + s[:, None] * flat
        colors = _texture(scene, p[:, 0], p[:, 1], np.zeros(len(flat), np.int64))
    elif scene.kind == "box-room":
        he = np.array(scene.half_extents)
        with np.errstate(divide="ignore", invalid="ignore"):
            s_axis = (np.sign(flat) * he - o) / flat
        s_axis = np.where(np.isfinite(s_axis) & (s_axis > 1e-12), s_axis, np.inf)
        axis = np.argmin(s_axis, axis=1)
        s = s_axis[np.arange(len(flat)), axis]
        hit = np.isfinite(s)
        p = o + np.where(hit, s, 0.0)[:, None] * flat
        face = axis * 2 + (np.take_along_axis(flat, axis[:, None], 1)[:, 0] > 0)
        a = np.choose(axis, [p[:, 2], p[:, 0], p[:, 0]])
        b = np.choose(axis, [p[:, 1], p[:, 2], p[:, 1]])
        colors = _texture(scene, a, b, face)
        s = np.where(hit, s, np.inf)
    else:  # column-field
        cx, cz = _column_centers(scene)
        r2 = scene.column_radius ** 2
        s = np.full(len(flat), np.inf)
        col_id = np.zeros(len(flat), np.int64)
        dx, dz = flat[:, 0], flat[:, 2]
        aa = dx * dx + dz * dz
        for k in range(len(cx)):
            ox, oz = o[0] - cx[k], o[2] - cz[k]
            bb = 2 * (ox * dx + oz * dz)
            cc = ox * ox + oz * oz - r2
            disc = bb * bb - 4 * aa * cc
            with np.errstate(invalid="ignore", divide="ignore"):
                root = (-bb - np.sqrt(disc)) / (2 * aa)
            ok = (disc > 0) & (root > 1e-12) & (root < s)
            s = np.where(ok, root, s)
            col_id = np.where(ok, k, col_id)
        hit = np.isfinite(s)
        p = o + np.where(hit, s, 0.0)[:, None] * flat
        # unwrap the cylinder: arc length around, height along y
        px = p[:, 0] - cx[np.clip(col_id, 0, None)]
        pz = p[:, 2] - cz[np.clip(col_id, 0, None)]
        arc = np.arctan2(pz, px) * scene.column_radius
        colors = _texture(scene, arc, p[:, 1], col_id)
        s = np.where(hit, s, np.inf)
    colors = np.where(hit[:, None], colors, 0).astype(np.uint8)
    return s.reshape(dirs.shape[:-1]), colors.reshape(dirs.shape[:-1] + (3,)), hit.reshape(dirs.shape[:-1])


def analytic_render(scene: SceneDescription, intr: CameraIntrinsics,
                    pose: CameraPose) -> tuple[Frame, DepthMap]:
    """Exact per-pixel color and z-depth of the scene from a camera pose."""
    if not in_free_space(scene, pose.translation):
        raise ValueError("camera pose lies outside the scene's free space")
    uu, vv = np.meshgrid(np.arange(intr.width), np.arange(intr.height), indexing="xy")
    d_cam = _ray_directions(intr, uu, vv)
    d_world = d_cam @ pose.rotation.as_matrix().T
    s, colors, hit = _trace(scene, pose.translation, d_world)
    depth = DepthMap(np.where(hit, s, 0.0), hit)
    return Frame(colors), depth


def trace_ray(scene: SceneDescription, intr: CameraIntrinsics, pose: CameraPose,
              pixel) -> GroundTruthSample:
    """Ground truth for a single pixel ray."""
    d_cam = _ray_directions(intr, pixel[0], pixel[1]).reshape(1, 3)
    d_world = d_cam @ pose.rotation.as_matrix().T
    s, colors, hit = _trace(scene, pose.translation, d_world)
    return GroundTruthSample(tuple(int(c) for c in colors[0]), float(s[0]), bool(hit[0]))


def depth_from_render(render: RenderOutput) -> DepthMap:
    """Reuse a render's depth buffer as the next depth source; holes
    (infinite depth) become invalid pixels."""
    return DepthMap.from_values(render.depth)


def ray_length_factors(intr: CameraIntrinsics) -> np.ndarray:
    """Per-pixel ||d|| of the unnormalized ray; converts z-depth to
    ray-distance exactly."""
    uu, vv = np.meshgrid(np.arange(intr.width), np.arange(intr.height), indexing="xy")
    return np.linalg.norm(_ray_directions(intr, uu, vv), axis=-1)


def z_to_ray(depth: DepthMap, intr: CameraIntrinsics) -> DepthMap:
    f = ray_length_factors(intr)
    return DepthMap(np.where(depth.valid, depth.values * f, 0.0), depth.valid)


def ray_to_z(depth: DepthMap, intr: CameraIntrinsics) -> DepthMap:
    f = ray_length_factors(intr)
    return DepthMap(np.where(depth.valid, depth.values / f, 0.0), depth.valid)
