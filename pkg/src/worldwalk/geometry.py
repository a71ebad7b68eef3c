"""Camera geometry: rotations, poses, and keyboard-action camera trajectories.

Conventions (used consistently across the package):
  - right-handed world and camera frames
  - camera looks along -z, +y is up, +x is right (camera space)
  - poses are camera-to-world: R is the camera orientation, t the camera
    center in world coordinates
  - pixel u grows right, v grows down
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

VALID_KEYS = frozenset("WASD")

# Default interaction tuning: 33 frames per interaction, desk-scale motion.
DEFAULT_ETA = 0.05
DEFAULT_THETA_DEG = 30.0
DEFAULT_FRAMES = 33


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(d["fx"], d["fy"], d["cx"], d["cy"], int(d["width"]), int(d["height"]))


@dataclass(frozen=True)
class Rotation:
    """Unit quaternion (w, x, y, z), scalar first."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        n = math.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)
        if not math.isfinite(n) or abs(n - 1.0) > 1e-9:
            raise ValueError(f"quaternion must be unit length, got norm {n!r}")

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_quat(cls, w: float, x: float, y: float, z: float) -> "Rotation":
        """Build from an arbitrary non-zero quaternion, normalizing it."""
        n = math.sqrt(w * w + x * x + y * y + z * z)
        if not math.isfinite(n) or n < 1e-12:
            raise ValueError("degenerate quaternion")
        return cls(w / n, x / n, y / n, z / n)

    @classmethod
    def from_matrix(cls, m) -> "Rotation":
        """Build from a 3x3 row-major rotation matrix (validated)."""
        m = np.asarray(m, dtype=float).reshape(3, 3)
        if abs(np.linalg.det(m) - 1.0) > 1e-6 or np.abs(m @ m.T - np.eye(3)).max() > 1e-6:
            raise ValueError("matrix is not a rotation (orthonormal, det +1)")
        # Shepperd's method: pick the largest diagonal combination for stability.
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        if tr > 0:
            s = math.sqrt(tr + 1.0) * 2
            w = 0.25 * s
            x = (m[2, 1] - m[1, 2]) / s
            y = (m[0, 2] - m[2, 0]) / s
            z = (m[1, 0] - m[0, 1]) / s
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
            w = (m[2, 1] - m[1, 2]) / s
            x = 0.25 * s
            y = (m[0, 1] + m[1, 0]) / s
            z = (m[0, 2] + m[2, 0]) / s
        elif m[1, 1] > m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
            w = (m[0, 2] - m[2, 0]) / s
            x = (m[0, 1] + m[1, 0]) / s
            y = 0.25 * s
            z = (m[1, 2] + m[2, 1]) / s
        else:
            s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
            w = (m[1, 0] - m[0, 1]) / s
            x = (m[0, 2] + m[2, 0]) / s
            y = (m[1, 2] + m[2, 1]) / s
            z = 0.25 * s
        return cls.from_quat(w, x, y, z)

    def as_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])

    def compose(self, other: "Rotation") -> "Rotation":
        """self applied after other in matrix terms: (a.compose(b)).as_matrix() == a @ b."""
        aw, ax, ay, az = self.w, self.x, self.y, self.z
        bw, bx, by, bz = other.w, other.x, other.y, other.z
        return Rotation.from_quat(
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        )

    def inverse(self) -> "Rotation":
        return Rotation(self.w, -self.x, -self.y, -self.z)

    def rotate(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return v @ self.as_matrix().T

    def angle_to(self, other: "Rotation") -> float:
        """Rotation angle in radians between two orientations."""
        d = self.inverse().compose(other)
        return 2.0 * math.atan2(math.sqrt(d.x * d.x + d.y * d.y + d.z * d.z), abs(d.w))

    def quat(self) -> tuple[float, float, float, float]:
        return (self.w, self.x, self.y, self.z)


def rotation_y(theta_deg: float) -> Rotation:
    """Rotation about the +y axis; matrix [[c,0,s],[0,1,0],[-s,0,c]]."""
    if not math.isfinite(theta_deg):
        raise ValueError("angle must be finite")
    half = math.radians(theta_deg) * 0.5
    return Rotation.from_quat(math.cos(half), 0.0, math.sin(half), 0.0)


def slerp(a: Rotation, b: Rotation, u: float) -> Rotation:
    """Shortest-path spherical interpolation between two rotations.

    Falls back to normalized linear interpolation when the interpolation
    angle is below 1e-8 rad.
    """
    if not 0.0 <= u <= 1.0:
        raise ValueError("interpolation fraction must be in [0, 1]")
    qa = np.array(a.quat())
    qb = np.array(b.quat())
    dot = float(qa @ qb)
    if dot < 0.0:
        qb = -qb
        dot = -dot
    dot = min(dot, 1.0)
    half_angle = math.acos(dot)
    if 2.0 * half_angle < 1e-8:
        q = qa + u * (qb - qa)
    else:
        s = math.sin(half_angle)
        q = (math.sin((1.0 - u) * half_angle) / s) * qa + (math.sin(u * half_angle) / s) * qb
    return Rotation.from_quat(*q)


@dataclass(frozen=True, eq=False)
class CameraPose:
    """Camera-to-world pose: orientation plus camera center."""

    rotation: Rotation
    translation: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(Rotation.identity(), np.zeros(3))

    def to_dict(self) -> dict:
        return {
            "R": [float(v) for v in self.rotation.as_matrix().reshape(-1)],
            "t": [float(v) for v in self.translation],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraPose":
        return cls(Rotation.from_matrix(np.array(d["R"]).reshape(3, 3)), np.array(d["t"], dtype=float))


def forward_vector(pose: CameraPose | Rotation) -> np.ndarray:
    """Camera forward axis in world coordinates: -R[:, 2]."""
    rot = pose.rotation if isinstance(pose, CameraPose) else pose
    w, x, y, z = rot.quat()
    # third column of the rotation matrix, negated
    return -np.array([2 * (x * z + w * y), 2 * (y * z - w * x), 1 - 2 * (x * x + y * y)])


def camera_to_world(pose: CameraPose, point_camera) -> np.ndarray:
    """R @ X + t; accepts a single 3-vector or an (N, 3) array."""
    p = np.asarray(point_camera, dtype=float)
    return p @ pose.rotation.as_matrix().T + pose.translation


def world_to_camera(pose: CameraPose, point_world) -> np.ndarray:
    """R^T (X - t); accepts a single 3-vector or an (N, 3) array."""
    p = np.asarray(point_world, dtype=float)
    return (p - pose.translation) @ pose.rotation.as_matrix()


@dataclass(frozen=True)
class ActionParams:
    """Tunable interaction parameters: step size, total yaw, frame count.

    The frame count only has to be >= 1 here; the latent encoder additionally
    requires frames % temporal_factor == 1 and enforces that where it matters.
    """

    eta: float = DEFAULT_ETA
    theta_deg: float = DEFAULT_THETA_DEG
    frames: int = DEFAULT_FRAMES

    def __post_init__(self):
        if not (math.isfinite(self.eta) and self.eta >= 0):
            raise ValueError("eta must be finite and >= 0")
        if not (0 <= self.theta_deg <= 180):
            raise ValueError("theta_deg must be in [0, 180]")
        if int(self.frames) != self.frames or self.frames < 1:
            raise ValueError("frames must be a positive integer")


@dataclass(frozen=True)
class Action:
    """One user command: a subset of WASD keys (empty = idle) plus params."""

    keys: frozenset = frozenset()
    params: ActionParams = ActionParams()

    def __post_init__(self):
        keys = frozenset(self.keys)
        if not keys <= VALID_KEYS:
            raise ValueError(f"keys must be a subset of WASD, got {sorted(self.keys)}")
        object.__setattr__(self, "keys", keys)

    @classmethod
    def of(cls, keys: str, params: ActionParams | None = None) -> "Action":
        return cls(frozenset(keys.upper()), params or ActionParams())

    def keys_string(self) -> str:
        """Canonical key order, e.g. {A, W} -> 'WA'."""
        return "".join(k for k in "WASD" if k in self.keys)


@dataclass(frozen=True)
class Trajectory:
    """f+1 poses, index 0..f; pose 0 is the supplied initial pose."""

    poses: tuple

    def __post_init__(self):
        if len(self.poses) < 1:
            raise ValueError("trajectory needs at least the initial pose")

    def __len__(self) -> int:
        return len(self.poses)

    def __getitem__(self, k) -> CameraPose:
        return self.poses[k]

    @property
    def final(self) -> CameraPose:
        return self.poses[-1]


def action_to_trajectory(action: Action, initial: CameraPose) -> Trajectory:
    """Map a keyboard action to a camera trajectory of f+1 poses.

    Pose 0 is the initial pose unchanged. For each frame k in 1..f the
    orientation is slerped toward a total yaw of +/-theta (A is +, D is -),
    then the camera center advances by +/-eta along the frame's own forward
    axis (W is +, S is -). Opposite keys cancel; combined W+A/D traces an arc
    because the forward axis is recomputed after rotating each frame.
    """
    keys = action.keys
    p = action.params
    f = int(p.frames)
    sigma_rot = (1 if "A" in keys else 0) - (1 if "D" in keys else 0)
    sigma_tr = (1 if "W" in keys else 0) - (1 if "S" in keys else 0)

    q0 = initial.rotation
    q_target = q0.compose(rotation_y(sigma_rot * p.theta_deg)) if sigma_rot else q0

    poses = [initial]
    t = initial.translation
    for k in range(1, f + 1):
        rot = slerp(q0, q_target, k / f) if sigma_rot else q0
        if sigma_tr:
            t = t + (sigma_tr * p.eta) * forward_vector(rot)
        poses.append(CameraPose(rot, t))
    return Trajectory(tuple(poses))
