"""Shared test helpers: random pose generation and independent brute-force
oracles. The oracles deliberately re-derive everything from the basic
formulas (plain loops, explicit scalar math) instead of reusing library
internals."""
from __future__ import annotations

import math

import numpy as np

from worldwalk import CameraPose, Rotation


def random_rotation(rng) -> Rotation:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return Rotation.from_quat(*q)


def random_pose(rng, scale: float = 5.0) -> CameraPose:
    return CameraPose(random_rotation(rng), rng.uniform(-scale, scale, 3))


def brute_splat(positions, colors, intr, pose, radius, background=(0, 0, 0),
                depth_tol=0.02):
    """Reference rasterizer: per-point loops implementing the documented rule
    directly. Pass 1 records the per-pixel minimum depth; pass 2 picks, among
    candidates within the depth tolerance of it, the splat centered closest
    to the pixel, exact ties to the lower index. Returns (image, depth, valid)."""
    h, w = intr.height, intr.width
    img = np.empty((h, w, 3), np.uint8)
    img[:] = np.asarray(background, np.uint8)
    dmin = np.full((h, w), np.inf)
    dep = np.full((h, w), np.inf)
    best = np.full((h, w), np.inf)
    idx = np.full((h, w), -1, np.int64)
    rt = pose.rotation.as_matrix().T
    t = pose.translation

    def camera_uvd(i):
        px, py, pz = positions[i] - t
        xc = rt[0, 0] * px + rt[0, 1] * py + rt[0, 2] * pz
        yc = rt[1, 0] * px + rt[1, 1] * py + rt[1, 2] * pz
        zc = rt[2, 0] * px + rt[2, 1] * py + rt[2, 2] * pz
        if zc >= -1e-6:
            return None
        d = -zc
        u = intr.cx + intr.fx * (xc / d)
        v = intr.cy - intr.fy * (yc / d)
        return u, v, d

    for i in range(len(positions)):
        got = camera_uvd(i)
        if got is None:
            continue
        u, v, d = got
        cx = int(math.floor(u + 0.5))
        cy = int(math.floor(v + 0.5))
        for dy in range(-radius, radius + 1):
            for dx in range(-radius, radius + 1):
                x, y = cx + dx, cy + dy
                if 0 <= x < w and 0 <= y < h and d < dmin[y, x]:
                    dmin[y, x] = d
    for i in range(len(positions)):
        got = camera_uvd(i)
        if got is None:
            continue
        u, v, d = got
        cx = int(math.floor(u + 0.5))
        cy = int(math.floor(v + 0.5))
        for dy in range(-radius, radius + 1):
            for dx in range(-radius, radius + 1):
                x, y = cx + dx, cy + dy
                if not (0 <= x < w and 0 <= y < h):
                    continue
                if d > dmin[y, x] * (1.0 + depth_tol):
                    continue
                dist = (u - x) ** 2 + (v - y) ** 2
                if dist < best[y, x]:
                    best[y, x] = dist
                    dep[y, x] = d
                    idx[y, x] = i
    hit = idx >= 0
    img[hit] = np.asarray(colors)[idx[hit]]
    return img, dep, hit


def brute_top3(vectors, query):
    """Exhaustive top-3 by cosine similarity over (index, vector) pairs;
    ties break toward the smaller index."""
    def cos(a, b):
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na < 1e-12 or nb < 1e-12:
            return 0.0
        return float(np.dot(a, b) / (na * nb))

    scored = sorted(((cos(query, v), i) for i, v in vectors),
                    key=lambda t: (-t[0], t[1]))
    return [(i, s) for s, i in scored[:3]]
