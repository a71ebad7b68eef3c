"""Jitted splat rasterizer core. Kept separate so the JIT cost is only paid
when rendering is actually used."""
from __future__ import annotations

import numpy as np
from numba import njit

NEAR_CLIP = 1e-6

# Candidates within this relative depth band of the per-pixel minimum count
# as the same surface; among them the splat whose center projects closest to
# the pixel wins. A strict nearest-depth rule would instead always sample the
# texel ~1 px closer to the camera on any sloped surface, a bias that
# compounds across autoregressive feedback steps.
DEPTH_TOLERANCE = 0.02


@njit(cache=True)
def splat_points(positions, colors, rt, tx, ty, tz,
                 fx, fy, cx, cy, height, width, radius,
                 dmin, best_dist, out_color, out_depth, out_index):
    """Transform world points into the camera, project, and z-buffer splat.

    rt is the world-to-camera rotation (R transposed). Each point paints a
    (2*radius+1)^2 square centered on its rounded pixel. Pass 1 finds the
    minimum depth per pixel; pass 2 selects, among candidates within the
    depth tolerance of that minimum, the one projecting closest to the pixel
    center, breaking exact ties toward the lower point index. Both passes are
    sequential and branch on strict inequalities, so output is deterministic.
    """
    n = positions.shape[0]
    for i in range(n):
        px = positions[i, 0] - tx
        py = positions[i, 1] - ty
        pz = positions[i, 2] - tz
        xc = rt[0, 0] * px + rt[0, 1] * py + rt[0, 2] * pz
        yc = rt[1, 0] * px + rt[1, 1] * py + rt[1, 2] * pz
        zc = rt[2, 0] * px + rt[2, 1] * py + rt[2, 2] * pz
        if zc >= -NEAR_CLIP:
            continue
        d = -zc
        u = cx + fx * (xc / d)
        v = cy - fy * (yc / d)
        uf = np.floor(u + 0.5)
        vf = np.floor(v + 0.5)
        if uf < -radius or uf > width - 1 + radius or vf < -radius or vf > height - 1 + radius:
            continue
        pxi = int(uf)
        pyi = int(vf)
        for dy in range(-radius, radius + 1):
            y = pyi + dy
            if y < 0 or y >= height:
                continue
            for dx in range(-radius, radius + 1):
                x = pxi + dx
                if x < 0 or x >= width:
                    continue
                if d < dmin[y, x]:
                    dmin[y, x] = d

    for i in range(n):
        px = positions[i, 0] - tx
        py = positions[i, 1] - ty
        pz = positions[i, 2] - tz
        xc = rt[0, 0] * px + rt[0, 1] * py + rt[0, 2] * pz
        yc = rt[1, 0] * px + rt[1, 1] * py + rt[1, 2] * pz
        zc = rt[2, 0] * px + rt[2, 1] * py + rt[2, 2] * pz
        if zc >= -NEAR_CLIP:
            continue
        d = -zc
        u = cx + fx * (xc / d)
        v = cy - fy * (yc / d)
        uf = np.floor(u + 0.5)
        vf = np.floor(v + 0.5)
        if uf < -radius or uf > width - 1 + radius or vf < -radius or vf > height - 1 + radius:
            continue
        pxi = int(uf)
        pyi = int(vf)
        for dy in range(-radius, radius + 1):
            y = pyi + dy
            if y < 0 or y >= height:
                continue
            for dx in range(-radius, radius + 1):
                x = pxi + dx
                if x < 0 or x >= width:
                    continue
                if d > dmin[y, x] * (1.0 + DEPTH_TOLERANCE):
                    continue
                du = u - x
                dv = v - y
                dist = du * du + dv * dv
                if dist < best_dist[y, x]:
                    best_dist[y, x] = dist
                    out_depth[y, x] = d
                    out_index[y, x] = i

    for y in range(height):
        for x in range(width):
            i = out_index[y, x]
            if i >= 0:
                out_color[y, x, 0] = colors[i, 0]
                out_color[y, x, 1] = colors[i, 1]
                out_color[y, x, 2] = colors[i, 2]
