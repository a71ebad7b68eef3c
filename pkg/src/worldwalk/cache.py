"""Latent history cache: patch-mean latent encoding, a capacity-bounded FIFO
store with a pinned scene-image latent, and pooled cosine top-3 retrieval.

The encoder is a deterministic stand-in with the same interface a learned
encoder would have: spatial patch means of RGB mapped to [0, 1] (value / 256,
so mid-gray 128 encodes to exactly 0.5), then temporal grouping where the
first frame stays alone and every following group of ``temporal_factor``
frames is averaged.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pointcloud import Frame

DEFAULT_CAPACITY = 20
DEFAULT_SPATIAL_FACTOR = 8
DEFAULT_TEMPORAL_FACTOR = 4
TOP_K = 3


@dataclass(frozen=True, eq=False)
class LatentFrame:
    """One compressed frame: (C, H', W') values plus an origin tag."""

    values: np.ndarray
    origin: str = ""

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 3:
            raise ValueError("latent values must be (C, H', W')")
        if not np.all(np.isfinite(vals)):
            raise ValueError("latent values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def shape(self) -> tuple:
        return self.values.shape


@dataclass(frozen=True)
class RetrievedLatent:
    index: int
    score: float
    latent: LatentFrame


@dataclass(frozen=True)
class RetrievalResult:
    """Up to 3 cache hits, descending score; index 0 is the pinned latent."""

    selected: tuple = ()

    def __post_init__(self):
        scores = [r.score for r in self.selected]
        if scores != sorted(scores, reverse=True):
            raise ValueError("selected latents must be in descending score order")
        if len({r.index for r in self.selected}) != len(self.selected):
            raise ValueError("selected cache indices must be distinct")

    def __len__(self) -> int:
        return len(self.selected)

    def best(self) -> RetrievedLatent | None:
        return self.selected[0] if self.selected else None


@dataclass(frozen=True)
class HistoryCache:
    """Pinned-FIFO latent store.

    ``pinned`` never changes once set and never counts toward eviction.
    ``staged_pin`` holds the scene-image latent between session init and the
    first update, at which point it becomes the pinned entry; until then the
    cache is empty for retrieval purposes.
    """

    capacity: int = DEFAULT_CAPACITY
    pinned: LatentFrame | None = None
    entries: tuple = ()
    staged_pin: LatentFrame | None = None

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if self.occupancy > self.capacity:
            raise ValueError("cache over capacity")

    @property
    def occupancy(self) -> int:
        return (1 if self.pinned is not None else 0) + len(self.entries)

    def with_staged_pin(self, latent: LatentFrame) -> "HistoryCache":
        if self.pinned is not None or self.staged_pin is not None:
            raise ValueError("pin already set")
        return HistoryCache(self.capacity, None, self.entries, latent)

    def latents(self) -> list[tuple[int, LatentFrame]]:
        """(cache index, latent) pairs; the pinned latent is index 0."""
        out = []
        offset = 0
        if self.pinned is not None:
            out.append((0, self.pinned))
            offset = 1
        out.extend((i + offset, e) for i, e in enumerate(self.entries))
        return out


def encode_latents(frames: list[Frame], spatial_factor: int = DEFAULT_SPATIAL_FACTOR,
                   temporal_factor: int = DEFAULT_TEMPORAL_FACTOR,
                   origin_step: int | None = None) -> list[LatentFrame]:
    """Encode f frames into 1 + (f-1)/temporal_factor latents."""
    f = len(frames)
    r = int(temporal_factor)
    if f < 1 or (f - 1) % r != 0:
        raise ValueError(f"frame count {f} must satisfy f % {r} == 1")
    h, w = frames[0].height, frames[0].width
    if h % spatial_factor or w % spatial_factor:
        raise ValueError("frame dimensions must be divisible by spatial_factor")

    def spatial(frame: Frame) -> np.ndarray:
        if (frame.height, frame.width) != (h, w):
            raise ValueError("all frames must share dimensions")
        px = frame.pixels.astype(np.float64) / 256.0
        hp, wp = h // spatial_factor, w // spatial_factor
        patches = px.reshape(hp, spatial_factor, wp, spatial_factor, 3)
        return patches.mean(axis=(1, 3)).transpose(2, 0, 1)  # (C, H', W')

    encoded = [spatial(fr) for fr in frames]
    tag = "" if origin_step is None else f"step{origin_step}/"
    latents = [LatentFrame(encoded[0], f"{tag}k1")]
    for j in range((f - 1) // r):
        group = encoded[1 + j * r: 1 + (j + 1) * r]
        latents.append(LatentFrame(np.mean(group, axis=0), f"{tag}k{j + 2}"))
    return latents


def encode_scene_latent(image: Frame, spatial_factor: int = DEFAULT_SPATIAL_FACTOR) -> LatentFrame:
    """Latent of the initial scene image alone."""
    lat = encode_latents([image], spatial_factor, temporal_factor=1)[0]
    return LatentFrame(lat.values, "scene-image")


def cache_update(cache: HistoryCache, step_latents: list[LatentFrame]) -> tuple[HistoryCache, list[int]]:
    """Append all but the last step latent, pinning on the first update and
    evicting oldest non-pinned entries past capacity.

    Returns the new cache plus the evicted entries' cache indices (positions
    in the pre-eviction entry list, pinned = 0).
    """
    appended = list(step_latents[:-1])
    for lat in appended:
        if cache.pinned is not None and lat.shape != cache.pinned.shape:
            raise ValueError("latent dimensions do not match the cache")
        if cache.staged_pin is not None and lat.shape != cache.staged_pin.shape:
            raise ValueError("latent dimensions do not match the cache")

    pinned = cache.pinned
    if pinned is None:
        if cache.staged_pin is not None:
            pinned = cache.staged_pin
        elif appended:
            pinned = appended.pop(0)

    entries = list(cache.entries) + appended
    evicted = []
    overflow = (1 if pinned is not None else 0) + len(entries) - cache.capacity
    if overflow > 0:
        evicted = list(range(1, overflow + 1))  # oldest first, pinned is index 0
        entries = entries[overflow:]
    return HistoryCache(cache.capacity, pinned, tuple(entries), None), evicted


def pool(latent: LatentFrame) -> np.ndarray:
    """Per-channel spatial mean, length C."""
    return latent.values.mean(axis=(1, 2))


def cosine_similarity(q: np.ndarray, c: np.ndarray) -> float:
    q = np.asarray(q, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if q.shape != c.shape:
        raise ValueError("vector lengths differ")
    nq = np.linalg.norm(q)
    nc = np.linalg.norm(c)
    if nq < 1e-12 or nc < 1e-12:
        return 0.0
    return float(q @ c / (nq * nc))


def retrieve(cache: HistoryCache, query: LatentFrame) -> RetrievalResult:
    """Rank every cached latent (pinned included) by pooled cosine similarity
    to the query; ties break toward the smaller cache index."""
    candidates = cache.latents()
    if not candidates:
        return RetrievalResult(())
    q = pool(query)
    scored = [(cosine_similarity(q, pool(lat)), idx, lat) for idx, lat in candidates]
    scored.sort(key=lambda t: (-t[0], t[1]))
    top = scored[:TOP_K]
    return RetrievalResult(tuple(RetrievedLatent(idx, score, lat) for score, idx, lat in top))


def assemble_history_tokens(result: RetrievalResult) -> np.ndarray:
    """Concatenate the selected latents, best match first, into one flat
    payload for the generator's history slot."""
    if not result.selected:
        return np.zeros(0)
    return np.concatenate([r.latent.values.ravel() for r in result.selected])
