"""Synthetic EM-like stacks with exact ground truth.

Reticula are small dark disks that thread several consecutive slices with
a little xy drift and +/-1 px radius jitter. Distractors are dark stripes
and large blobs that are always wider than the detection diameter bound,
standing in for membranes and other large dark structures.

Randomness comes from SplitMix64 (see ``SplitMix64``), so a spec and its
seed pin the output bytes without depending on numpy's generators.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import List, Optional, Tuple

import numpy as np

from .annotations import AnnotationSet, Component, Source, Status, TrackedObject
from .filters import round_clamp
from .volume import Volume

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15


class PhantomError(ValueError):
    """The requested geometry cannot be placed inside the volume."""


class SplitMix64:
    """Counter-based SplitMix64 stream.

    Output ``i`` (1-based) is ``mix(seed + i * 0x9E3779B97F4A7C15 mod 2**64)``
    with the standard finaliser (shifts 30/27/31, multipliers
    0xBF58476D1CE4E5B9 and 0x94D049BB133111EB). Derived draws:

    * ``uniform``: ``(u >> 11) * 2**-53``, in [0, 1)
    * ``integers(lo, hi)``: ``lo + floor(uniform * (hi - lo + 1))``, inclusive
    * ``normal``: Box-Muller on consecutive uniform pairs (a, b):
      ``r = sqrt(-2 ln(1 - a))``, emitting ``r cos(2 pi b)`` then ``r sin(2 pi b)``
    """

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK64

    def next_u64(self, n: int) -> np.ndarray:
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * _GAMMA) & _MASK64
        return z

    def uniform(self, n: int = 1) -> np.ndarray:
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def integers(self, lo: int, hi: int, n: int = 1) -> np.ndarray:
        if hi < lo:
            raise ValueError(f"empty integer range [{lo}, {hi}]")
        return lo + np.floor(self.uniform(n) * (hi - lo + 1)).astype(np.int64)

    def integer(self, lo: int, hi: int) -> int:
        return int(self.integers(lo, hi, 1)[0])

    def normal(self, n: int) -> np.ndarray:
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log(1.0 - u[:, 0]))
        theta = 2.0 * math.pi * u[:, 1]
        out = np.empty((pairs, 2))
        out[:, 0] = r * np.cos(theta)
        out[:, 1] = r * np.sin(theta)
        return out.reshape(-1)[:n]


@dataclass(frozen=True)
class PhantomSpec:
    width: int = 64
    height: int = 64
    depth: int = 20
    n_reticula: int = 30
    reticulum_radius_range: Tuple[int, int] = (1, 3)
    reticulum_length_range: Tuple[int, int] = (3, 8)
    reticulum_intensity: int = 50
    n_distractors: int = 10
    background_intensity: int = 180
    noise_sigma: float = 8.0
    drift_per_slice: int = 1
    rng_seed: int = 20140601
    max_diameter: int = 10
    distractor_intensity: Optional[int] = None
    min_separation: int = 3

    def __post_init__(self):
        object.__setattr__(self, "reticulum_radius_range", tuple(int(v) for v in self.reticulum_radius_range))
        object.__setattr__(self, "reticulum_length_range", tuple(int(v) for v in self.reticulum_length_range))
        if min(self.width, self.height, self.depth) < 1:
            raise ValueError("phantom dimensions must be >= 1")
        if self.n_reticula < 0 or self.n_distractors < 0:
            raise ValueError("object counts must be >= 0")
        rmin, rmax = self.reticulum_radius_range
        lmin, lmax = self.reticulum_length_range
        if not 1 <= rmin <= rmax:
            raise ValueError(f"bad reticulum_radius_range {self.reticulum_radius_range}")
        if not 1 <= lmin <= lmax:
            raise ValueError(f"bad reticulum_length_range {self.reticulum_length_range}")
        if 2 * rmax + 1 > self.max_diameter:
            raise ValueError(
                f"reticula up to radius {rmax} ({2 * rmax + 1} px across) would exceed max_diameter {self.max_diameter}"
            )
        for name in ("reticulum_intensity", "background_intensity"):
            if not 0 <= getattr(self, name) <= 255:
                raise ValueError(f"{name} must be in [0, 255]")
        if self.distractor_intensity is not None and not 0 <= self.distractor_intensity <= 255:
            raise ValueError("distractor_intensity must be in [0, 255]")
        if self.reticulum_intensity >= self.background_intensity:
            raise ValueError("reticula must be darker than the background")
        if self.noise_sigma < 0 or self.drift_per_slice < 0 or self.min_separation < 0:
            raise ValueError("noise_sigma, drift_per_slice and min_separation must be >= 0")

    @classmethod
    def from_dict(cls, data: dict) -> "PhantomSpec":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown phantom spec keys: {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["reticulum_radius_range"] = list(self.reticulum_radius_range)
        out["reticulum_length_range"] = list(self.reticulum_length_range)
        return out


def _disk(cx: int, cy: int, r: int) -> List[Tuple[int, int]]:
    return [
        (cx + dx, cy + dy)
        for dy in range(-r, r + 1)
        for dx in range(-r, r + 1)
        if dx * dx + dy * dy <= r * r
    ]


def _stripe(cx: float, cy: float, length: float, angle: float, w: int, h: int) -> List[Tuple[int, int]]:
    ux, uy = math.cos(angle), math.sin(angle)
    half = length / 2
    pts = []
    reach = int(math.ceil(half)) + 2
    for y in range(max(0, int(cy) - reach), min(h, int(cy) + reach + 1)):
        for x in range(max(0, int(cx) - reach), min(w, int(cx) + reach + 1)):
            px, py = x - cx, y - cy
            t = max(-half, min(half, px * ux + py * uy))
            if (px - t * ux) ** 2 + (py - t * uy) ** 2 <= 1.0:
                pts.append((x, y))
    return pts


def _place_distractor(spec: PhantomSpec, rng: SplitMix64, occupied: np.ndarray):
    w, h, d = spec.width, spec.height, spec.depth
    span = rng.integer(max(1, d // 4), d)
    z0 = rng.integer(0, d - span)
    # large enough that even the relaxed rescue bound cannot accept it
    min_extent = spec.max_diameter + 4
    if rng.integer(0, 2) == 0:
        radius = rng.integer(math.ceil((min_extent - 1) / 2), math.ceil((min_extent - 1) / 2) + 2)
        if 2 * radius + 1 > min(w, h):
            raise PhantomError("volume too small for blob distractors")
        cx = rng.integer(radius, w - 1 - radius)
        cy = rng.integer(radius, h - 1 - radius)
        pixels = _disk(cx, cy, radius)
    else:
        length = rng.integer(math.ceil(min_extent * math.sqrt(2)), math.ceil(min_extent * math.sqrt(2)) + 8)
        angle = float(rng.uniform(1)[0]) * math.pi
        ex = abs(math.cos(angle)) * length / 2 + 1
        ey = abs(math.sin(angle)) * length / 2 + 1
        if 2 * ex >= w or 2 * ey >= h:
            raise PhantomError("volume too small for stripe distractors")
        cx = ex + float(rng.uniform(1)[0]) * (w - 1 - 2 * ex)
        cy = ey + float(rng.uniform(1)[0]) * (h - 1 - 2 * ey)
        pixels = _stripe(cx, cy, length, angle, w, h)
    xs = np.array([p[0] for p in pixels])
    ys = np.array([p[1] for p in pixels])
    for z in range(z0, z0 + span):
        occupied[z, ys, xs] = True


def _free(occupied_slice: np.ndarray, cx: int, cy: int, r: int, sep: int) -> bool:
    h, w = occupied_slice.shape
    reach = r + sep
    y0, y1 = max(0, cy - reach), min(h, cy + reach + 1)
    x0, x1 = max(0, cx - reach), min(w, cx + reach + 1)
    yy, xx = np.mgrid[y0:y1, x0:x1]
    near = (xx - cx) ** 2 + (yy - cy) ** 2 <= reach * reach
    return not occupied_slice[y0:y1, x0:x1][near].any()


def _place_reticulum(spec: PhantomSpec, rng: SplitMix64, occupied: np.ndarray, attempts: int = 500):
    w, h, d = spec.width, spec.height, spec.depth
    rmin, rmax = spec.reticulum_radius_range
    lmin, lmax = spec.reticulum_length_range
    if lmin > d:
        raise PhantomError(f"reticulum length {lmin} exceeds depth {d}")
    margin = rmax + 1
    if w - 1 - margin < margin or h - 1 - margin < margin:
        raise PhantomError("volume too small for reticula")
    for _ in range(attempts):
        base = rng.integer(rmin, rmax)
        length = rng.integer(lmin, min(lmax, d))
        z0 = rng.integer(0, d - length)
        cx = rng.integer(margin, w - 1 - margin)
        cy = rng.integer(margin, h - 1 - margin)
        cross = []
        ok = True
        for k in range(length):
            if k:
                step = rng.integers(-spec.drift_per_slice, spec.drift_per_slice, 2)
                cx = min(max(cx + int(step[0]), margin), w - 1 - margin)
                cy = min(max(cy + int(step[1]), margin), h - 1 - margin)
            r = min(max(base + rng.integer(-1, 1), rmin), rmax)
            if not _free(occupied[z0 + k], cx, cy, r, spec.min_separation):
                ok = False
                break
            cross.append((z0 + k, _disk(cx, cy, r)))
        if ok:
            for z, pixels in cross:
                xs = np.array([p[0] for p in pixels])
                ys = np.array([p[1] for p in pixels])
                occupied[z, ys, xs] = True
            return cross
    raise PhantomError(f"unplaceable geometry: no room for another reticulum after {attempts} attempts")


def generate_phantom(spec: PhantomSpec) -> Tuple[Volume, AnnotationSet, List[TrackedObject]]:
    """Render a phantom stack and its ground truth.

    Returns the volume, one confirmed truth component per reticulum per
    slice, and one tracked object per reticulum spanning two or more slices.
    """
    rng = SplitMix64(spec.rng_seed)
    w, h, d = spec.width, spec.height, spec.depth
    distractor_mask = np.zeros((d, h, w), dtype=bool)
    for _ in range(spec.n_distractors):
        _place_distractor(spec, rng, distractor_mask)
    occupied = distractor_mask.copy()
    reticula = [_place_reticulum(spec, rng, occupied) for _ in range(spec.n_reticula)]

    image = np.full((d, h, w), float(spec.background_intensity))
    dark = spec.reticulum_intensity if spec.distractor_intensity is None else spec.distractor_intensity
    image[distractor_mask] = dark
    for cross in reticula:
        for z, pixels in cross:
            for x, y in pixels:
                image[z, y, x] = spec.reticulum_intensity
    if spec.noise_sigma > 0:
        for z in range(d):
            image[z] += spec.noise_sigma * rng.normal(h * w).reshape(h, w)
    volume = Volume(round_clamp(image))

    truth = AnnotationSet(w, h, d)
    entries = sorted(
        ((z, k, pixels) for k, cross in enumerate(reticula) for z, pixels in cross),
        key=lambda e: (e[0], e[1]),
    )
    ids = {}
    track_ids = {k: t for t, k in enumerate(k for k, cross in enumerate(reticula) if len(cross) >= 2)}
    for z, k, pixels in entries:
        comp = truth.add(
            Component(truth.new_id(), z, tuple(pixels), Source.TRUTH, Status.CONFIRMED, track_ids.get(k))
        )
        ids[(k, z)] = comp.id
    tracks = [
        TrackedObject(track_ids[k], tuple((z, ids[(k, z)]) for z, _ in cross))
        for k, cross in enumerate(reticula)
        if k in track_ids
    ]
    return volume, truth, tracks
