"""Bounded morphological region growing over filtered slices.

Dark pixels seed an 8-connected breadth-first growth through pixels that
stay below the darkness threshold. A region whose bounding box grows past
the reticulum diameter bound is thrown away whole: such regions are
membranes or other large dark structures, not reticula.
"""

from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .annotations import AnnotationSet, Component, Source, Status
from .volume import Volume

NEIGHBOURS_8 = ((-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1))


@dataclass(frozen=True)
class GrowParams:
    dark_threshold: int = 90
    max_diameter: int = 10
    min_area: int = 2
    connectivity: int = 8

    def __post_init__(self):
        if not 0 <= self.dark_threshold <= 255:
            raise ValueError(f"dark_threshold must be in [0, 255], got {self.dark_threshold}")
        if self.max_diameter < 1:
            raise ValueError(f"max_diameter must be >= 1, got {self.max_diameter}")
        if self.min_area < 1:
            raise ValueError(f"min_area must be >= 1, got {self.min_area}")
        if self.connectivity != 8:
            raise ValueError("only 8-connectivity is supported")
        # a 1 px "disk" still holds one pixel
        if self.min_area > max(1.0, math.pi * (self.max_diameter / 2) ** 2):
            raise ValueError(
                f"min_area {self.min_area} exceeds the area of a disk of diameter {self.max_diameter}"
            )


def grow_from_seed(
    below: np.ndarray, visited: np.ndarray, seed: Tuple[int, int]
) -> Tuple[List[Tuple[int, int]], Tuple[int, int, int, int]]:
    """Flood the 8-connected region of ``below`` containing ``seed``.

    Marks every reached pixel in ``visited`` and returns the pixels (x, y)
    plus their bounding box. Growth runs to completion so the rejection
    decision depends only on the full region, never on visiting order.
    """
    h, w = below.shape
    sx, sy = seed
    visited[sy, sx] = True
    queue = deque([(sx, sy)])
    pixels = []
    x0 = x1 = sx
    y0 = y1 = sy
    while queue:
        x, y = queue.popleft()
        pixels.append((x, y))
        if x < x0:
            x0 = x
        elif x > x1:
            x1 = x
        if y < y0:
            y0 = y
        elif y > y1:
            y1 = y
        for dx, dy in NEIGHBOURS_8:
            nx, ny = x + dx, y + dy
            if 0 <= nx < w and 0 <= ny < h and below[ny, nx] and not visited[ny, nx]:
                visited[ny, nx] = True
                queue.append((nx, ny))
    return pixels, (x0, y0, x1, y1)


def _extent(bbox: Tuple[int, int, int, int]) -> int:
    x0, y0, x1, y1 = bbox
    return max(x1 - x0 + 1, y1 - y0 + 1)


def grow_regions(
    src: np.ndarray,
    params: GrowParams,
    z: int = 0,
    source: Source = Source.BILATERAL,
    first_id: int = 0,
) -> List[Component]:
    """Row-major scan for dark seeds; grow, then keep regions within bounds.

    Returned components are provisional and numbered from ``first_id`` in
    seed order.
    """
    img = np.asarray(src)
    below = img < params.dark_threshold
    visited = np.zeros(below.shape, dtype=bool)
    h, w = below.shape
    out: List[Component] = []
    for flat in np.flatnonzero(below):
        y, x = divmod(int(flat), w)
        if visited[y, x]:
            continue
        pixels, bbox = grow_from_seed(below, visited, (x, y))
        if _extent(bbox) > params.max_diameter or len(pixels) < params.min_area:
            continue
        out.append(Component(first_id + len(out), z, tuple(pixels), source, Status.PROVISIONAL))
    return out


def merge_overlapping(components: Sequence[Component], first_id: Optional[int] = None) -> List[Component]:
    """Transitively merge components whose pixel sets intersect.

    A merged component keeps the bilateral tag if any member had it. The
    result is ordered by first pixel in row-major order; ids are reassigned
    from ``first_id`` when given, otherwise the lowest member id is kept.
    """
    if not components:
        return []
    zs = {c.z for c in components}
    if len(zs) > 1:
        raise ValueError(f"merge_overlapping needs components from one slice, got z={sorted(zs)}")

    parent = list(range(len(components)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    owner = {}
    for i, c in enumerate(components):
        for p in c.pixels:
            j = owner.setdefault(p, i)
            if j != i:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    groups = {}
    for i in range(len(components)):
        groups.setdefault(find(i), []).append(components[i])

    merged = []
    for members in groups.values():
        if len(members) == 1:
            merged.append(members[0])
            continue
        pixels = set()
        for m in members:
            pixels.update(m.pixels)
        source = Source.BILATERAL if any(m.source == Source.BILATERAL for m in members) else members[0].source
        merged.append(Component(min(m.id for m in members), members[0].z, tuple(pixels), source, members[0].status))

    merged.sort(key=lambda c: (c.pixels[0][1], c.pixels[0][0]))
    if first_id is not None:
        merged = [c.with_(id=first_id + k) for k, c in enumerate(merged)]
    return merged


def detect_slice(
    bilateral: np.ndarray,
    sharpened: np.ndarray,
    p_b: GrowParams,
    p_l: GrowParams,
    z: int = 0,
    first_id: int = 0,
) -> List[Component]:
    """Grow on both filtered versions of a slice and merge the results."""
    b = np.asarray(bilateral)
    s = np.asarray(sharpened)
    if b.shape != s.shape:
        raise ValueError(f"slice shape mismatch: bilateral {b.shape} vs sharpened {s.shape}")
    found = grow_regions(b, p_b, z, Source.BILATERAL)
    found += grow_regions(s, p_l, z, Source.LAPLACIAN, first_id=len(found))
    return merge_overlapping(found, first_id=first_id)


def detect_volume(
    bilateral: Volume,
    sharpened: Volume,
    p_b: GrowParams,
    p_l: GrowParams,
    threads: int = 1,
) -> AnnotationSet:
    if bilateral.shape != sharpened.shape:
        raise ValueError(f"volume shape mismatch: {bilateral.shape} vs {sharpened.shape}")

    def run(z):
        return detect_slice(bilateral.slice(z), sharpened.slice(z), p_b, p_l, z)

    zs = range(bilateral.depth)
    if threads > 1 and bilateral.depth > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_slice = list(pool.map(run, zs))
    else:
        per_slice = [run(z) for z in zs]

    # ids are assigned after collection, in z then seed order
    ann = AnnotationSet(bilateral.width, bilateral.height, bilateral.depth)
    for comps in per_slice:
        for c in comps:
            ann.add(c.with_(id=ann.new_id()))
    return ann
