"""Cross-slice verification of detections and linking into long objects.

Every provisional detection is judged against a frozen snapshot of the
detections: it is confirmed when a detection sits at roughly the same xy
position on an adjacent slice, rescued when a relaxed growth finds a dark
region there instead, and deleted otherwise. Components on the first and
last slice only have one neighbour and are never deleted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .annotations import AnnotationSet, Component, Source, Status, TrackedObject
from .detect import GrowParams, _extent, grow_from_seed
from .volume import Volume


@dataclass(frozen=True)
class TrackParams:
    xy_tolerance: float = 3.0
    rescue_threshold_delta: int = 20
    rescue_max_diameter: Optional[int] = None

    def __post_init__(self):
        if self.xy_tolerance < 0:
            raise ValueError(f"xy_tolerance must be >= 0, got {self.xy_tolerance}")
        if self.rescue_threshold_delta < 0:
            raise ValueError(f"rescue_threshold_delta must be >= 0, got {self.rescue_threshold_delta}")
        if self.rescue_max_diameter is not None and self.rescue_max_diameter < 1:
            raise ValueError(f"rescue_max_diameter must be >= 1, got {self.rescue_max_diameter}")

    def rescue_diameter(self, base: GrowParams) -> int:
        if self.rescue_max_diameter is None:
            return base.max_diameter + 2
        return self.rescue_max_diameter


def _nearest(candidates: Sequence[Component], c: Component, tol: float) -> Optional[Component]:
    best = None
    best_key = None
    for other in candidates:
        if other.status == Status.DELETED:
            continue
        d = c.distance_to(other)
        if d <= tol:
            key = (d, other.id)
            if best_key is None or key < best_key:
                best, best_key = other, key
    return best


def match_in_adjacent(annotations: AnnotationSet, c: Component, dz: int, tol: float) -> Optional[Component]:
    """Nearest non-deleted component on slice ``c.z + dz`` within ``tol`` px."""
    if dz not in (-1, 1):
        raise ValueError("dz must be +1 or -1")
    return _nearest(annotations.on_slice(c.z + dz), c, tol)


def rescue_grow(
    src: np.ndarray,
    seed_xy: Tuple[float, float],
    base: GrowParams,
    tp: TrackParams,
    z: int = 0,
    component_id: int = -1,
) -> Optional[Component]:
    """Relaxed growth near ``seed_xy``; returns a rescue component or None.

    The seed is the pixel closest to ``seed_xy`` (ties in row-major order)
    that is below the relaxed threshold and within ``xy_tolerance``. The grown
    region must fit the relaxed diameter bound, meet ``min_area``, and keep
    its centroid within ``xy_tolerance`` of ``seed_xy``.
    """
    img = np.asarray(src)
    h, w = img.shape
    sx, sy = seed_xy
    if not (0 <= sx <= w - 1 and 0 <= sy <= h - 1):
        raise ValueError(f"seed {seed_xy} outside {w}x{h} slice")
    threshold = base.dark_threshold + tp.rescue_threshold_delta
    below = img < threshold

    tol = tp.xy_tolerance
    ys, xs = np.nonzero(below[
        max(0, math.floor(sy - tol)) : min(h, math.ceil(sy + tol) + 1),
        max(0, math.floor(sx - tol)) : min(w, math.ceil(sx + tol) + 1),
    ])
    if len(xs) == 0:
        return None
    xs = xs + max(0, math.floor(sx - tol))
    ys = ys + max(0, math.floor(sy - tol))
    d2 = (xs - sx) ** 2 + (ys - sy) ** 2
    ok = d2 <= tol * tol
    if not ok.any():
        return None
    # np.nonzero is row-major, so argmin breaks ties in row-major order
    d2 = np.where(ok, d2, np.inf)
    k = int(np.argmin(d2))
    seed = (int(xs[k]), int(ys[k]))

    visited = np.zeros(below.shape, dtype=bool)
    pixels, bbox = grow_from_seed(below, visited, seed)
    if _extent(bbox) > tp.rescue_diameter(base) or len(pixels) < base.min_area:
        return None
    comp = Component(component_id, z, tuple(pixels), Source.RESCUE, Status.CONFIRMED)
    if math.hypot(comp.centroid[0] - sx, comp.centroid[1] - sy) > tol:
        return None
    return comp


def _overlaps(comp: Component, others: Sequence[Component]) -> bool:
    pix = comp.pixel_set
    return any(not pix.isdisjoint(o.pixels) for o in others)


def link_tracks(annotations: AnnotationSet, tol: float) -> Tuple[AnnotationSet, List[TrackedObject]]:
    """Chain confirmed components slice by slice into tracked objects.

    Chains start at unclaimed components (z ascending, id ascending) and
    extend to the nearest unclaimed confirmed component on the next slice.
    Chains shorter than two slices are not reported.
    """
    confirmed: Dict[int, List[Component]] = {
        z: sorted((c for c in annotations.on_slice(z) if c.status == Status.CONFIRMED), key=lambda c: c.id)
        for z in range(annotations.depth)
    }
    claimed = set()
    chains = []
    for z in range(annotations.depth):
        for start in confirmed[z]:
            if start.id in claimed:
                continue
            claimed.add(start.id)
            chain = [start]
            cur = start
            while cur.z + 1 < annotations.depth:
                free = [c for c in confirmed[cur.z + 1] if c.id not in claimed]
                nxt = _nearest(free, cur, tol)
                if nxt is None:
                    break
                claimed.add(nxt.id)
                chain.append(nxt)
                cur = nxt
            if len(chain) >= 2:
                chains.append(chain)

    track_of = {}
    tracks = []
    for track_id, chain in enumerate(chains):
        tracks.append(TrackedObject(track_id, tuple((c.z, c.id) for c in chain)))
        for c in chain:
            track_of[c.id] = track_id

    out = AnnotationSet(annotations.width, annotations.height, annotations.depth)
    for c in annotations:
        out.add(c.with_(track_id=track_of.get(c.id)))
    out.next_id = max(out.next_id, annotations.next_id)
    return out, tracks


def track_volume(
    bilateral: Volume,
    annotations: AnnotationSet,
    grow: GrowParams,
    tp: TrackParams,
) -> Tuple[AnnotationSet, List[TrackedObject]]:
    """Confirm, rescue or delete every provisional component, then link tracks.

    Decisions read only the incoming annotations, so the outcome does not
    depend on slice order and a second run over the output changes nothing.
    """
    if (annotations.width, annotations.height, annotations.depth) != (
        bilateral.width,
        bilateral.height,
        bilateral.depth,
    ):
        raise ValueError(
            f"annotations are for a {annotations.width}x{annotations.height}x{annotations.depth} volume, "
            f"bilateral stack is {bilateral.width}x{bilateral.height}x{bilateral.depth}"
        )
    depth = bilateral.depth
    snapshot = annotations
    tol = tp.xy_tolerance

    # decision phase: read-only over the snapshot
    decisions: Dict[int, Status] = {}
    rescues: List[Component] = []  # in z-then-id order of the component that asked
    for z in range(depth):
        for c in sorted(snapshot.on_slice(z), key=lambda c: c.id):
            if c.status != Status.PROVISIONAL:
                continue
            if any(match_in_adjacent(snapshot, c, dz, tol) is not None for dz in (-1, 1)):
                decisions[c.id] = Status.CONFIRMED
                continue
            found = []
            for dz in (-1, 1):
                nz = z + dz
                if not 0 <= nz < depth:
                    continue
                r = rescue_grow(bilateral.slice(nz), c.centroid, grow, tp, z=nz)
                # a relaxed region running into an existing detection is not new evidence
                if r is not None and not _overlaps(r, snapshot.on_slice(nz)):
                    found.append(r)
            if found:
                decisions[c.id] = Status.CONFIRMED
                rescues.extend(found)
            elif z == 0 or z == depth - 1:
                decisions[c.id] = Status.CONFIRMED
            else:
                decisions[c.id] = Status.DELETED

    # commit phase: single writer, deterministic order
    out = AnnotationSet(annotations.width, annotations.height, annotations.depth)
    for c in snapshot:
        out.add(c.with_(status=decisions.get(c.id, c.status)))
    out.next_id = max(out.next_id, snapshot.next_id)
    committed: Dict[int, List[Component]] = {}
    for r in rescues:
        # relaxed regions on one slice are whole connected components: equal or disjoint
        if any(r.pixels == prev.pixels for prev in committed.get(r.z, [])):
            continue
        added = out.add(r.with_(id=out.new_id()))
        committed.setdefault(r.z, []).append(added)

    return link_tracks(out, tol)
