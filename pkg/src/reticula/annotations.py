"""Annotation data model shared by detection, tracking and evaluation.

Also owns the ``annotations.json`` wire format.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

Pixel = Tuple[int, int]


class Source(str, Enum):
    BILATERAL = "bilateral"
    LAPLACIAN = "laplacian"
    RESCUE = "rescue"
    TRUTH = "truth"


class Status(str, Enum):
    PROVISIONAL = "provisional"
    CONFIRMED = "confirmed"
    DELETED = "deleted"


@dataclass(frozen=True)
class Component:
    """One annotated cross-section on a single slice.

    ``pixels`` holds (x, y) pairs in row-major order (y, then x).
    """

    id: int
    z: int
    pixels: Tuple[Pixel, ...]
    source: Source = Source.BILATERAL
    status: Status = Status.PROVISIONAL
    track_id: Optional[int] = None
    centroid: Tuple[float, float] = field(init=False, compare=False)
    bbox: Tuple[int, int, int, int] = field(init=False, compare=False)

    def __post_init__(self):
        if not self.pixels:
            raise ValueError("a component needs at least one pixel")
        pix = tuple(sorted(((int(x), int(y)) for x, y in self.pixels), key=lambda p: (p[1], p[0])))
        object.__setattr__(self, "pixels", pix)
        object.__setattr__(self, "source", Source(self.source))
        object.__setattr__(self, "status", Status(self.status))
        n = len(pix)
        xs = [p[0] for p in pix]
        ys = [p[1] for p in pix]
        object.__setattr__(self, "centroid", (sum(xs) / n, sum(ys) / n))
        object.__setattr__(self, "bbox", (min(xs), min(ys), max(xs), max(ys)))

    @property
    def area(self) -> int:
        return len(self.pixels)

    @property
    def extent(self) -> int:
        """Largest bounding-box side, in pixels."""
        x0, y0, x1, y1 = self.bbox
        return max(x1 - x0 + 1, y1 - y0 + 1)

    @property
    def pixel_set(self) -> frozenset:
        return frozenset(self.pixels)

    def distance_to(self, other: "Component") -> float:
        return ((self.centroid[0] - other.centroid[0]) ** 2 + (self.centroid[1] - other.centroid[1]) ** 2) ** 0.5

    def with_(self, **changes) -> "Component":
        return replace(self, **changes)


@dataclass(frozen=True)
class TrackedObject:
    track_id: int
    members: Tuple[Tuple[int, int], ...]  # (z, component id), consecutive z

    def __post_init__(self):
        if len(self.members) < 2:
            raise ValueError("a tracked object spans at least two slices")
        zs = [z for z, _ in self.members]
        if any(b - a != 1 for a, b in zip(zs, zs[1:])):
            raise ValueError(f"track members must be on consecutive slices, got z={zs}")


class AnnotationSet:
    """Components indexed by slice, with a volume-wide id counter."""

    def __init__(self, width: int, height: int, depth: int, components: Iterable[Component] = ()):
        if min(width, height, depth) < 1:
            raise ValueError("annotation volume dimensions must be >= 1")
        self.width = width
        self.height = height
        self.depth = depth
        self._by_z: Dict[int, List[Component]] = {z: [] for z in range(depth)}
        self._ids: set = set()
        self.next_id = 0
        for c in components:
            self.add(c)

    def add(self, component: Component) -> Component:
        if not 0 <= component.z < self.depth:
            raise ValueError(f"component z={component.z} outside depth {self.depth}")
        if component.id in self._ids:
            raise ValueError(f"duplicate component id {component.id}")
        self._ids.add(component.id)
        self._by_z[component.z].append(component)
        self.next_id = max(self.next_id, component.id + 1)
        return component

    def new_id(self) -> int:
        nid = self.next_id
        self.next_id += 1
        return nid

    def on_slice(self, z: int) -> List[Component]:
        if not 0 <= z < self.depth:
            return []
        return list(self._by_z[z])

    def __iter__(self) -> Iterator[Component]:
        for z in range(self.depth):
            yield from self._by_z[z]

    def __len__(self) -> int:
        return len(self._ids)

    def get(self, component_id: int) -> Component:
        for c in self:
            if c.id == component_id:
                return c
        raise KeyError(component_id)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return (self.width, self.height, self.depth)

    def copy(self) -> "AnnotationSet":
        out = AnnotationSet(self.width, self.height, self.depth, self)
        out.next_id = self.next_id
        return out


def to_json(annotations: AnnotationSet, tracks: Sequence[TrackedObject] = ()) -> dict:
    components = []
    for c in annotations:
        if c.status == Status.DELETED:
            continue
        entry = {
            "id": c.id,
            "z": c.z,
            "source": c.source.value,
            "status": c.status.value,
        }
        if c.track_id is not None:
            entry["track_id"] = c.track_id
        entry["centroid"] = [c.centroid[0], c.centroid[1]]
        entry["pixels"] = [[x, y] for x, y in c.pixels]
        components.append(entry)
    return {
        "volume": {"width": annotations.width, "height": annotations.height, "depth": annotations.depth},
        "components": components,
        "tracks": [{"track_id": t.track_id, "members": [[z, cid] for z, cid in t.members]} for t in tracks],
    }


def from_json(data: dict) -> Tuple[AnnotationSet, List[TrackedObject]]:
    try:
        vol = data["volume"]
        ann = AnnotationSet(int(vol["width"]), int(vol["height"]), int(vol["depth"]))
        for entry in data.get("components", []):
            ann.add(
                Component(
                    id=int(entry["id"]),
                    z=int(entry["z"]),
                    pixels=tuple((int(x), int(y)) for x, y in entry["pixels"]),
                    source=Source(entry["source"]),
                    status=Status(entry["status"]),
                    track_id=entry.get("track_id"),
                )
            )
        tracks = [
            TrackedObject(int(t["track_id"]), tuple((int(z), int(cid)) for z, cid in t["members"]))
            for t in data.get("tracks", [])
        ]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed annotations document: {exc!r}") from None
    return ann, tracks


def save_annotations(
    path: Union[str, os.PathLike], annotations: AnnotationSet, tracks: Sequence[TrackedObject] = ()
) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(to_json(annotations, tracks)) + "\n", encoding="utf-8")


def load_annotations(path: Union[str, os.PathLike]) -> Tuple[AnnotationSet, List[TrackedObject]]:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"annotations file not found: {p}")
    return from_json(json.loads(p.read_text(encoding="utf-8")))
