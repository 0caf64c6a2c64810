"""Volumetric image model and the on-disk stack format.

A stack on disk is a directory holding ``stack.json`` plus one binary PGM
(P5, maxval 255) per slice. Voxels live in memory as a ``(depth, height,
width)`` uint8 array, so x is the fastest axis and slices are contiguous.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np

MANIFEST_NAME = "stack.json"

PathLike = Union[str, os.PathLike]
Resolution = Tuple[float, float, float]


class StackError(ValueError):
    """Raised for malformed manifests or slice rasters."""


class Volume:
    """Immutable z-ordered stack of 8-bit grayscale slices."""

    __slots__ = ("_voxels", "resolution")

    def __init__(self, voxels: np.ndarray, resolution: Optional[Resolution] = None):
        arr = np.asarray(voxels)
        if arr.ndim != 3:
            raise ValueError(f"voxels must be 3-D (depth, height, width), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"width, height and depth must all be >= 1, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("voxel intensities must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = np.array(arr, dtype=np.uint8, order="C", copy=True)
        arr.setflags(write=False)
        self._voxels = arr
        self.resolution = tuple(float(r) for r in resolution) if resolution is not None else None

    @classmethod
    def from_slices(cls, slices: Sequence[np.ndarray], resolution: Optional[Resolution] = None) -> "Volume":
        if len(slices) == 0:
            raise ValueError("a volume needs at least one slice")
        return cls(np.stack([np.asarray(s) for s in slices]), resolution)

    @property
    def voxels(self) -> np.ndarray:
        return self._voxels

    @property
    def width(self) -> int:
        return self._voxels.shape[2]

    @property
    def height(self) -> int:
        return self._voxels.shape[1]

    @property
    def depth(self) -> int:
        return self._voxels.shape[0]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self._voxels.shape

    def voxel(self, x: int, y: int, z: int) -> int:
        if not (0 <= x < self.width and 0 <= y < self.height and 0 <= z < self.depth):
            raise IndexError(f"voxel ({x}, {y}, {z}) outside {self.width}x{self.height}x{self.depth}")
        return int(self._voxels[z, y, x])

    def slice(self, z: int) -> np.ndarray:
        """Read-only ``(height, width)`` view of slice ``z``."""
        if not 0 <= z < self.depth:
            raise IndexError(f"slice {z} outside depth {self.depth}")
        return self._voxels[z]

    def __iter__(self):
        return iter(self._voxels)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Volume):
            return NotImplemented
        return self.resolution == other.resolution and np.array_equal(self._voxels, other._voxels)

    def __repr__(self) -> str:
        return f"Volume({self.width}x{self.height}x{self.depth}, resolution={self.resolution})"


@dataclass(frozen=True)
class StackManifest:
    width: int
    height: int
    depth: int
    slice_files: Tuple[str, ...]
    resolution: Optional[Resolution] = None

    def __post_init__(self):
        if min(self.width, self.height, self.depth) < 1:
            raise StackError("manifest dimensions must be >= 1")
        if len(self.slice_files) != self.depth:
            raise StackError(
                f"manifest inconsistency: depth {self.depth} but {len(self.slice_files)} slice files"
            )
        if len(set(self.slice_files)) != len(self.slice_files):
            raise StackError("manifest inconsistency: duplicate slice files")

    def to_json(self) -> dict:
        out = {
            "width": self.width,
            "height": self.height,
            "depth": self.depth,
            "slice_files": list(self.slice_files),
        }
        if self.resolution is not None:
            out["resolution_nm"] = list(self.resolution)
        return out

    @classmethod
    def from_json(cls, data: dict) -> "StackManifest":
        try:
            width, height, depth = (data[k] for k in ("width", "height", "depth"))
            files = data["slice_files"]
        except KeyError as exc:
            raise StackError(f"manifest missing key {exc.args[0]!r}") from None
        for key, val in (("width", width), ("height", height), ("depth", depth)):
            if not isinstance(val, int) or isinstance(val, bool):
                raise StackError(f"manifest {key} must be an integer")
        if not isinstance(files, list) or not all(isinstance(f, str) for f in files):
            raise StackError("manifest slice_files must be a list of strings")
        res = data.get("resolution_nm")
        if res is not None:
            if not isinstance(res, list) or len(res) != 3:
                raise StackError("manifest resolution_nm must be [x, y, z]")
            res = tuple(float(r) for r in res)
        return cls(width, height, depth, tuple(files), res)


def write_pgm(path: PathLike, pixels: np.ndarray) -> None:
    arr = np.asarray(pixels)
    if arr.ndim != 2 or arr.dtype != np.uint8:
        raise ValueError("PGM slices must be 2-D uint8 arrays")
    height, width = arr.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (width, height))
        fh.write(np.ascontiguousarray(arr).tobytes())


def _header_tokens(data: bytes, count: int) -> Tuple[list, int]:
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise StackError("truncated PGM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    if pos >= n or not data[pos : pos + 1].isspace():
        raise StackError("truncated PGM header")
    return tokens, pos + 1


def read_pgm(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, offset = _header_tokens(data, 4)
    if tokens[0] != b"P5":
        raise StackError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise StackError(f"{path}: malformed PGM header") from None
    if maxval > 255 or maxval < 1:
        raise StackError(f"{path}: not an 8-bit raster (maxval {maxval})")
    body = data[offset:]
    if len(body) != width * height:
        raise StackError(f"{path}: expected {width * height} raster bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width).copy()


def load_stack(manifest_path: PathLike) -> Volume:
    """Load a stack from its ``stack.json`` (or the directory containing it)."""
    path = Path(manifest_path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise StackError(f"{path}: invalid JSON ({exc})") from None
    manifest = StackManifest.from_json(raw)
    slices = []
    for name in manifest.slice_files:
        slice_path = path.parent / name
        if not slice_path.exists():
            raise FileNotFoundError(f"slice file not found: {slice_path}")
        pixels = read_pgm(slice_path)
        if pixels.shape != (manifest.height, manifest.width):
            raise StackError(
                f"{slice_path}: raster is {pixels.shape[1]}x{pixels.shape[0]}, "
                f"manifest says {manifest.width}x{manifest.height}"
            )
        slices.append(pixels)
    return Volume.from_slices(slices, manifest.resolution)


def save_stack(volume: Volume, out_dir: PathLike) -> StackManifest:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digits = max(4, len(str(volume.depth - 1)))
    files = tuple(f"slice_{z:0{digits}d}.pgm" for z in range(volume.depth))
    for z, name in enumerate(files):
        write_pgm(out / name, volume.slice(z))
    manifest = StackManifest(volume.width, volume.height, volume.depth, files, volume.resolution)
    (out / MANIFEST_NAME).write_text(json.dumps(manifest.to_json(), indent=2) + "\n", encoding="utf-8")
    return manifest
