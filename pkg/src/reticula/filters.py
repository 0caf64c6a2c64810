"""Per-slice edge-preserving smoothing and Laplacian sharpening."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .volume import Volume

# 8-neighbour Laplacian: center +8, neighbours -1
LAPLACIAN_KERNEL = np.array([[-1, -1, -1], [-1, 8, -1], [-1, -1, -1]], dtype=np.int32)


@dataclass(frozen=True)
class BilateralParams:
    sigma_s: float = 2.0
    sigma_r: float = 25.0
    radius: Optional[int] = None

    def __post_init__(self):
        if not self.sigma_s > 0:
            raise ValueError(f"sigma_s must be > 0, got {self.sigma_s}")
        if not self.sigma_r > 0:
            raise ValueError(f"sigma_r must be > 0, got {self.sigma_r}")
        if self.radius is not None and (int(self.radius) != self.radius or self.radius < 1):
            raise ValueError(f"radius must be an integer >= 1, got {self.radius}")

    @property
    def window_radius(self) -> int:
        """Half-width of the square neighbourhood; defaults to ceil(3 * sigma_s)."""
        if self.radius is not None:
            return int(self.radius)
        return max(1, math.ceil(3 * self.sigma_s))


def round_clamp(values: np.ndarray) -> np.ndarray:
    """Round half away from zero, then clamp into uint8 range."""
    rounded = np.sign(values) * np.floor(np.abs(values) + 0.5)
    return np.clip(rounded, 0, 255).astype(np.uint8)


def bilateral_filter_slice(src: np.ndarray, params: BilateralParams) -> np.ndarray:
    """Exact bilateral filter over a square window clipped at the borders.

    Each output pixel is the normalised sum over its window of
    spatial weight * range weight * neighbour intensity. Off-image
    neighbours simply do not contribute, so the normaliser shrinks
    near the borders.
    """
    img = np.asarray(src)
    if img.ndim != 2 or min(img.shape) < 1:
        raise ValueError("bilateral_filter_slice expects a non-empty 2-D slice")
    r = params.window_radius
    h, w = img.shape
    center = img.astype(np.float64)
    padded = np.zeros((h + 2 * r, w + 2 * r), dtype=np.float64)
    padded[r : r + h, r : r + w] = center
    inside = np.zeros_like(padded)
    inside[r : r + h, r : r + w] = 1.0

    two_ss = 2.0 * params.sigma_s ** 2
    two_sr = 2.0 * params.sigma_r ** 2
    num = np.zeros((h, w), dtype=np.float64)
    den = np.zeros((h, w), dtype=np.float64)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            spatial = math.exp(-(dx * dx + dy * dy) / two_ss)
            nb = padded[r + dy : r + dy + h, r + dx : r + dx + w]
            valid = inside[r + dy : r + dy + h, r + dx : r + dx + w]
            diff = center - nb
            weight = spatial * np.exp(-(diff * diff) / two_sr) * valid
            num += weight * nb
            den += weight
    return round_clamp(num / den)


def laplacian_sharpen_slice(src: np.ndarray) -> np.ndarray:
    """Add the 3x3 Laplacian response to the slice (replicate border, clamped).

    Pixels brighter than their neighbourhood get brighter, darker ones get
    darker, and flat regions are left untouched.
    """
    img = np.asarray(src)
    if img.ndim != 2 or min(img.shape) < 1:
        raise ValueError("laplacian_sharpen_slice expects a non-empty 2-D slice")
    h, w = img.shape
    padded = np.pad(img.astype(np.int32), 1, mode="edge")
    lap = np.zeros((h, w), dtype=np.int32)
    for dy in range(3):
        for dx in range(3):
            k = LAPLACIAN_KERNEL[dy, dx]
            lap += k * padded[dy : dy + h, dx : dx + w]
    return np.clip(img.astype(np.int32) + lap, 0, 255).astype(np.uint8)


def _map_slices(fn, slices, threads: int):
    if threads <= 1 or len(slices) <= 1:
        return [fn(s) for s in slices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, slices))


def filter_volume(
    volume: Volume,
    params: BilateralParams,
    with_sharpen: bool = True,
    threads: int = 1,
) -> Tuple[Volume, Optional[Volume]]:
    """Bilateral-filter every slice, then optionally sharpen the filtered slices.

    Filtering is strictly 2-D; slice ``z`` of the output depends only on
    slice ``z`` of the input.
    """
    slices = [volume.slice(z) for z in range(volume.depth)]
    smoothed = _map_slices(lambda s: bilateral_filter_slice(s, params), slices, threads)
    bilateral = Volume.from_slices(smoothed, volume.resolution)
    if not with_sharpen:
        return bilateral, None
    sharpened = _map_slices(laplacian_sharpen_slice, smoothed, threads)
    return bilateral, Volume.from_slices(sharpened, volume.resolution)
