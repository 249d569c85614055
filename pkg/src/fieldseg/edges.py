"""Edge-probability maps: ingestion, fusion, and a hysteresis edge detector.

External detector output (one or more probability maps) is loaded from
grayscale PNGs and fused by per-pixel averaging.  The built-in detector is
a classic Gaussian / Sobel / non-maximum-suppression / hysteresis chain.
It serves two roles: a global fallback when no external maps are supplied,
and the per-polygon local detector, where its thresholds are rescaled by
the polygon's mean intensity.

Gradient magnitudes are expressed relative to the full intensity range:
the image is scaled to [0, 1] and magnitudes are raw Sobel responses, so a
full black-to-white step yields a magnitude of about 4.  This keeps the
threshold scale commensurate with mean-intensity multiples, which is what
the local thresholding relies on.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import InputError
from .raster import BinaryMask, GrayImage, read_gray, write_gray

DEFAULT_SIGMA = 1.4
DEFAULT_K_LOW = 0.66
DEFAULT_K_HIGH = 1.33

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = _SOBEL_X.T


@dataclass(frozen=True)
class EdgeMap:
    """Per-pixel edge probability grid with values in [0, 1]."""

    prob: np.ndarray

    def __post_init__(self) -> None:
        if self.prob.ndim != 2:
            raise InputError(f"edge map must be 2-d, got {self.prob.shape}")
        if self.prob.shape[0] < 1 or self.prob.shape[1] < 1:
            raise InputError("edge map dimensions must be >= 1")
        if self.prob.min() < 0.0 or self.prob.max() > 1.0:
            raise InputError("edge probabilities must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.prob.shape[0]

    @property
    def width(self) -> int:
        return self.prob.shape[1]


@dataclass(frozen=True)
class HysteresisParams:
    """Thresholds for hysteresis linking plus the smoothing scale."""

    low: float
    high: float
    gaussian_sigma: float = DEFAULT_SIGMA

    def __post_init__(self) -> None:
        if not (0.0 <= self.low <= self.high <= 1.0):
            raise InputError(
                f"need 0 <= low <= high <= 1, got low={self.low} high={self.high}"
            )
        if self.gaussian_sigma <= 0:
            raise InputError("gaussian_sigma must be > 0")


def load_edge_map(path: str | Path) -> EdgeMap:
    """Read an 8-bit grayscale PNG as probabilities (intensity / 255)."""
    gray = read_gray(path)
    return EdgeMap(gray.data.astype(np.float64) / 255.0)


def save_edge_map(emap: EdgeMap, path: str | Path) -> None:
    """Write probabilities as an 8-bit grayscale PNG (round(255 * prob))."""
    data = np.floor(emap.prob * 255.0 + 0.5).astype(np.uint8)
    write_gray(GrayImage(data), path)


def fuse_edge_maps(maps: Sequence[EdgeMap]) -> EdgeMap:
    """Per-pixel arithmetic mean of several same-sized maps."""
    if not maps:
        raise InputError("cannot fuse an empty list of edge maps")
    shape = maps[0].prob.shape
    for m in maps[1:]:
        if m.prob.shape != shape:
            raise InputError(f"edge map shape {m.prob.shape} != {shape}")
    return EdgeMap(np.mean([m.prob for m in maps], axis=0))


def binarize_edges(emap: EdgeMap, threshold: float) -> BinaryMask:
    """Pixels with probability >= threshold become set."""
    return BinaryMask(emap.prob >= threshold)


def smoothed_gradients(arr: np.ndarray, sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """Sobel gradients (gx across columns, gy across rows) after Gaussian blur."""
    smoothed = ndimage.gaussian_filter(np.asarray(arr, dtype=np.float64), sigma)
    gx = ndimage.correlate(smoothed, _SOBEL_X, mode="nearest")
    gy = ndimage.correlate(smoothed, _SOBEL_Y, mode="nearest")
    return gx, gy


def gradient_field(img: GrayImage, sigma: float = DEFAULT_SIGMA) -> tuple[np.ndarray, np.ndarray]:
    """Smoothed gradient (magnitude, angle) of an image.

    Magnitude is the Sobel response of the [0, 1]-scaled image; angle is
    atan2(gy, gx) in radians.
    """
    gx, gy = smoothed_gradients(img.data / 255.0, sigma)
    return np.hypot(gx, gy), np.arctan2(gy, gx)


def _nonmax_suppress(mag: np.ndarray, angle: np.ndarray) -> np.ndarray:
    """Keep pixels that are gradient-direction maxima.

    Direction is quantized to 0/45/90/135 degrees.  Ties are broken by
    requiring a strict win against the "behind" neighbour and >= against
    the "ahead" one, so a two-pixel plateau keeps exactly one pixel.
    """
    h, w = mag.shape
    padded = np.pad(mag, 1, constant_values=0.0)
    # quantize orientation (mod 180 deg) into 4 sectors
    sector = (np.floor((np.mod(angle, np.pi) + np.pi / 8) / (np.pi / 4)).astype(int)) % 4
    # sector 0: E-W, 1: NE-SW diagonal, 2: N-S, 3: NW-SE diagonal
    offsets = {0: (0, 1), 1: (-1, 1), 2: (1, 0), 3: (1, 1)}
    keep = np.zeros_like(mag, dtype=bool)
    center = padded[1 : h + 1, 1 : w + 1]
    for s, (dr, dc) in offsets.items():
        ahead = padded[1 + dr : h + 1 + dr, 1 + dc : w + 1 + dc]
        behind = padded[1 - dr : h + 1 - dr, 1 - dc : w + 1 - dc]
        sel = (sector == s) & (center > behind) & (center >= ahead)
        keep |= sel
    return keep & (mag > 0)


def canny(img: GrayImage, params: HysteresisParams) -> EdgeMap:
    """Gaussian smoothing, Sobel, non-maximum suppression, hysteresis.

    Pixels with suppressed magnitude >= high seed edges; pixels >= low that
    8-connect to a seed are retained.  The result is binary-valued (1.0 on
    edge pixels).
    """
    mag, angle = gradient_field(img, params.gaussian_sigma)
    keep = _nonmax_suppress(mag, angle)
    mag = np.where(keep, mag, 0.0)

    strong = keep & (mag >= params.high)
    weak = keep & (mag >= params.low)
    if not strong.any():
        return EdgeMap(np.zeros_like(mag))
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    good = np.unique(labels[strong])
    retained = weak & np.isin(labels, good[good > 0])
    return EdgeMap(retained.astype(np.float64))


def local_hysteresis_params(
    img: GrayImage,
    region: BinaryMask,
    k_low: float = DEFAULT_K_LOW,
    k_high: float = DEFAULT_K_HIGH,
    gaussian_sigma: float = DEFAULT_SIGMA,
) -> HysteresisParams:
    """Thresholds scaled by the mean intensity over the region's set pixels.

    low = clamp(k_low * mu, 0, 1) and high = clamp(k_high * mu, 0, 1)
    where mu is the region mean normalized to [0, 1].
    """
    if not (0 < k_low < k_high):
        raise InputError(f"need 0 < k_low < k_high, got {k_low}, {k_high}")
    if (img.height, img.width) != (region.height, region.width):
        raise InputError("region mask does not match image dimensions")
    if not region.bits.any():
        raise InputError("region mask has no set pixels")
    mu = float(img.data[region.bits].mean()) / 255.0
    low = min(max(k_low * mu, 0.0), 1.0)
    high = min(max(k_high * mu, 0.0), 1.0)
    return HysteresisParams(low=low, high=high, gaussian_sigma=gaussian_sigma)
