"""Image containers, grayscale conversion, binary morphology, and PNG I/O.

Conventions used throughout the package:

* arrays are row-major ``(height, width[, channel])`` numpy arrays,
* masks are boolean arrays where ``True`` means "set",
* morphology uses a square (Chebyshev) structuring element and treats
  pixels outside the frame as unset.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import InputError

MASK_THRESHOLD = 128  # grayscale PNG intensity >= this reads as a set mask pixel


@dataclass(frozen=True)
class RgbImage:
    """8-bit RGB image, ``data`` shaped (height, width, 3)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise InputError(f"RGB image must be (H, W, 3), got {self.data.shape}")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise InputError("image dimensions must be >= 1")
        if self.data.dtype != np.uint8:
            raise InputError(f"RGB image must be uint8, got {self.data.dtype}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class GrayImage:
    """8-bit grayscale image, ``data`` shaped (height, width)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        if self.data.ndim != 2:
            raise InputError(f"gray image must be 2-d, got {self.data.shape}")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise InputError("image dimensions must be >= 1")
        if self.data.dtype != np.uint8:
            raise InputError(f"gray image must be uint8, got {self.data.dtype}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class BinaryMask:
    """Boolean mask, ``bits`` shaped (height, width)."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        if self.bits.ndim != 2:
            raise InputError(f"mask must be 2-d, got {self.bits.shape}")
        if self.bits.dtype != np.bool_:
            raise InputError(f"mask must be boolean, got {self.bits.dtype}")

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def count(self) -> int:
        return int(self.bits.sum())


def to_gray(img: RgbImage) -> GrayImage:
    """Convert RGB to luminance: round(0.299 R + 0.587 G + 0.114 B)."""
    rgb = img.data.astype(np.float64)
    lum = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    # floor(x + 0.5) so halves round up regardless of numpy's even-rounding
    gray = np.clip(np.floor(lum + 0.5), 0, 255).astype(np.uint8)
    return GrayImage(gray)


def _square(radius: int) -> np.ndarray:
    return np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)


def erode(mask: BinaryMask, radius: int, border: bool = False) -> BinaryMask:
    """Output set iff every pixel within Chebyshev `radius` is set.

    `border` gives the value assumed outside the frame: False shrinks
    set regions away from the border, True lets them keep touching it
    (the right choice when eroding inside a closing, which must never
    retract lines that end at the frame edge).
    """
    if radius < 1:
        raise InputError("erode radius must be >= 1")
    out = ndimage.binary_erosion(mask.bits, structure=_square(radius),
                                 border_value=int(border))
    return BinaryMask(out)


def dilate(mask: BinaryMask, radius: int) -> BinaryMask:
    """Output set iff any pixel within Chebyshev `radius` is set."""
    if radius < 1:
        raise InputError("dilate radius must be >= 1")
    out = ndimage.binary_dilation(mask.bits, structure=_square(radius), border_value=0)
    return BinaryMask(out)


# Neighbour order for Zhang-Suen: p2..p9 clockwise starting north.
_ZS_OFFSETS = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]


def _zs_subiteration(bits: np.ndarray, first_pass: bool) -> np.ndarray:
    """One Zhang-Suen subiteration; returns the pixels to delete."""
    padded = np.pad(bits, 1, constant_values=False)
    n = [
        padded[1 + dr : padded.shape[0] - 1 + dr, 1 + dc : padded.shape[1] - 1 + dc]
        for dr, dc in _ZS_OFFSETS
    ]
    stack = np.stack(n).astype(np.int8)
    b = stack.sum(axis=0)
    ring = np.concatenate([stack, stack[:1]], axis=0)
    a = ((ring[:-1] == 0) & (ring[1:] == 1)).sum(axis=0)
    p2, p4, p6, p8 = n[0], n[2], n[4], n[6]
    if first_pass:
        cond = ~(p2 & p4 & p6) & ~(p4 & p6 & p8)
    else:
        cond = ~(p2 & p4 & p8) & ~(p2 & p6 & p8)
    return bits & (a == 1) & (b >= 2) & (b <= 6) & cond


def thin(mask: BinaryMask) -> BinaryMask:
    """Zhang-Suen thinning to a 1-pixel-wide 8-connected skeleton.

    Iterates the two subiterations until a fixpoint; preserves the
    connectivity of every 8-connected component and never adds pixels.
    """
    bits = mask.bits.copy()
    while True:
        removed = _zs_subiteration(bits, first_pass=True)
        bits &= ~removed
        removed2 = _zs_subiteration(bits, first_pass=False)
        bits &= ~removed2
        if not removed.any() and not removed2.any():
            return BinaryMask(bits)


def apply_mask(img: GrayImage, mask: BinaryMask, fill: int) -> GrayImage:
    """Replace pixels where the mask is clear with `fill`."""
    if (img.height, img.width) != (mask.height, mask.width):
        raise InputError(
            f"mask {mask.bits.shape} does not match image {img.data.shape}"
        )
    out = np.where(mask.bits, img.data, np.uint8(fill))
    return GrayImage(out.astype(np.uint8))


# ---------------------------------------------------------------------------
# PNG I/O


def read_rgb(path: str | Path) -> RgbImage:
    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
            return RgbImage(np.asarray(rgb, dtype=np.uint8))
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read RGB image {path}: {exc}") from exc


def read_gray(path: str | Path) -> GrayImage:
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "I;16", "1"):
                if im.mode in ("RGB", "RGBA", "P", "LA"):
                    raise InputError(
                        f"{path} is not single-channel grayscale (mode {im.mode})"
                    )
            gray = im.convert("L")
            return GrayImage(np.asarray(gray, dtype=np.uint8))
    except InputError:
        raise
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read grayscale image {path}: {exc}") from exc


def read_mask(path: str | Path, threshold: int = MASK_THRESHOLD) -> BinaryMask:
    gray = read_gray(path)
    return BinaryMask(gray.data >= threshold)


def write_gray(img: GrayImage, path: str | Path) -> None:
    Image.fromarray(img.data, mode="L").save(path, format="PNG")


def write_rgb(img: RgbImage, path: str | Path) -> None:
    Image.fromarray(img.data, mode="RGB").save(path, format="PNG")


def write_mask(mask: BinaryMask, path: str | Path) -> None:
    write_gray(GrayImage(np.where(mask.bits, 255, 0).astype(np.uint8)), path)
