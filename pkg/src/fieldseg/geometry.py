"""Pixel-grid geometry: tracing, hulls, chain metrics, parcels, chamfer fields.

Contours are closed chains of pixel coordinates walked around the outside
of a 4-connected region with the Moore neighbourhood.  One-pixel-wide
necks and tips are legal: the chain may revisit a pixel (doubling back at
a tip), it only never repeats the same pixel twice in a row.

Two kinds of area appear here and they are not interchangeable.  Region
area is a pixel count.  Hull area is the shoelace area of a polygon over
pixel *corner* points (each pixel contributes its four corners at
r +/- 0.5, c +/- 0.5), so a filled 10x10 square has hull area 100 and the
hull of a single pixel is the unit square, not a degenerate point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .edges import EdgeMap, smoothed_gradients
from .errors import InputError
from .raster import BinaryMask

_SQRT2 = math.sqrt(2.0)

# Moore neighbourhood in clockwise order, starting north, image axes (row down).
_MOORE = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))
_MOORE_INDEX = {off: i for i, off in enumerate(_MOORE)}

PARCEL_STAGES = ("extracted", "split_mincut", "split_lcd")


@dataclass(frozen=True)
class Contour:
    """Closed boundary chain; the wrap edge last->first is implicit."""

    points: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if len(self.points) < 3:
            raise InputError(f"contour needs >= 3 points, got {len(self.points)}")
        n = len(self.points)
        for k in range(n):
            r0, c0 = self.points[k]
            r1, c1 = self.points[(k + 1) % n]
            if max(abs(r1 - r0), abs(c1 - c0)) != 1:
                raise InputError(
                    f"points {k} and {(k + 1) % n} are not 8-adjacent distinct pixels"
                )

    def __len__(self) -> int:
        return len(self.points)

    def as_array(self) -> np.ndarray:
        return np.array(self.points, dtype=np.int64)

    def translated(self, dr: int, dc: int) -> "Contour":
        return Contour(tuple((r + dr, c + dc) for r, c in self.points))


@dataclass(frozen=True)
class Parcel:
    """A candidate field: an outer contour plus its filled region.

    The contour lives in image coordinates.  The mask is cropped to the
    parcel's bounding box to keep memory proportional to the parcel, with
    bbox_origin giving the image position of mask[0, 0].  The mask is the
    filled interior of the contour, possibly minus pixels belonging to
    other parcels nested inside a hole (parcels never overlap) or falling
    outside a cropland mask.
    """

    parcel_id: str
    contour: Contour
    mask: BinaryMask
    bbox_origin: tuple[int, int]
    stage: str = "extracted"

    def __post_init__(self) -> None:
        if self.stage not in PARCEL_STAGES:
            raise InputError(f"unknown parcel stage {self.stage!r}")
        if not self.mask.bits.any():
            raise InputError("parcel mask is empty")
        r0, c0 = self.bbox_origin
        for r, c in self.contour.points:
            lr, lc = r - r0, c - c0
            if not (0 <= lr < self.mask.height and 0 <= lc < self.mask.width):
                raise InputError("contour leaves the parcel bounding box")
            if not self.mask.bits[lr, lc]:
                raise InputError("contour point not set in parcel mask")

    @property
    def area_px(self) -> int:
        return self.mask.count()

    @property
    def perimeter_px(self) -> float:
        return chain_perimeter(self.contour)

    def local_points(self) -> np.ndarray:
        """Contour points shifted into the mask's bounding-box frame."""
        pts = self.contour.as_array()
        return pts - np.array(self.bbox_origin, dtype=np.int64)

    def full_mask(self, shape: tuple[int, int]) -> BinaryMask:
        """Parcel pixels pasted into a full-frame mask."""
        r0, c0 = self.bbox_origin
        h, w = self.mask.bits.shape
        if r0 < 0 or c0 < 0 or r0 + h > shape[0] or c0 + w > shape[1]:
            raise InputError("parcel bbox does not fit inside the given shape")
        out = np.zeros(shape, dtype=bool)
        out[r0 : r0 + h, c0 : c0 + w] = self.mask.bits
        return BinaryMask(out)


def _shoelace_signed(pts: np.ndarray) -> float:
    """Signed shoelace area over (x, y) = (column, row) vertex order."""
    x = pts[:, 1]
    y = pts[:, 0]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def trace_boundary(mask: BinaryMask) -> Contour:
    """Outer boundary of the component holding the first set pixel.

    Raster-order start pixel, clockwise Moore walk, terminating when the
    opening two-pixel transition repeats.  Anything 8-reachable from the
    start is walked as one object, so callers pass single-component masks.
    Components too small to close a chain (under three chain points) are
    rejected.
    """
    bits = mask.bits
    rows, cols = np.nonzero(bits)
    if rows.size == 0:
        raise InputError("cannot trace an empty mask")
    start = (int(rows[0]), int(cols[0]))
    h, w = bits.shape

    def is_set(r: int, c: int) -> bool:
        return 0 <= r < h and 0 <= c < w and bool(bits[r, c])

    def next_on_boundary(cur: tuple[int, int], back: tuple[int, int]):
        base = _MOORE_INDEX[(back[0] - cur[0], back[1] - cur[1])]
        for step in range(1, 9):
            i = (base + step) % 8
            dr, dc = _MOORE[i]
            cand = (cur[0] + dr, cur[1] + dc)
            if is_set(*cand):
                pr, pc = _MOORE[(i - 1) % 8]
                return cand, (cur[0] + pr, cur[1] + pc)
        return None, back

    # start is raster-first, so its west neighbour is guaranteed background
    first_back = (start[0], start[1] - 1)
    second, back = next_on_boundary(start, first_back)
    if second is None:
        raise InputError("component too small to trace a closed boundary")

    chain = [start]
    cur = second
    limit = 8 * int(bits.sum()) + 8
    while True:
        if cur == start:
            probe, _ = next_on_boundary(cur, back)
            if probe == second:
                break
        chain.append(cur)
        cur, back = next_on_boundary(cur, back)
        if len(chain) > limit:
            raise InputError("boundary trace failed to close")

    if len(chain) < 3:
        raise InputError("component too small to trace a closed boundary")
    return Contour(tuple(chain))


def trace_contours(mask: BinaryMask) -> list[Contour]:
    """One outer contour per 4-connected component, raster order.

    Interior holes are not traced.  Components of one or two pixels cannot
    close a chain and are skipped.
    """
    labels, count = ndimage.label(
        mask.bits, structure=ndimage.generate_binary_structure(2, 1)
    )
    out: list[Contour] = []
    for idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        local = labels[sl] == idx
        try:
            local_contour = trace_boundary(BinaryMask(local))
        except InputError:
            continue
        out.append(local_contour.translated(sl[0].start, sl[1].start))
    return out


def fill_contour(contour: Contour, shape: tuple[int, int]) -> BinaryMask:
    """Region enclosed by the chain, chain pixels included.

    Background is flood-filled 4-connectedly from the frame border; anything
    the flood cannot reach belongs to the region.  Diagonal chain steps form
    watertight walls under this connectivity.
    """
    if shape[0] < 1 or shape[1] < 1:
        raise InputError(f"bad raster shape {shape}")
    wall = np.zeros(shape, dtype=bool)
    pts = contour.as_array()
    if pts[:, 0].min() < 0 or pts[:, 1].min() < 0 or \
            pts[:, 0].max() >= shape[0] or pts[:, 1].max() >= shape[1]:
        raise InputError("contour does not fit inside the given shape")
    wall[pts[:, 0], pts[:, 1]] = True

    free = ~wall
    labels, _ = ndimage.label(free, structure=ndimage.generate_binary_structure(2, 1))
    border = np.concatenate([
        labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]
    ])
    outside_ids = np.unique(border[border > 0])
    outside = np.isin(labels, outside_ids)
    return BinaryMask(~outside)


def parcel_from_component(local_bits: np.ndarray, origin: tuple[int, int],
                          parcel_id: str, stage: str,
                          forbid: np.ndarray | None = None) -> Parcel | None:
    """Build a Parcel from one component's bbox-local pixels.

    The component is traced and its holes filled; `forbid` marks pixels the
    fill may not absorb (other parcels nested in a hole, non-cropland).
    Returns None for fragments too small to trace.
    """
    try:
        local_contour = trace_boundary(BinaryMask(local_bits))
    except InputError:
        return None
    filled = fill_contour(local_contour, local_bits.shape).bits
    if forbid is not None:
        filled = filled & ~forbid
        filled |= local_bits
    return Parcel(parcel_id, local_contour.translated(*origin),
                  BinaryMask(filled), origin, stage)


def chain_perimeter(contour: Contour) -> float:
    """Sum of chain step lengths: 1 per axis move, sqrt(2) per diagonal."""
    pts = contour.as_array()
    diffs = np.abs(np.roll(pts, -1, axis=0) - pts)
    diag = (diffs[:, 0] == 1) & (diffs[:, 1] == 1)
    return float(diag.sum()) * _SQRT2 + float((~diag).sum())


def prefix_lengths(contour: Contour) -> np.ndarray:
    """Cumulative chain length; entry i is the distance from point 0 to i.

    The final entry (index n) is the full closed perimeter.
    """
    pts = contour.as_array()
    diffs = np.abs(np.roll(pts, -1, axis=0) - pts)
    steps = np.where((diffs[:, 0] == 1) & (diffs[:, 1] == 1), _SQRT2, 1.0)
    out = np.zeros(len(pts) + 1)
    out[1:] = np.cumsum(steps)
    return out


def contour_distance(contour: Contour, i: int, j: int,
                     prefix: np.ndarray | None = None) -> float:
    """Shorter of the two along-chain path lengths between points i and j."""
    n = len(contour)
    if not (0 <= i < n and 0 <= j < n):
        raise InputError(f"chain indices out of range: {i}, {j} with n={n}")
    if prefix is None:
        prefix = prefix_lengths(contour)
    total = prefix[n]
    forward = abs(prefix[j] - prefix[i])
    return float(min(forward, total - forward))


def turn_angle(contour: Contour, i: int, window: int) -> float:
    """Direction change in degrees at chain point i.

    Measured between the chord arriving from `window` points behind and the
    chord leaving to `window` points ahead: 0 is straight travel, 180 a
    full reversal.  Chords of zero length (the chain doubling back onto the
    same pixel) count as full reversals.
    """
    if window < 1:
        raise InputError("window must be >= 1")
    n = len(contour)
    if n <= 2 * window:
        raise InputError(f"contour of {n} points too short for window {window}")
    a = contour.points[(i - window) % n]
    b = contour.points[i % n]
    c = contour.points[(i + window) % n]
    v1 = (b[0] - a[0], b[1] - a[1])
    v2 = (c[0] - b[0], c[1] - b[1])
    n1 = math.hypot(*v1)
    n2 = math.hypot(*v2)
    if n1 == 0.0 or n2 == 0.0:
        return 180.0
    cosang = (v1[0] * v2[0] + v1[1] * v2[1]) / (n1 * n2)
    return math.degrees(math.acos(max(-1.0, min(1.0, cosang))))


def euclid(p: tuple[int, int], q: tuple[int, int]) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


def bresenham_line(p: tuple[int, int], q: tuple[int, int]) -> list[tuple[int, int]]:
    """Integer raster of the segment from p to q, both endpoints included."""
    r0, c0 = p
    r1, c1 = q
    dr = abs(r1 - r0)
    dc = abs(c1 - c0)
    sr = 1 if r1 >= r0 else -1
    sc = 1 if c1 >= c0 else -1
    out = []
    if dc >= dr:
        err = dc // 2
        r = r0
        for c in range(c0, c1 + sc, sc):
            out.append((r, c))
            err -= dr
            if err < 0:
                r += sr
                err += dc
    else:
        err = dr // 2
        c = c0
        for r in range(r0, r1 + sr, sr):
            out.append((r, c))
            err -= dc
            if err < 0:
                c += sc
                err += dr
    return out


def sample_segment(p: tuple[int, int], q: tuple[int, int],
                   k: int | None = None) -> np.ndarray:
    """k evenly spaced points on segment pq, rounded to the pixel grid.

    Default k is max(8, ceil(|pq|)) so samples are at most a pixel apart.
    """
    length = euclid(p, q)
    if k is None:
        k = max(8, int(math.ceil(length)))
    if k < 2:
        raise InputError("need at least 2 samples")
    t = np.linspace(0.0, 1.0, k)
    rows = np.floor(p[0] + t * (q[0] - p[0]) + 0.5).astype(np.int64)
    cols = np.floor(p[1] + t * (q[1] - p[1]) + 0.5).astype(np.int64)
    return np.stack([rows, cols], axis=1)


def segment_inside(parcel: Parcel, a: tuple[int, int], b: tuple[int, int]) -> bool:
    """True iff every Bresenham pixel of segment ab lies in the parcel mask.

    Points are image-frame; contour pixels count as inside.
    """
    r0, c0 = parcel.bbox_origin
    bits = parcel.mask.bits
    h, w = bits.shape
    for r, c in bresenham_line(a, b):
        lr, lc = r - r0, c - c0
        if not (0 <= lr < h and 0 <= lc < w and bits[lr, lc]):
            return False
    return True


def pixel_corners(points: np.ndarray) -> np.ndarray:
    """Four corner points (r +/- 0.5, c +/- 0.5) for each pixel centre."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
        raise InputError("expected a non-empty (n, 2) point array")
    shifts = np.array([[-0.5, -0.5], [-0.5, 0.5], [0.5, -0.5], [0.5, 0.5]])
    return (pts[:, None, :] + shifts[None, :, :]).reshape(-1, 2)


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Hull vertices by the monotone chain, collinear points dropped."""
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if pts.shape[0] == 0:
        raise InputError("cannot take the hull of zero points")
    if pts.shape[0] <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for pt in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], pt) <= 0:
            lower.pop()
        lower.append(pt)
    upper: list[np.ndarray] = []
    for pt in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], pt) <= 0:
            upper.pop()
        upper.append(pt)
    return np.array(lower[:-1] + upper[:-1])


def polygon_area(vertices: np.ndarray) -> float:
    """Absolute shoelace area of an ordered vertex ring."""
    v = np.asarray(vertices, dtype=np.float64)
    if v.shape[0] < 3:
        return 0.0
    return abs(_shoelace_signed(v))


def polygon_perimeter(vertices: np.ndarray) -> float:
    v = np.asarray(vertices, dtype=np.float64)
    if v.shape[0] < 2:
        return 0.0
    return float(np.hypot(*(np.roll(v, -1, axis=0) - v).T).sum())


def convex_hull_metrics(parcel: Parcel) -> tuple[np.ndarray, float, float]:
    """(vertices, hull_area, hull_perimeter) over the contour's pixel corners."""
    hull = convex_hull(pixel_corners(parcel.contour.as_array()))
    return hull, polygon_area(hull), polygon_perimeter(hull)


def _span_grid(bits: np.ndarray) -> np.ndarray:
    """Per set pixel: length of the horizontal run of set pixels through it."""
    h, w = bits.shape
    idx = np.broadcast_to(np.arange(w), (h, w))
    left = np.zeros_like(bits)
    left[:, 1:] = bits[:, :-1]
    right = np.zeros_like(bits)
    right[:, :-1] = bits[:, 1:]
    starts = np.where(bits & ~left, idx, 0)
    starts = np.maximum.accumulate(starts, axis=1)
    ends = np.where(bits & ~right, idx, w - 1)
    ends = np.minimum.accumulate(ends[:, ::-1], axis=1)[:, ::-1]
    return ends - starts + 1


def mean_width(parcel: Parcel) -> float:
    """Mean over boundary pixels of min(horizontal span, vertical span).

    A span is the run of consecutive parcel pixels crossing the boundary
    pixel along its row or column.  Chain points are averaged as listed, so
    a pixel the chain doubles back through counts twice.
    """
    bits = parcel.mask.bits
    h_span = _span_grid(bits)
    v_span = _span_grid(bits.T).T
    pts = parcel.local_points()
    widths = np.minimum(h_span[pts[:, 0], pts[:, 1]], v_span[pts[:, 0], pts[:, 1]])
    return float(widths.mean())


def aspect_ratio(parcel: Parcel) -> float:
    """Mean width over modelled length, in (0, 1].

    Length follows the rectangle closure 2(L + W) = P + 4, where P is the
    chain perimeter; the +4 accounts for the chain joining pixel centres
    rather than the region outline (a solid W x L rectangle has chain
    perimeter 2(W + L) - 4 exactly).
    """
    width = mean_width(parcel)
    length = max(width, (parcel.perimeter_px + 4.0) / 2.0 - width)
    if length <= 0:
        return 1.0
    return min(width / length, 1.0)


def parcel_area(parcel: Parcel) -> int:
    """Set-pixel count of the parcel mask."""
    return parcel.area_px


def parcel_perimeter(parcel: Parcel) -> float:
    """Chain-step perimeter of the parcel's outer contour."""
    return parcel.perimeter_px


@dataclass(frozen=True)
class DirectionalDistanceField:
    """Distance-to-edge grids split by edge orientation.

    Edge pixels are binned by tangent direction folded onto [0, pi); each
    bin holds an exact euclidean distance transform to its own pixels.  A
    bin with no edge pixels is stored as None, meaning distance +inf
    everywhere.  With a single bin this degenerates to the plain
    distance-to-nearest-edge transform.
    """

    n_bins: int
    shape: tuple[int, int]
    fields: tuple = field(repr=False, default=())

    def bin_of(self, direction: float) -> int:
        folded = math.fmod(direction, math.pi)
        if folded < 0:
            folded += math.pi
        return min(int(folded / (math.pi / self.n_bins)), self.n_bins - 1)


def edge_orientations(emap: EdgeMap) -> np.ndarray:
    """Tangent direction in [0, pi) of the edge running through each pixel.

    Estimated from the smoothed structure tensor of the probability
    surface: the raw gradient vanishes on a ridge crest, the tensor's
    principal direction does not.
    """
    gx, gy = smoothed_gradients(emap.prob, sigma=1.0)
    jxx = ndimage.gaussian_filter(gx * gx, 1.5)
    jxy = ndimage.gaussian_filter(gx * gy, 1.5)
    jyy = ndimage.gaussian_filter(gy * gy, 1.5)
    normal = 0.5 * np.arctan2(2.0 * jxy, jxx - jyy)
    return np.mod(normal + np.pi / 2.0, np.pi)


def directional_chamfer_build(edges: BinaryMask, orientations: np.ndarray,
                              bins: int = 16) -> DirectionalDistanceField:
    """Per-orientation-bin euclidean distance transforms to edge pixels."""
    if bins < 1:
        raise InputError("bins must be >= 1")
    if orientations.shape != edges.bits.shape:
        raise InputError("orientation grid does not match edge mask dimensions")
    folded = np.mod(orientations, np.pi)
    bin_ids = np.minimum((folded / (np.pi / bins)).astype(np.int64), bins - 1)
    fields = []
    for b in range(bins):
        members = edges.bits & (bin_ids == b)
        if not members.any():
            fields.append(None)
            continue
        fields.append(ndimage.distance_transform_edt(~members))
    return DirectionalDistanceField(bins, edges.bits.shape, tuple(fields))


def directional_chamfer_query(dfield: DirectionalDistanceField,
                              a: tuple[int, int], b: tuple[int, int]) -> float:
    """Mean distance from the ab samples to like-oriented edge pixels.

    The segment's own direction picks the orientation bin; an empty bin
    yields +inf.  Sample count is max(8, ceil(|ab|)).
    """
    if a == b:
        raise InputError("segment endpoints coincide")
    h, w = dfield.shape
    for r, c in (a, b):
        if not (0 <= r < h and 0 <= c < w):
            raise InputError(f"segment endpoint {(r, c)} outside the field grid")
    grid = dfield.fields[dfield.bin_of(math.atan2(b[0] - a[0], b[1] - a[1]))]
    if grid is None:
        return math.inf
    samples = sample_segment(a, b)
    return float(grid[samples[:, 0], samples[:, 1]].mean())
