"""Stage 3: fragment under-segmented parcels.

Two passes.  The min-cut pass looks for pairs of concave contour points
that are close in the plane but far along the chain (a pinched neck),
scores the chord between them by how much edge evidence lies along it,
and recursively applies the strongest admissible cut.  The localized pass
re-runs the hysteresis detector inside each parcel with thresholds scaled
to that parcel's own mean intensity, recovering faint internal boundaries
a global pass misses.

Cut strength is C_s = beta * C_dist + (1 - beta) * C_prob, where C_dist
turns the directional chamfer distance d into a similarity 1/(1 + d) (a
chord lying on like-oriented edge pixels scores 1) and C_prob is the mean
edge probability under the chord's Bresenham pixels.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .edges import (DEFAULT_SIGMA, EdgeMap, HysteresisParams, binarize_edges,
                    canny, local_hysteresis_params)
from .errors import InputError
from .extract import ExtractionParams, clean_edge_mask
from .filters import ShapeThresholds, rule1_small, rule3_elongated_noise
from .geometry import (Contour, DirectionalDistanceField, Parcel,
                       bresenham_line, directional_chamfer_query, euclid,
                       parcel_from_component, prefix_lengths, segment_inside)
from .raster import BinaryMask, GrayImage


@dataclass(frozen=True)
class SplitParams:
    beta: float = 0.5
    curvature_window: int = 5
    curvature_min_angle: float = 60.0
    max_cut_euclid: float = 25.0
    min_cut_contour: float = 80.0
    min_sub_contour: float = 60.0
    max_recursion_depth: int = 8
    min_strength: float = 0.15

    def __post_init__(self) -> None:
        if not (0.0 <= self.beta <= 1.0):
            raise InputError("beta must lie in [0, 1]")
        if self.curvature_window < 1:
            raise InputError("curvature_window must be >= 1")
        if not (0.0 < self.curvature_min_angle <= 180.0):
            raise InputError("curvature_min_angle must lie in (0, 180]")
        if self.max_cut_euclid <= 0:
            raise InputError("max_cut_euclid must be positive")
        if self.min_cut_contour <= self.max_cut_euclid:
            raise InputError("min_cut_contour must exceed max_cut_euclid")
        if self.min_sub_contour <= 0:
            raise InputError("min_sub_contour must be positive")
        if self.max_recursion_depth < 1:
            raise InputError("max_recursion_depth must be >= 1")
        if not (0.0 <= self.min_strength <= 1.0):
            raise InputError("min_strength must lie in [0, 1]")


@dataclass(frozen=True)
class Cut:
    """A chord between chain indices i and j of one parcel's contour."""

    i: int
    j: int
    euclid: float
    along_contour: float
    strength: float = 0.0
    admissible: bool = False

    def __post_init__(self) -> None:
        if self.i == self.j:
            raise InputError("cut endpoints coincide")
        if self.along_contour <= self.euclid:
            raise InputError("cut must be shorter across than along the chain")
        if not (0.0 <= self.strength <= 1.0):
            raise InputError("cut strength must lie in [0, 1]")


def _turn_angles(contour: Contour, window: int) -> np.ndarray:
    """Turn angle in degrees at every chain point (vectorized)."""
    pts = contour.as_array().astype(np.float64)
    v1 = pts - np.roll(pts, window, axis=0)
    v2 = np.roll(pts, -window, axis=0) - pts
    n1 = np.hypot(v1[:, 0], v1[:, 1])
    n2 = np.hypot(v2[:, 0], v2[:, 1])
    degenerate = (n1 == 0.0) | (n2 == 0.0)
    denom = np.where(degenerate, 1.0, n1 * n2)
    cosang = np.clip((v1 * v2).sum(axis=1) / denom, -1.0, 1.0)
    angles = np.degrees(np.arccos(cosang))
    # a chord collapsing onto itself is a full reversal
    return np.where(degenerate, 180.0, angles)


def find_cut_points(parcel: Parcel, params: SplitParams) -> list[int]:
    """Chain indices of locally maximal high-curvature corners.

    Angles at or above curvature_min_angle survive a greedy non-maximum
    suppression over a cyclic window of curvature_window indices.  Chains
    too short for the curvature window yield no cut points.
    """
    n = len(parcel.contour)
    w = params.curvature_window
    if n <= 2 * w:
        return []
    angles = _turn_angles(parcel.contour, w)
    candidates = np.nonzero(angles >= params.curvature_min_angle)[0]
    order = sorted(candidates, key=lambda i: (-angles[i], i))
    kept: list[int] = []
    for i in order:
        near = any(min(abs(i - k), n - abs(i - k)) <= w for k in kept)
        if not near:
            kept.append(int(i))
    return sorted(kept)


def pair_cut_point(parcel: Parcel, c: int, params: SplitParams,
                   prefix: np.ndarray | None = None) -> Cut | None:
    """Best partner for cut point c: nearest point that is far along the chain.

    Minimizes euclidean distance subject to contour_distance > euclid and
    contour_distance >= min_cut_contour; ties go to the smaller index.
    The max_cut_euclid gate is applied later, at the candidate stage.
    """
    contour = parcel.contour
    n = len(contour)
    if not (0 <= c < n):
        raise InputError(f"cut point index {c} out of range for chain of {n}")
    if prefix is None:
        prefix = prefix_lengths(contour)
    pts = contour.as_array().astype(np.float64)
    eu = np.hypot(pts[:, 0] - pts[c, 0], pts[:, 1] - pts[c, 1])
    forward = np.abs(prefix[:n] - prefix[c])
    along = np.minimum(forward, prefix[n] - forward)
    ok = (along > eu) & (along >= params.min_cut_contour)
    ok[c] = False
    if not ok.any():
        return None
    eu_masked = np.where(ok, eu, np.inf)
    j = int(np.argmin(eu_masked))
    return Cut(i=c, j=j, euclid=float(eu[j]), along_contour=float(along[j]))


def candidate_cuts(parcel: Parcel, params: SplitParams) -> list[Cut]:
    """Paired cut points gated by the two distance thresholds, deduplicated."""
    prefix = prefix_lengths(parcel.contour)
    seen: set[tuple[int, int]] = set()
    out: list[Cut] = []
    for c in find_cut_points(parcel, params):
        cut = pair_cut_point(parcel, c, params, prefix)
        if cut is None:
            continue
        if not (cut.euclid < params.max_cut_euclid
                and cut.along_contour > params.min_cut_contour):
            continue
        key = (min(cut.i, cut.j), max(cut.i, cut.j))
        if key in seen:
            continue
        seen.add(key)
        out.append(cut)
    return out


def cut_strength(parcel: Parcel, cut: Cut, edges: EdgeMap,
                 dcd: DirectionalDistanceField, params: SplitParams) -> float:
    pi = parcel.contour.points[cut.i]
    pj = parcel.contour.points[cut.j]
    c_dist = 1.0 / (1.0 + directional_chamfer_query(dcd, pi, pj))
    pixels = bresenham_line(pi, pj)
    c_prob = float(np.mean([edges.prob[r, c] for r, c in pixels]))
    return params.beta * c_dist + (1.0 - params.beta) * c_prob


def admissible(parcel: Parcel, cut: Cut, params: SplitParams,
               prefix: np.ndarray | None = None) -> bool:
    """True iff the chord stays inside the parcel and neither piece is a sliver.

    Each sub-polygon's closed contour is one chain arc plus the chord, so
    its length is the arc length plus the chord's euclidean length.
    """
    contour = parcel.contour
    if prefix is None:
        prefix = prefix_lengths(contour)
    n = len(contour)
    forward = abs(prefix[cut.j] - prefix[cut.i])
    backward = prefix[n] - forward
    if min(forward, backward) + cut.euclid < params.min_sub_contour:
        return False
    return segment_inside(parcel, contour.points[cut.i], contour.points[cut.j])


def score_cuts(parcel: Parcel, edges: EdgeMap, dcd: DirectionalDistanceField,
               params: SplitParams) -> list[Cut]:
    """Candidate cuts with strength and admissibility filled in."""
    prefix = prefix_lengths(parcel.contour)
    return [
        replace(cut,
                strength=cut_strength(parcel, cut, edges, dcd, params),
                admissible=admissible(parcel, cut, params, prefix))
        for cut in candidate_cuts(parcel, params)
    ]


def _carve(parcel: Parcel, cut: Cut, stage: str, id_tag: str) -> list[Parcel]:
    """Split the parcel mask along the cut chord into child parcels."""
    r0, c0 = parcel.bbox_origin
    bits = parcel.mask.bits.copy()
    pi = parcel.contour.points[cut.i]
    pj = parcel.contour.points[cut.j]
    for r, c in bresenham_line((pi[0] - r0, pi[1] - c0), (pj[0] - r0, pj[1] - c0)):
        bits[r, c] = False
    labels, count = ndimage.label(
        bits, structure=ndimage.generate_binary_structure(2, 1)
    )
    children: list[Parcel] = []
    for comp, sl in enumerate(ndimage.find_objects(labels), start=1):
        child = parcel_from_component(
            labels[sl] == comp,
            (r0 + sl[0].start, c0 + sl[1].start),
            f"{parcel.parcel_id}.{id_tag}{len(children) + 1}",
            stage,
        )
        if child is not None:
            children.append(child)
    return children


def split_mincut(parcel: Parcel, edges: EdgeMap, dcd: DirectionalDistanceField,
                 params: SplitParams, _depth: int | None = None) -> list[Parcel]:
    """Recursively apply the strongest admissible cut, if any qualifies.

    A cut is applied only when admissible and at least min_strength; the
    winner maximizes strength with ties broken by lower (i, j).  Children
    are carved from the mask (chord pixels become barrier) and re-traced,
    then split again up to max_recursion_depth.
    """
    depth = params.max_recursion_depth if _depth is None else _depth
    if depth <= 0:
        return [parcel]
    viable = [c for c in score_cuts(parcel, edges, dcd, params)
              if c.admissible and c.strength >= params.min_strength]
    if not viable:
        return [parcel]
    best = min(viable, key=lambda c: (-c.strength, c.i, c.j))
    children = _carve(parcel, best, "split_mincut", "m")
    if len(children) < 2:
        return [parcel]
    out: list[Parcel] = []
    for child in children:
        out.extend(split_mincut(child, edges, dcd, params, depth - 1))
    return out


def describe_cuts(parcel: Parcel, edges: EdgeMap, dcd: DirectionalDistanceField,
                  params: SplitParams) -> dict:
    """JSON-ready record of cut points and scored candidates for one parcel."""
    scored = score_cuts(parcel, edges, dcd, params)
    viable = [c for c in scored
              if c.admissible and c.strength >= params.min_strength]
    chosen = min(viable, key=lambda c: (-c.strength, c.i, c.j)) if viable else None
    as_dict = lambda c: {
        "i": c.i, "j": c.j,
        "euclid": round(c.euclid, 3),
        "along_contour": round(c.along_contour, 3),
        "strength": round(c.strength, 6),
        "admissible": c.admissible,
    }
    return {
        "id": parcel.parcel_id,
        "cut_points": find_cut_points(parcel, params),
        "candidates": [as_dict(c) for c in scored],
        "chosen": as_dict(chosen) if chosen else None,
    }


def split_localized(parcel: Parcel, img: GrayImage, extraction: ExtractionParams,
                    thresholds: ShapeThresholds, k_low: float, k_high: float,
                    gaussian_sigma: float = DEFAULT_SIGMA) -> list[Parcel]:
    """Re-detect edges inside one parcel with intensity-scaled thresholds.

    The parcel's bbox crop is taken with the exterior flattened to the
    parcel's mean intensity so the detector sees no artificial rim, then
    the hysteresis detector runs with thresholds proportional to that
    mean.  Detected edges (after the standard cleanup) plus the exterior
    carve the parcel into fragments; fragments surviving the speck and
    elongated-noise rules replace the parcel when at least two survive.
    """
    r0, c0 = parcel.bbox_origin
    h, w = parcel.mask.bits.shape
    crop = img.data[r0 : r0 + h, c0 : c0 + w]
    inside = parcel.mask.bits

    local_img = GrayImage(crop)
    region = BinaryMask(inside)
    hparams = local_hysteresis_params(local_img, region, k_low, k_high,
                                      gaussian_sigma)
    mu = np.uint8(np.floor(float(crop[inside].mean()) + 0.5))
    flattened = GrayImage(np.where(inside, crop, mu))
    emap = canny(flattened, hparams)
    edge_bits = clean_edge_mask(
        binarize_edges(emap, extraction.binarize_threshold), extraction
    ).bits
    free = inside & ~edge_bits

    labels, count = ndimage.label(
        free, structure=ndimage.generate_binary_structure(2, 1)
    )
    if count < 2:
        return [parcel]
    areas = np.bincount(labels.ravel(), minlength=count + 1)
    eligible = areas >= extraction.min_component_area
    eligible[0] = False
    eligible_px = eligible[labels]

    survivors: list[Parcel] = []
    for comp, sl in enumerate(ndimage.find_objects(labels), start=1):
        if not eligible[comp]:
            continue
        local = labels[sl] == comp
        fragment = parcel_from_component(
            local, (r0 + sl[0].start, c0 + sl[1].start),
            f"{parcel.parcel_id}.tmp", "split_lcd",
            forbid=eligible_px[sl] & ~local,
        )
        if fragment is None:
            continue
        if rule1_small(fragment, thresholds) or \
                rule3_elongated_noise(fragment, thresholds):
            continue
        survivors.append(fragment)
    if len(survivors) < 2:
        return [parcel]
    return [
        replace(frag, parcel_id=f"{parcel.parcel_id}.l{k + 1}")
        for k, frag in enumerate(survivors)
    ]
