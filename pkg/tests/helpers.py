"""Shared builders for tests: parcels from masks, random layouts, cut oracles."""
from __future__ import annotations

import numpy as np

from fieldseg import EdgeMap, Parcel, SplitParams
from fieldseg.geometry import (
    bresenham_line,
    directional_chamfer_query,
    parcel_from_component,
    prefix_lengths,
    segment_inside,
)


def parcel_of(bits: np.ndarray, pid: str = "p0001", stage: str = "extracted",
              forbid: np.ndarray | None = None) -> Parcel:
    """Build a parcel from a full-frame boolean mask holding one component.

    `forbid` marks pixels the hole-filling must not absorb, the way the
    extractor protects nested parcels and non-cropland ground.
    """
    p = parcel_from_component(np.asarray(bits, dtype=bool), (0, 0), pid, stage,
                              forbid=forbid)
    assert p is not None, "fixture mask did not produce a parcel"
    return p


def rect_bits(shape: tuple[int, int], r0: int, c0: int, r1: int, c1: int) -> np.ndarray:
    bits = np.zeros(shape, dtype=bool)
    bits[r0:r1, c0:c1] = True
    return bits


def global_bits(parcel: Parcel, shape: tuple[int, int]) -> np.ndarray:
    return parcel.full_mask(shape).bits


def random_rect_layout(rng: np.random.Generator, shape: tuple[int, int],
                       prefix: str, min_side: int = 3,
                       drop_prob: float = 0.15) -> list[Parcel]:
    """Disjoint axis-aligned rectangles tiling a frame, a few dropped at random.

    Recursive guillotine splits give a mix of sizes; dropping rectangles
    leaves areas covered by one layout but not the other, so pairing two
    layouts exercises matched, merged, split, and unmatched fields alike.
    """
    h, w = shape
    rects: list[tuple[int, int, int, int]] = []

    def cleave(r0: int, c0: int, r1: int, c1: int, depth: int) -> None:
        can_h = r1 - r0 >= 2 * min_side
        can_v = c1 - c0 >= 2 * min_side
        if depth == 0 or (not can_h and not can_v) or rng.random() < 0.25:
            rects.append((r0, c0, r1, c1))
            return
        if can_h and (not can_v or rng.random() < 0.5):
            cut = int(rng.integers(r0 + min_side, r1 - min_side + 1))
            cleave(r0, c0, cut, c1, depth - 1)
            cleave(cut, c0, r1, c1, depth - 1)
        else:
            cut = int(rng.integers(c0 + min_side, c1 - min_side + 1))
            cleave(r0, c0, r1, cut, depth - 1)
            cleave(r0, cut, r1, c1, depth - 1)

    cleave(0, 0, h, w, 4)
    keep = [r for r in rects if rng.random() >= drop_prob] or rects[:1]
    return [
        parcel_of(rect_bits(shape, *r), f"{prefix}{k:04d}")
        for k, r in enumerate(keep, start=1)
    ]


def recompute_cut(parcel: Parcel, i: int, j: int, emap: EdgeMap, dcd,
                  params: SplitParams) -> tuple[float, float, float, bool]:
    """Independently re-derive (euclid, along, strength, admissible) for a chord.

    Uses only primitive helpers: chain prefix lengths, the directional
    distance field, the rasterized chord, and the point-in-parcel test.
    """
    contour = parcel.contour
    n = len(contour)
    prefix = prefix_lengths(contour)
    total = float(prefix[n])
    a = contour.points[i]
    b = contour.points[j]
    eu = float(np.hypot(a[0] - b[0], a[1] - b[1]))
    forward = abs(float(prefix[j] - prefix[i]))
    along = min(forward, total - forward)
    c_dist = 1.0 / (1.0 + directional_chamfer_query(dcd, a, b))
    chord = bresenham_line(a, b)
    c_prob = float(np.mean([emap.prob[r, c] for r, c in chord]))
    strength = params.beta * c_dist + (1.0 - params.beta) * c_prob
    ok_sub = min(forward, total - forward) + eu >= params.min_sub_contour
    adm = bool(ok_sub and segment_inside(parcel, a, b))
    return eu, along, strength, adm
