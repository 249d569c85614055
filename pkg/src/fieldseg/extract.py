"""Stage 1: turn a fused edge map into the initial set of candidate parcels.

The edge map is binarized, bridged shut (dilate, erode), thinned back to
1-px lines, and optionally combined with the complement of a cropland
mask.  The resulting barrier pixels carve the frame into 4-connected
regions; each sufficiently large region becomes a Parcel with its holes
filled.  Pixels of one parcel nested inside another parcel's hole are
never absorbed, so parcels stay pairwise disjoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .edges import EdgeMap, binarize_edges
from .errors import InputError
from .geometry import Parcel, parcel_from_component
from .raster import BinaryMask, dilate, erode, thin


@dataclass(frozen=True)
class ExtractionParams:
    binarize_threshold: float = 0.5
    dilate_radius: int = 1
    erode_radius: int = 1
    min_component_area: int = 9

    def __post_init__(self) -> None:
        if not (0.0 <= self.binarize_threshold <= 1.0):
            raise InputError("binarize_threshold must lie in [0, 1]")
        if self.dilate_radius < 0 or self.erode_radius < 0:
            raise InputError("morphology radii must be >= 0")
        if self.min_component_area < 1:
            raise InputError("min_component_area must be >= 1")


def clean_edge_mask(edges: BinaryMask, params: ExtractionParams) -> BinaryMask:
    """Bridge small gaps (dilate then erode) and thin lines back to 1 px.

    The erosion treats out-of-frame pixels as set so that lines ending
    at the frame border are not retracted by the closing.
    """
    out = edges
    if params.dilate_radius >= 1:
        out = dilate(out, params.dilate_radius)
    if params.erode_radius >= 1:
        out = erode(out, params.erode_radius, border=True)
    return thin(out)


def extract_parcels(edge_map: EdgeMap, cropland: BinaryMask | None,
                    params: ExtractionParams) -> list[Parcel]:
    """4-connected non-barrier regions of the cleaned edge map, as Parcels.

    Barrier pixels are cleaned edge pixels plus everything outside the
    cropland mask when one is given.  Regions below min_component_area are
    treated as noise (regions of one or two pixels cannot close a boundary
    chain and are treated the same way).  Parcel ids are p0001, p0002, ...
    in raster order of the surviving regions.
    """
    if cropland is not None and cropland.bits.shape != edge_map.prob.shape:
        raise InputError("cropland mask does not match edge map dimensions")
    cleaned = clean_edge_mask(binarize_edges(edge_map, params.binarize_threshold),
                              params)
    barrier = cleaned.bits
    if cropland is not None:
        barrier = barrier | ~cropland.bits

    labels, count = ndimage.label(
        ~barrier, structure=ndimage.generate_binary_structure(2, 1)
    )
    if count == 0:
        return []
    areas = np.bincount(labels.ravel(), minlength=count + 1)
    eligible = areas >= params.min_component_area
    eligible[0] = False
    eligible_px = eligible[labels]

    parcels: list[Parcel] = []
    seq = 0
    for comp, sl in enumerate(ndimage.find_objects(labels), start=1):
        if not eligible[comp]:
            continue
        window = labels[sl]
        local = window == comp
        # the fill may absorb barrier pixels and sub-minimum specks inside
        # holes, but never pixels of other parcels or non-cropland ground
        forbid = eligible_px[sl] & ~local
        if cropland is not None:
            forbid = forbid | ~cropland.bits[sl]
        parcel = parcel_from_component(
            local, (sl[0].start, sl[1].start), f"p{seq + 1:04d}", "extracted",
            forbid=forbid,
        )
        if parcel is None:
            continue
        seq += 1
        parcels.append(parcel)
    return parcels
