"""Candidate-polygon extraction from binarized edge maps."""
from __future__ import annotations

import numpy as np
import pytest

from fieldseg import (
    BinaryMask,
    EdgeMap,
    ExtractionParams,
    clean_edge_mask,
    extract_parcels,
)
from helpers import global_bits


def _lattice_edge_map(n_lines: int = 4, pitch: int = 66) -> EdgeMap:
    """Full-frame lattice of 1 px lines; every non-line region is a cell."""
    size = (n_lines - 1) * pitch + 1
    prob = np.zeros((size, size))
    for k in range(n_lines):
        lo = k * pitch
        prob[lo, :] = 1.0
        prob[:, lo] = 1.0
    return EdgeMap(prob)


def test_lattice_yields_one_parcel_per_cell():
    emap = _lattice_edge_map(4, 66)
    parcels = extract_parcels(emap, None, ExtractionParams())
    assert len(parcels) == 9
    assert [p.parcel_id for p in parcels] == [f"p{k:04d}" for k in range(1, 10)]
    assert all(p.stage == "extracted" for p in parcels)
    areas = {p.area_px for p in parcels}
    assert areas == {65 * 65}  # identical cells between the lines


def test_parcel_masks_are_disjoint():
    emap = _lattice_edge_map(4, 66)
    parcels = extract_parcels(emap, None, ExtractionParams())
    shape = emap.prob.shape
    stack = np.zeros(shape, dtype=int)
    for p in parcels:
        stack += global_bits(p, shape).astype(int)
    assert stack.max() == 1


def test_cropland_mask_restricts_extraction():
    emap = _lattice_edge_map(4, 66)
    shape = emap.prob.shape
    cropland = np.ones(shape, dtype=bool)
    cropland[:, shape[1] // 2:] = False
    parcels = extract_parcels(emap, BinaryMask(cropland), ExtractionParams())
    assert parcels, "left-half cells must survive"
    for p in parcels:
        assert not (global_bits(p, shape) & ~cropland).any()


def test_min_component_area_drops_specks():
    emap = _lattice_edge_map(4, 66)
    shape = emap.prob.shape
    # cropland reduces the first cell to a 6 px sliver: below the 9 px floor
    cropland = np.ones(shape, dtype=bool)
    cropland[1:66, 1:66] = False
    cropland[1:3, 1:4] = True
    parcels = extract_parcels(emap, BinaryMask(cropland), ExtractionParams())
    assert len(parcels) == 8  # the sliver is not promoted to a parcel
    for p in parcels:
        assert p.area_px >= 9


def test_clean_edge_mask_bridges_single_pixel_gap():
    bits = np.zeros((21, 21), dtype=bool)
    bits[:, 10] = True
    bits[7, 10] = False  # one-pixel breach
    cleaned = clean_edge_mask(BinaryMask(bits), ExtractionParams())
    assert cleaned.bits[7, 10]


def test_clean_edge_mask_keeps_lines_anchored_at_border():
    bits = np.zeros((21, 21), dtype=bool)
    bits[:, 10] = True
    cleaned = clean_edge_mask(BinaryMask(bits), ExtractionParams())
    assert cleaned.bits[0, 10] and cleaned.bits[20, 10]


def test_extraction_is_deterministic():
    emap = _lattice_edge_map(4, 66)
    a = extract_parcels(emap, None, ExtractionParams())
    b = extract_parcels(emap, None, ExtractionParams())
    assert [(p.parcel_id, p.bbox_origin, p.area_px) for p in a] == \
           [(p.parcel_id, p.bbox_origin, p.area_px) for p in b]


def test_extraction_params_validation():
    with pytest.raises(Exception):
        ExtractionParams(binarize_threshold=1.5)
