"""Contours, hulls, chamfer fields, and shape measurements."""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage
from scipy.spatial import ConvexHull as SciHull

from fieldseg import BinaryMask, InputError
from fieldseg.geometry import (
    aspect_ratio,
    bresenham_line,
    contour_distance,
    convex_hull,
    directional_chamfer_build,
    directional_chamfer_query,
    euclid,
    fill_contour,
    mean_width,
    polygon_area,
    polygon_perimeter,
    prefix_lengths,
    sample_segment,
    segment_inside,
    trace_boundary,
    trace_contours,
    turn_angle,
)
from helpers import parcel_of, rect_bits


# ---------------------------------------------------------------- primitives

def test_euclid_matches_hypot():
    assert euclid((0, 0), (3, 4)) == 5.0


@given(st.integers(-30, 30), st.integers(-30, 30),
       st.integers(-30, 30), st.integers(-30, 30))
@settings(deadline=None)
def test_bresenham_endpoints_and_connectivity(r0, c0, r1, c1):
    line = bresenham_line((r0, c0), (r1, c1))
    assert line[0] == (r0, c0)
    assert line[-1] == (r1, c1)
    for (ar, ac), (br, bc) in zip(line, line[1:]):
        assert max(abs(ar - br), abs(ac - bc)) == 1
    assert len(line) == max(abs(r0 - r1), abs(c0 - c1)) + 1


def test_sample_segment_count_and_span():
    pts = sample_segment((0, 0), (0, 30))
    assert len(pts) == 30
    assert pts[0].tolist() == [0, 0]
    assert pts[-1].tolist() == [0, 30]
    # short segments still draw at least 8 samples
    assert len(sample_segment((0, 0), (1, 1))) == 8


def test_polygon_area_and_perimeter_square():
    sq = np.array([[0.0, 0.0], [0.0, 10.0], [10.0, 10.0], [10.0, 0.0]])
    assert abs(polygon_area(sq)) == pytest.approx(100.0, abs=1e-12)
    assert polygon_perimeter(sq) == pytest.approx(40.0, abs=1e-12)


# ----------------------------------------------------------------- hulls

def test_convex_hull_matches_scipy_area():
    rng = np.random.default_rng(11)
    for _ in range(50):
        pts = rng.random((int(rng.integers(4, 40)), 2)) * 100
        hull = convex_hull(pts)
        want = SciHull(pts).volume  # 2-d "volume" is the polygon area
        assert abs(polygon_area(hull)) == pytest.approx(want, rel=1e-9)


def test_convex_hull_contains_all_points():
    rng = np.random.default_rng(12)
    pts = rng.random((60, 2)) * 50
    hull = convex_hull(pts)
    n = len(hull)
    sign = np.sign(polygon_area(hull))
    for p in pts:
        for k in range(n):
            a, b = hull[k], hull[(k + 1) % n]
            cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
            assert sign * cross >= -1e-9


# ------------------------------------------------------------ contour trace

def test_trace_fill_round_trip_on_noise_components():
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(25):
        bits = rng.random((24, 24)) < 0.45
        labels, n = ndimage.label(bits)  # 4-connected components
        for k in range(1, n + 1):
            comp = ndimage.binary_fill_holes(labels == k)
            if comp.sum() < 5:
                continue
            contour = trace_boundary(BinaryMask(comp))
            assert np.array_equal(fill_contour(contour, comp.shape).bits, comp)
            checked += 1
    assert checked > 100


def test_trace_contours_separates_components():
    bits = np.zeros((20, 20), dtype=bool)
    bits[2:8, 2:8] = True
    bits[12:18, 12:18] = True
    contours = trace_contours(BinaryMask(bits))
    assert len(contours) == 2


def test_trace_boundary_empty_mask_raises():
    with pytest.raises(InputError):
        trace_boundary(BinaryMask(np.zeros((5, 5), dtype=bool)))


def test_contour_distance_is_symmetric_and_bounded():
    p = parcel_of(rect_bits((30, 30), 5, 5, 25, 25))
    contour = p.contour
    pre = prefix_lengths(contour)
    total = pre[len(contour)]
    rng = np.random.default_rng(3)
    for _ in range(20):
        i, j = rng.integers(0, len(contour), 2)
        d_ij = contour_distance(contour, int(i), int(j), pre)
        d_ji = contour_distance(contour, int(j), int(i), pre)
        assert d_ij == pytest.approx(d_ji, abs=1e-9)
        assert d_ij <= total / 2 + 1e-9


def test_turn_angle_square_corner_is_right_angle():
    p = parcel_of(rect_bits((40, 40), 5, 5, 35, 35))
    peak = max(turn_angle(p.contour, i, 5) for i in range(len(p.contour)))
    assert peak == pytest.approx(90.0, abs=1e-6)


def test_segment_inside_convex_vs_notched():
    p = parcel_of(rect_bits((30, 60), 5, 5, 25, 55))
    assert segment_inside(p, (10, 10), (20, 50))
    notched = rect_bits((30, 60), 5, 5, 25, 55)
    notched[5:20, 28:32] = False  # slot cut into the top edge
    q = parcel_of(notched)
    assert not segment_inside(q, (10, 10), (10, 50))


# ------------------------------------------------------------------ widths

def test_strip_mean_width_and_aspect_exact():
    p = parcel_of(rect_bits((30, 120), 10, 10, 20, 110))  # 10 x 100
    assert mean_width(p) == pytest.approx(10.0, abs=1e-9)
    assert aspect_ratio(p) == pytest.approx(0.10, abs=1e-9)


def test_square_aspect_is_unity():
    p = parcel_of(rect_bits((50, 50), 5, 5, 45, 45))
    assert aspect_ratio(p) == pytest.approx(1.0, abs=1e-9)


# ----------------------------------------------------------------- chamfer

def _brute_mean_distance(bits: np.ndarray, a, b) -> float:
    pts = sample_segment(a, b)
    edge_pts = np.argwhere(bits).astype(np.float64)
    dists = []
    for r, c in pts:
        d = np.hypot(edge_pts[:, 0] - r, edge_pts[:, 1] - c).min()
        dists.append(d)
    return float(np.mean(dists))


def test_chamfer_single_bin_matches_brute_force():
    rng = np.random.default_rng(55)
    for _ in range(20):
        bits = rng.random((16, 16)) < 0.15
        if not bits.any():
            bits[int(rng.integers(16)), int(rng.integers(16))] = True
        orient = rng.uniform(0, np.pi, (16, 16))
        dfield = directional_chamfer_build(BinaryMask(bits), orient, bins=1)
        for _ in range(5):
            a = (int(rng.integers(16)), int(rng.integers(16)))
            b = (int(rng.integers(16)), int(rng.integers(16)))
            if a == b:
                continue
            got = directional_chamfer_query(dfield, a, b)
            assert got == pytest.approx(_brute_mean_distance(bits, a, b), abs=1e-6)


def test_chamfer_orientation_selectivity():
    bits = np.zeros((20, 20), dtype=bool)
    bits[10, 2:18] = True                      # one horizontal line of edges
    orient = np.zeros((20, 20))                # tagged with orientation 0
    dfield = directional_chamfer_build(BinaryMask(bits), orient, bins=16)
    # a query segment parallel to the line, running on top of it: distance 0
    assert directional_chamfer_query(dfield, (10, 3), (10, 16)) == 0.0
    # a perpendicular query selects an empty orientation bin
    assert math.isinf(directional_chamfer_query(dfield, (2, 10), (17, 10)))


def test_chamfer_query_validation():
    bits = np.zeros((8, 8), dtype=bool)
    bits[4, 4] = True
    dfield = directional_chamfer_build(BinaryMask(bits), np.zeros((8, 8)), bins=1)
    with pytest.raises(InputError):
        directional_chamfer_query(dfield, (2, 2), (2, 2))
    with pytest.raises(InputError):
        directional_chamfer_query(dfield, (0, 0), (9, 9))
    with pytest.raises(InputError):
        directional_chamfer_build(BinaryMask(bits), np.zeros((8, 8)), bins=0)
    with pytest.raises(InputError):
        directional_chamfer_build(BinaryMask(bits), np.zeros((4, 4)), bins=1)
