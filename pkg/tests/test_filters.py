"""Shape-complexity filtering: thresholds, rule order, audit records."""
from __future__ import annotations

import json

import numpy as np
import pytest

from fieldseg import (
    RULE_ELONGATED,
    RULE_NONCONVEX,
    RULE_NONE,
    RULE_SMALL,
    RULE_THIN_STRIP,
    ShapeThresholds,
    apply_filter,
    judge,
)
from fieldseg.filters import audit_records
from helpers import parcel_of, rect_bits


def test_from_meters_arithmetic():
    t = ShapeThresholds.from_meters(1.19)
    assert t.min_perimeter == pytest.approx(60.0 / 1.19, rel=1e-12)
    assert t.min_area == pytest.approx(400.0 / 1.19**2, rel=1e-12)
    assert t.convexity_max_ratio == 1.3
    assert t.convexity_area_cap == pytest.approx(10000.0 / 1.19**2, rel=1e-12)
    assert t.min_area_perimeter_ratio == pytest.approx(2.0 / 1.19, rel=1e-12)
    assert t.ap_area_cap == pytest.approx(2500.0 / 1.19**2, rel=1e-12)
    assert t.min_aspect_ratio == 0.12
    assert t.sub_polygon_min_contour == 60.0


def test_from_meters_rejects_bad_gsd():
    with pytest.raises(Exception):
        ShapeThresholds.from_meters(0.0)


def test_dot_fires_small_rule(dot_parcel, thresholds):
    v = judge(dot_parcel, thresholds)
    assert not v.kept and v.rule_fired == RULE_SMALL


def test_v_shape_fires_nonconvex_rule(v_parcel, thresholds):
    v = judge(v_parcel, thresholds)
    assert not v.kept and v.rule_fired == RULE_NONCONVEX


def test_snake_fires_elongated_noise_rule(snake_parcel, thresholds):
    v = judge(snake_parcel, thresholds)
    assert not v.kept and v.rule_fired == RULE_ELONGATED


def test_strip_fires_thin_strip_rule(strip_parcel, thresholds):
    v = judge(strip_parcel, thresholds)
    assert not v.kept and v.rule_fired == RULE_THIN_STRIP


def test_square_is_kept(square_parcel, thresholds):
    v = judge(square_parcel, thresholds)
    assert v.kept and v.rule_fired == RULE_NONE


def test_rule_order_small_wins(dot_parcel, thresholds):
    # the dot also fails the elongation ratios, but the size rule is
    # checked first and is the one reported
    assert judge(dot_parcel, thresholds).rule_fired == RULE_SMALL


def test_large_nonconvex_shape_escapes_convexity_cap(thresholds):
    # same L geometry as the V fixture, scaled past the area cap: the
    # convexity rule no longer applies and the big parcel is kept
    bits = np.zeros((300, 300), dtype=bool)
    bits[10:250, 10:90] = True
    bits[180:250, 10:250] = True
    p = parcel_of(bits, "bigL")
    assert p.area_px > thresholds.convexity_area_cap
    v = judge(p, thresholds)
    assert v.kept


def test_apply_filter_partitions_input(dot_parcel, v_parcel, snake_parcel,
                                       strip_parcel, square_parcel, thresholds):
    parcels = [dot_parcel, v_parcel, snake_parcel, strip_parcel, square_parcel]
    kept, dropped = apply_filter(parcels, thresholds)
    assert len(kept) + len(dropped) == len(parcels)
    assert [p.parcel_id for p in kept] == ["square"]
    assert {p.parcel_id for p, _ in dropped} == {"dot", "vshape", "snake", "strip"}
    assert all(not v.kept for _, v in dropped)


def test_audit_records_are_json_ready(dot_parcel, strip_parcel, thresholds):
    _, dropped = apply_filter([dot_parcel, strip_parcel], thresholds)
    records = audit_records(dropped)
    text = json.dumps(records)
    assert "dot" in text and RULE_SMALL in text


def test_square_metrics_pass_each_threshold(square_parcel, thresholds):
    # sanity anchor: a 60 px square sits comfortably above every floor
    assert square_parcel.area_px == 3600
    assert square_parcel.perimeter_px > thresholds.min_perimeter
    assert square_parcel.area_px > thresholds.min_area
