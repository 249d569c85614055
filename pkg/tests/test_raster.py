"""Raster I/O, gray conversion, and binary morphology."""
from __future__ import annotations

import numpy as np
import pytest

from fieldseg import BinaryMask, GrayImage, InputError, RgbImage
from fieldseg.raster import (
    dilate,
    erode,
    read_mask,
    read_rgb,
    to_gray,
    write_mask,
    write_rgb,
)


def test_rgb_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    img = RgbImage(rng.integers(0, 256, (37, 53, 3), dtype=np.uint8))
    path = tmp_path / "img.png"
    write_rgb(img, path)
    back = read_rgb(path)
    assert np.array_equal(back.data, img.data)


def test_mask_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    mask = BinaryMask(rng.random((40, 25)) < 0.5)
    path = tmp_path / "mask.png"
    write_mask(mask, path)
    back = read_mask(path)
    assert np.array_equal(back.bits, mask.bits)


def test_read_rgb_missing_file(tmp_path):
    with pytest.raises(InputError):
        read_rgb(tmp_path / "nope.png")


def test_to_gray_identity_on_gray_pixels():
    vals = np.arange(0, 256, 5, dtype=np.uint8)
    img = RgbImage(np.stack([vals, vals, vals], axis=-1)[None, :, :])
    assert np.array_equal(to_gray(img).data[0], vals)


def test_to_gray_luma_weights():
    img = RgbImage(np.array([[[255, 0, 0], [0, 255, 0], [0, 0, 255]]],
                            dtype=np.uint8))
    gray = to_gray(img).data[0]
    assert gray[0] == round(0.299 * 255)
    assert gray[1] == round(0.587 * 255)
    assert gray[2] == round(0.114 * 255)


def test_wrapper_shape_validation():
    with pytest.raises(InputError):
        GrayImage(np.zeros((4, 4, 3), dtype=np.uint8))
    with pytest.raises(InputError):
        BinaryMask(np.zeros(5, dtype=bool))
    with pytest.raises(InputError):
        RgbImage(np.zeros((4, 4), dtype=np.uint8))


def test_dilate_is_chebyshev_ball():
    m = np.zeros((7, 7), dtype=bool)
    m[3, 3] = True
    out = dilate(BinaryMask(m), 1).bits
    expect = np.zeros((7, 7), dtype=bool)
    expect[2:5, 2:5] = True
    assert np.array_equal(out, expect)


def test_erode_inverts_dilate_on_solid_block():
    m = np.zeros((9, 9), dtype=bool)
    m[3:6, 3:6] = True
    grown = dilate(BinaryMask(m), 1)
    back = erode(grown, 1).bits
    assert np.array_equal(back, m)


def test_erode_border_semantics():
    # A full-height line touching the frame: plain erosion retracts the
    # endpoints, border=True keeps them anchored.
    m = np.zeros((9, 9), dtype=bool)
    m[:, 3:6] = True
    inner = erode(BinaryMask(m), 1, border=False).bits
    assert not inner[0].any() and not inner[-1].any()
    anchored = erode(BinaryMask(m), 1, border=True).bits
    assert anchored[0, 4] and anchored[-1, 4]


def test_morphology_radius_validation():
    m = BinaryMask(np.ones((3, 3), dtype=bool))
    with pytest.raises(InputError):
        dilate(m, 0)
    with pytest.raises(InputError):
        erode(m, 0)
