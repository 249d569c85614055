"""Shared fixtures: canonical shape parcels and on-disk synthetic scenes."""
from __future__ import annotations

import numpy as np
import pytest

from fieldseg import ShapeThresholds
from fieldseg.raster import write_rgb
from fieldseg.synth import make_grid_scene, make_training_set
from fieldseg.vector import save_geojson
from helpers import parcel_of


@pytest.fixture(scope="session")
def thresholds() -> ShapeThresholds:
    return ShapeThresholds.from_meters(1.19)


@pytest.fixture
def dot_parcel():
    """A 2x2 speck: fails the perimeter/area floors."""
    bits = np.zeros((60, 60), dtype=bool)
    bits[2:4, 2:4] = True
    return parcel_of(bits, "dot")


@pytest.fixture
def v_parcel():
    """An L of two bars: large concavity, hull far bigger than the region."""
    bits = np.zeros((50, 50), dtype=bool)
    bits[5:45, 5:17] = True
    bits[33:45, 5:45] = True
    return parcel_of(bits, "vshape")


@pytest.fixture
def snake_parcel():
    """A 2 px meandering stream: long boundary enclosing almost no area."""
    bits = np.zeros((20, 60), dtype=bool)
    bits[4:6, 4:24] = True
    bits[5:7, 24:44] = True
    return parcel_of(bits, "snake")


@pytest.fixture
def strip_parcel():
    """A 10x100 band, convex and big enough, but far too elongated."""
    bits = np.zeros((20, 110), dtype=bool)
    bits[2:12, 2:102] = True
    return parcel_of(bits, "strip")


@pytest.fixture
def square_parcel():
    """A 60x60 block: passes every rule."""
    bits = np.zeros((70, 70), dtype=bool)
    bits[2:62, 2:62] = True
    return parcel_of(bits, "square")


@pytest.fixture(scope="session")
def grid_scene(tmp_path_factory) -> tuple[str, str]:
    """Full-size 10x10 grid scene on disk: (image path, ground-truth path)."""
    d = tmp_path_factory.mktemp("grid10")
    img, gt = make_grid_scene(rows=10, cols=10, cell_px=60, boundary_px=2,
                              jitter=6, seed=0)
    write_rgb(img, d / "image.png")
    save_geojson(gt, d / "gt.geojson")
    return str(d / "image.png"), str(d / "gt.geojson")


@pytest.fixture(scope="session")
def small_grid_scene(tmp_path_factory) -> tuple[str, str]:
    """Compact 6x6 grid scene for pipeline and determinism tests."""
    d = tmp_path_factory.mktemp("grid6")
    img, gt = make_grid_scene(rows=6, cols=6, cell_px=50, boundary_px=2,
                              jitter=4, seed=3)
    write_rgb(img, d / "image.png")
    save_geojson(gt, d / "gt.geojson")
    return str(d / "image.png"), str(d / "gt.geojson")


@pytest.fixture(scope="session")
def training_manifest(tmp_path_factory) -> str:
    """400-chip separable labeled set used by classifier tests."""
    d = tmp_path_factory.mktemp("chips")
    return str(make_training_set(d, n=400, size=64, seed=0))


@pytest.fixture(scope="session")
def small_manifest(tmp_path_factory) -> str:
    """80-chip labeled set for fast classifier unit tests."""
    d = tmp_path_factory.mktemp("chips-small")
    return str(make_training_set(d, n=80, size=48, seed=1))
