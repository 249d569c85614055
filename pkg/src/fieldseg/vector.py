"""Mask to GeoJSON polygons and back, exactly.

Polygon vertices are pixel corners: (x, y) = (column, row) on the integer
grid, so pixel (r, c) is the unit square x in [c, c+1], y in [r, r+1].
Rings follow the region boundary keeping the interior on the left, which
makes exteriors positively oriented in (x, y) and holes negative.
Rasterization is even-odd at pixel centers; because emitted rings run
exactly along the mask's pixel edges, a write/read cycle reproduces the
mask pixel for pixel.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import InputError
from .geometry import Parcel, parcel_from_component
from .raster import BinaryMask

Point = tuple[int, int]
Ring = list[Point]


def _collect_edges(bits: np.ndarray) -> dict:
    """start corner -> sorted unit steps (dx, dy), interior on the left."""
    padded = np.pad(bits, 1)
    up = padded[:-2, 1:-1]
    down = padded[2:, 1:-1]
    left = padded[1:-1, :-2]
    right = padded[1:-1, 2:]
    edges: dict[Point, list[Point]] = {}

    def add(exposed: np.ndarray, corner_dx: int, corner_dy: int,
            step: Point) -> None:
        for r, c in np.argwhere(exposed):
            edges.setdefault((int(c) + corner_dx, int(r) + corner_dy),
                             []).append(step)

    add(bits & ~up, 0, 0, (1, 0))       # top side: (c, r) -> (c+1, r)
    add(bits & ~down, 1, 1, (-1, 0))    # bottom: (c+1, r+1) -> (c, r+1)
    add(bits & ~left, 0, 1, (0, -1))    # left: (c, r+1) -> (c, r)
    add(bits & ~right, 1, 0, (0, 1))    # right: (c+1, r) -> (c+1, r+1)
    for steps in edges.values():
        steps.sort()
    return edges


def _next_step(incoming: Point, options: list[Point]) -> Point:
    """Sharpest left turn first, so rings touching at a corner never merge."""
    if len(options) == 1:
        return options[0]
    dx, dy = incoming

    def turn(step: Point) -> int:
        cross = dx * step[1] - dy * step[0]
        if cross > 0:
            return 0
        if step == (dx, dy):
            return 1
        return 2

    return min(options, key=turn)


def _merge_collinear(ring: Ring) -> Ring:
    out: Ring = []
    n = len(ring)
    for k, point in enumerate(ring):
        prev = ring[k - 1]
        nxt = ring[(k + 1) % n]
        d_in = (point[0] - prev[0], point[1] - prev[1])
        d_out = (nxt[0] - point[0], nxt[1] - point[1])
        if d_in != d_out:
            out.append(point)
    return out


def _stitch_rings(bits: np.ndarray) -> list[Ring]:
    """Closed corner rings of a mask, collinear runs merged."""
    edges = _collect_edges(bits)
    rings: list[Ring] = []
    while edges:
        start = min(edges)
        step = edges[start].pop(0)
        if not edges[start]:
            del edges[start]
        ring = [start]
        point = (start[0] + step[0], start[1] + step[1])
        while point != start:
            ring.append(point)
            options = edges[point]
            step = _next_step(step, options)
            options.remove(step)
            if not options:
                del edges[point]
            point = (point[0] + step[0], point[1] + step[1])
        rings.append(_merge_collinear(ring))
    return rings


def _ring_area(ring: Ring) -> float:
    xs = np.array([p[0] for p in ring], dtype=np.float64)
    ys = np.array([p[1] for p in ring], dtype=np.float64)
    return float(np.sum(xs * np.roll(ys, -1) - np.roll(xs, -1) * ys) / 2.0)


def polygons_from_mask(bits: np.ndarray) -> list[list[Ring]]:
    """One [exterior, *holes] ring list per 4-connected component."""
    if bits.ndim != 2:
        raise InputError("mask must be 2-d")
    if not bits.any():
        raise InputError("cannot vectorize an empty mask")
    labels, count = ndimage.label(
        bits, structure=ndimage.generate_binary_structure(2, 1)
    )
    polygons = []
    for comp in range(1, count + 1):
        rings = _stitch_rings(labels == comp)
        exterior = [r for r in rings if _ring_area(r) > 0]
        holes = [r for r in rings if _ring_area(r) < 0]
        if len(exterior) != 1:
            raise InputError("component traced to no single exterior ring")
        polygons.append([exterior[0], *holes])
    return polygons


def mask_from_polygons(polygons: list[list[Ring]],
                       shape: tuple[int, int]) -> np.ndarray:
    """Even-odd rasterization of polygon rings at pixel centers."""
    h, w = shape
    bits = np.zeros((h, w), dtype=bool)
    segs = [(float(ax), float(ay), float(bx), float(by))
            for rings in polygons for ring in rings
            for (ax, ay), (bx, by) in zip(ring, list(ring[1:]) + [ring[0]])]
    if not segs:
        return bits
    arr = np.array(segs)
    ax, ay, bx, by = arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]
    centers_x = np.arange(w) + 0.5
    for r in range(h):
        yc = r + 0.5
        spans = ((ay <= yc) & (by > yc)) | ((by <= yc) & (ay > yc))
        if not spans.any():
            continue
        t = (yc - ay[spans]) / (by[spans] - ay[spans])
        xs = np.sort(ax[spans] + t * (bx[spans] - ax[spans]))
        bits[r] = np.searchsorted(xs, centers_x, side="left") % 2 == 1
    return bits


# ----------------------------------------------------------------- GeoJSON


def _feature(parcel: Parcel, label: str, confidence: float) -> dict:
    r0, c0 = parcel.bbox_origin
    polygons = polygons_from_mask(parcel.mask.bits)
    shifted = [
        [[[x + c0, y + r0] for x, y in list(ring) + [ring[0]]]
         for ring in rings]
        for rings in polygons
    ]
    if len(shifted) == 1:
        geometry = {"type": "Polygon", "coordinates": shifted[0]}
    else:
        geometry = {"type": "MultiPolygon", "coordinates": shifted}
    return {
        "type": "Feature",
        "geometry": geometry,
        "properties": {
            "id": parcel.parcel_id,
            "label": label,
            "confidence": round(float(confidence), 6),
        },
    }


def parcels_to_geojson(items: list[tuple[Parcel, str, float]]) -> dict:
    """(parcel, label, confidence) triples -> FeatureCollection."""
    features = [
        _feature(parcel, label, confidence)
        for parcel, label, confidence in sorted(items,
                                                key=lambda t: t[0].parcel_id)
    ]
    return {"type": "FeatureCollection", "features": features}


def save_geojson(doc: dict, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"
    )


def load_geojson(path: str | Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read GeoJSON {path}: {exc}") from exc
    if doc.get("type") != "FeatureCollection" or "features" not in doc:
        raise InputError(f"{path} is not a FeatureCollection")
    return doc


def _geometry_polygons(geometry: dict) -> list[list[Ring]]:
    gtype = geometry.get("type")
    coords = geometry.get("coordinates")
    if gtype == "Polygon":
        groups = [coords]
    elif gtype == "MultiPolygon":
        groups = coords
    else:
        raise InputError(f"unsupported geometry type {gtype!r}")
    return [
        [[(float(x), float(y)) for x, y in ring] for ring in rings]
        for rings in groups
    ]


def geojson_to_parcels(doc: dict, frame: tuple[int, int] | None = None
                       ) -> list[Parcel]:
    """Rasterize each feature back into a Parcel on the given frame.

    Without an explicit frame, the smallest frame containing every vertex
    is used.
    """
    features = doc["features"]
    if frame is None:
        max_x = max_y = 0.0
        for feat in features:
            for rings in _geometry_polygons(feat["geometry"]):
                for ring in rings:
                    for x, y in ring:
                        max_x = max(max_x, x)
                        max_y = max(max_y, y)
        frame = (int(np.ceil(max_y)), int(np.ceil(max_x)))

    parcels = []
    for k, feat in enumerate(features):
        polygons = _geometry_polygons(feat["geometry"])
        bits = mask_from_polygons(polygons, frame)
        if not bits.any():
            raise InputError(f"feature {k} rasterizes to an empty mask")
        rows = np.nonzero(bits.any(axis=1))[0]
        cols = np.nonzero(bits.any(axis=0))[0]
        local = bits[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
        props = feat.get("properties") or {}
        parcel_id = str(props.get("id", f"f{k + 1:04d}"))
        parcels.append(
            _parcel_from_bits(local, (int(rows[0]), int(cols[0])), parcel_id)
        )
    return parcels


def _parcel_from_bits(local: np.ndarray, origin: tuple[int, int],
                      parcel_id: str) -> Parcel:
    """Parcel over possibly multi-part bits; contour from the largest part."""
    labels, count = ndimage.label(
        local, structure=ndimage.generate_binary_structure(2, 1)
    )
    if count == 1:
        parcel = parcel_from_component(local, origin, parcel_id, "extracted")
        if parcel is not None and int(parcel.mask.bits.sum()) == int(local.sum()):
            return parcel
    # multi-part or hole-bearing feature: keep the bits exactly as given
    areas = np.bincount(labels.ravel())
    areas[0] = 0
    comp = int(np.argmax(areas))
    sl = ndimage.find_objects(labels)[comp - 1]
    traced = parcel_from_component(
        labels[sl] == comp,
        (origin[0] + sl[0].start, origin[1] + sl[1].start),
        parcel_id, "extracted",
    )
    if traced is None:
        raise InputError(f"feature {parcel_id!r} is too small to trace")
    return Parcel(
        parcel_id=parcel_id,
        contour=traced.contour,
        mask=BinaryMask(local),
        bbox_origin=origin,
        stage="extracted",
    )


def feature_labels(doc: dict) -> dict[str, tuple[str, float]]:
    """id -> (label, confidence) for every feature, with defaults."""
    out = {}
    for k, feat in enumerate(doc["features"]):
        props = feat.get("properties") or {}
        parcel_id = str(props.get("id", f"f{k + 1:04d}"))
        out[parcel_id] = (
            str(props.get("label", "Ag")),
            float(props.get("confidence", 0.0)),
        )
    return out
