"""Deterministic synthetic scenes with known ground truth.

Every generator is a pure function of its parameters and seed, so scenes
can be regenerated byte-identically for determinism checks.  Intensities
are chosen against the default hysteresis multipliers (0.66/1.33 of the
mean): grid boundaries are strong everywhere, while the two-tone block
hides an internal step that only clears the thresholds once they are
rescaled to the block's own darker mean.
"""

from __future__ import annotations

import numpy as np

from .edges import EdgeMap
from .errors import InputError
from .raster import BinaryMask, RgbImage, dilate

AG = "Ag"
NONAG = "NonAg"


def _rgb(gray: np.ndarray) -> RgbImage:
    return RgbImage(np.repeat(gray[:, :, None], 3, axis=2).astype(np.uint8))


def _rect_feature(fid: str, x0: int, y0: int, x1: int, y1: int,
                  label: str = AG) -> dict:
    ring = [[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]
    return {
        "type": "Feature",
        "geometry": {"type": "Polygon", "coordinates": [ring]},
        "properties": {"id": fid, "label": label, "confidence": 1.0},
    }


def _collection(features: list[dict]) -> dict:
    return {"type": "FeatureCollection", "features": features}


def _blocky_noise(rng: np.random.Generator, size: int, block: int = 8
                  ) -> np.ndarray:
    """High-variance patchwork texture used for non-Ag ground."""
    cells = (size + block - 1) // block
    coarse = rng.integers(0, 256, size=(cells, cells, 3))
    return np.repeat(np.repeat(coarse, block, 0), block, 1)[:size, :size]


def make_grid_scene(rows: int = 10, cols: int = 10, cell_px: int = 60,
                    boundary_px: int = 2, cell_intensity: int = 170,
                    boundary_intensity: int = 20, jitter: int = 6,
                    n_nonag_pockets: int = 0, seed: int = 0
                    ) -> tuple[RgbImage, dict]:
    """Field grid with strong boundaries; cell_px is the grid pitch.

    Each field occupies (cell_px - boundary_px)^2 pixels.  Pockets, if
    requested, replace whole cells with non-Ag patchwork texture.
    """
    if min(rows, cols, cell_px, boundary_px) < 1 or cell_px <= boundary_px:
        raise InputError("grid dimensions must be positive, pitch > boundary")
    if n_nonag_pockets > rows * cols:
        raise InputError("more non-Ag pockets than cells")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x981D]))
    height = rows * cell_px + boundary_px
    width = cols * cell_px + boundary_px
    gray = np.full((height, width), boundary_intensity, dtype=np.int64)

    pockets = set()
    if n_nonag_pockets:
        order = rng.permutation(rows * cols)
        pockets = set(order[:n_nonag_pockets].tolist())

    img = np.repeat(gray[:, :, None], 3, axis=2)
    features = []
    for r in range(rows):
        for c in range(cols):
            y0 = r * cell_px + boundary_px
            x0 = c * cell_px + boundary_px
            side = cell_px - boundary_px
            if r * cols + c in pockets:
                img[y0 : y0 + side, x0 : x0 + side] = _blocky_noise(rng, side)
                label = NONAG
            else:
                tone = cell_intensity + (
                    rng.integers(-jitter, jitter + 1, size=(side, side))
                    if jitter else 0
                )
                img[y0 : y0 + side, x0 : x0 + side] = np.clip(
                    tone, 0, 255
                )[..., None] if jitter else cell_intensity
                label = AG
            fid = f"g{r * cols + c + 1:04d}"
            features.append(
                _rect_feature(fid, x0, y0, x0 + side, y0 + side, label)
            )
    return RgbImage(img.astype(np.uint8)), _collection(features)


def make_two_tone_scene(seed: int = 0) -> tuple[RgbImage, dict]:
    """Bright scene holding one dark block whose two tones merge globally.

    Two full-height stripes (30 and 80) on a 210 background.  The 30|80
    step sits below the global weak threshold (low is about 0.38 against
    the bright frame mean), so extraction sees only the stripes' outer
    flanks and keeps them merged into one band.  Rescaled to the band's
    own mean (55) the same step clears the strong threshold (about 0.29)
    and runs border to border, so the localized recut separates the
    stripes.  Full-height geometry keeps every detected line terminating
    at the frame edge: no corners, whose suppression under non-maximum
    selection would otherwise leak the enclosure.  Ground truth is the
    30-tone stripe; the 80 stripe is merged clutter.
    """
    del seed  # deterministic by construction; kept for a uniform signature
    gray = np.full((200, 200), 210, dtype=np.uint8)
    gray[:, 60:100] = 30        # field stripe
    gray[:, 100:140] = 80       # clutter stripe
    gt = _collection([_rect_feature("g0001", 60, 0, 100, 200, AG)])
    return _rgb(gray), gt


def make_dumbbell_region(lobe_px: int = 60, neck_w: int = 20,
                         neck_len: int = 100, margin: int = 20
                         ) -> np.ndarray:
    """Two square lobes joined by a horizontal corridor, as a mask."""
    if neck_w >= lobe_px or neck_len < 1:
        raise InputError("neck must be narrower than the lobes")
    height = lobe_px + 2 * margin
    width = 2 * lobe_px + neck_len + 2 * margin
    bits = np.zeros((height, width), dtype=bool)
    top = margin
    bits[top : top + lobe_px, margin : margin + lobe_px] = True
    x1 = margin + lobe_px + neck_len
    bits[top : top + lobe_px, x1 : x1 + lobe_px] = True
    ny = top + (lobe_px - neck_w) // 2
    bits[ny : ny + neck_w, margin + lobe_px : x1] = True
    return bits


def dumbbell_edge_map(region: np.ndarray, lobe_px: int = 60,
                      neck_w: int = 20, neck_len: int = 100,
                      margin: int = 20, mouth_prob: float = 0.45,
                      mark_prob: float = 0.9) -> EdgeMap:
    """Edge evidence for the dumbbell: a solid outline plus mouth hints.

    The corridor mouths get sub-binarization probability along the mouth
    line (so extraction stays merged while C_prob sees support) and firm
    vertical marks just outside the region (orientation-matched chamfer
    evidence that never bites into the mask).
    """
    prob = np.zeros(region.shape)
    outline = dilate(BinaryMask(region), 1).bits & ~region
    prob[outline] = 1.0
    ny = margin + (lobe_px - neck_w) // 2
    for mouth_x in (margin + lobe_px, margin + lobe_px + neck_len - 1):
        for guide_x in (mouth_x - 1, mouth_x, mouth_x + 1):
            line = prob[ny : ny + neck_w, guide_x]
            line[line < mouth_prob] = mouth_prob
            prob[ny : ny + neck_w, guide_x] = line
        prob[ny - 5 : ny, mouth_x] = mark_prob
        prob[ny + neck_w : ny + neck_w + 5, mouth_x] = mark_prob
    prob[region & (prob >= 0.5)] = mouth_prob  # marks never enter the mask
    return EdgeMap(prob)


def make_dumbbell_scene(lobe_px: int = 60, neck_w: int = 20,
                        neck_len: int = 100, margin: int = 20
                        ) -> tuple[RgbImage, EdgeMap, dict]:
    """Flat image + edge map + two-lobe ground truth for ablation runs.

    The corridor belongs to no ground-truth field, so splitting it off
    converts its pixels from false positives into an unmatched detection.
    """
    region = make_dumbbell_region(lobe_px, neck_w, neck_len, margin)
    emap = dumbbell_edge_map(region, lobe_px, neck_w, neck_len, margin)
    img = _rgb(np.full(region.shape, 128, dtype=np.uint8))
    top = margin
    x2 = margin + lobe_px + neck_len
    gt = _collection([
        _rect_feature("g0001", margin, top, margin + lobe_px, top + lobe_px),
        _rect_feature("g0002", x2, top, x2 + lobe_px, top + lobe_px),
    ])
    return img, emap, gt


def make_three_lobe_region(lobe_px: int = 60, neck_w: int = 20,
                           neck_len: int = 10, margin: int = 20
                           ) -> np.ndarray:
    """Three lobes chained by two short necks."""
    height = lobe_px + 2 * margin
    width = 3 * lobe_px + 2 * neck_len + 2 * margin
    bits = np.zeros((height, width), dtype=bool)
    top = margin
    ny = top + (lobe_px - neck_w) // 2
    x = margin
    for k in range(3):
        bits[top : top + lobe_px, x : x + lobe_px] = True
        if k < 2:
            bits[ny : ny + neck_w, x + lobe_px : x + lobe_px + neck_len] = True
        x += lobe_px + neck_len
    return bits


def three_lobe_edge_map(lobe_px: int = 60, neck_w: int = 20,
                        neck_len: int = 10, margin: int = 20) -> EdgeMap:
    region = make_three_lobe_region(lobe_px, neck_w, neck_len, margin)
    prob = np.zeros(region.shape)
    prob[dilate(BinaryMask(region), 1).bits & ~region] = 1.0
    ny = margin + (lobe_px - neck_w) // 2
    for k in range(2):
        base = margin + (k + 1) * lobe_px + k * neck_len
        for mouth_x in (base, base + neck_len - 1):
            for guide_x in (mouth_x - 1, mouth_x, mouth_x + 1):
                line = prob[ny : ny + neck_w, guide_x]
                line[line < 0.45] = 0.45
                prob[ny : ny + neck_w, guide_x] = line
            prob[ny - 5 : ny, mouth_x] = 0.9
            prob[ny + neck_w : ny + neck_w + 5, mouth_x] = 0.9
    prob[region & (prob >= 0.5)] = 0.45
    return EdgeMap(prob)


def make_training_set(out_dir, n: int = 400, size: int = 64, seed: int = 0):
    """Write a separable Ag/non-Ag crop manifest; returns the CSV path.

    Ag crops are smooth vegetation-toned gradients with light noise;
    non-Ag crops are high-variance patchwork.  Half of each.
    """
    import csv
    from pathlib import Path

    from .raster import write_rgb

    if n < 2 or n % 2:
        raise InputError("need an even sample count of at least 2")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7A15]))
    rows = []
    for k in range(n):
        label = AG if k < n // 2 else NONAG
        if label == AG:
            base = np.array([
                rng.integers(50, 75), rng.integers(115, 150),
                rng.integers(45, 70),
            ])
            ramp = np.linspace(-8, 8, size)[None, :, None]
            noise = rng.normal(0.0, 3.0, size=(size, size, 3))
            img = base[None, None, :] + ramp + noise
        else:
            img = _blocky_noise(rng, size) + rng.normal(
                0.0, 20.0, size=(size, size, 3)
            )
        crop_id = f"s{k + 1:04d}"
        write_rgb(RgbImage(np.clip(np.floor(img + 0.5), 0, 255)
                           .astype(np.uint8)),
                  out_dir / f"{crop_id}.png")
        rows.append((crop_id, label))
    manifest = out_dir / "manifest.csv"
    with manifest.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label"])
        writer.writerows(rows)
    return manifest
