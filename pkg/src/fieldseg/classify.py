"""Stage 4: per-parcel features and an Ag vs non-Ag tree ensemble.

Feature layout (311 values):
  [0:7]     shape: perimeter, area, hull perimeter, hull area,
            hull_area/area, area/perimeter, aspect ratio
  [7:55]    color: 16-bin histogram per RGB channel, each channel
            normalized to sum 1
  [55:311]  texture: 256-bin normalized histogram of 8-sample
            radius-3 local binary patterns

The forest is grown from scratch: per-tree bootstrap, Gini splits over
ceil(sqrt(n_features)) random features per node, majority vote with ties
going to Ag (favoring recall of fields).  Everything is deterministic
under a fixed seed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import InputError, ModelError
from .geometry import (Parcel, aspect_ratio, convex_hull_metrics,
                       parcel_from_component)
from .raster import RgbImage, read_mask, read_rgb, to_gray

CLASS_LABELS = ("Ag", "NonAg")
FEATURE_LENGTH = 7 + 48 + 256
MODEL_VERSION = 1

# 8 samples on the radius-3 ring, nearest pixel, counter-clockwise from east
_LBP_OFFSETS = ((0, 3), (2, 2), (3, 0), (2, -2), (0, -3), (-2, -2), (-3, 0), (-2, 2))


@dataclass(frozen=True)
class LabeledParcel:
    """One training sample: a feature vector and its class label."""

    features: np.ndarray
    label: str

    def __post_init__(self) -> None:
        if self.label not in CLASS_LABELS:
            raise InputError(f"unknown class label {self.label!r}")
        if self.features.ndim != 1:
            raise InputError("features must be a flat vector")


def _color_block(img: RgbImage, parcel: Parcel) -> np.ndarray:
    r0, c0 = parcel.bbox_origin
    h, w = parcel.mask.bits.shape
    crop = img.data[r0 : r0 + h, c0 : c0 + w]
    inside = parcel.mask.bits
    out = np.empty(48)
    for ch in range(3):
        values = crop[:, :, ch][inside]
        hist = np.bincount(values >> 4, minlength=16).astype(np.float64)
        out[ch * 16 : (ch + 1) * 16] = hist / hist.sum()
    return out


def _lbp_block(gray: np.ndarray, parcel: Parcel) -> np.ndarray:
    """Normalized histogram of 8-bit LBP codes over interior pixels.

    Interior means every ring sample lands on another parcel pixel, so the
    codes never read ground outside the parcel; with the >= comparison a
    constant patch codes to 255.
    """
    r0, c0 = parcel.bbox_origin
    h, w = parcel.mask.bits.shape
    pad = 3
    g = np.pad(gray[r0 : r0 + h, c0 : c0 + w].astype(np.int16), pad)
    m = np.pad(parcel.mask.bits, pad, constant_values=False)
    center_g = g[pad : pad + h, pad : pad + w]
    interior = parcel.mask.bits.copy()
    codes = np.zeros((h, w), dtype=np.int64)
    for bit, (dr, dc) in enumerate(_LBP_OFFSETS):
        ng = g[pad + dr : pad + dr + h, pad + dc : pad + dc + w]
        nm = m[pad + dr : pad + dr + h, pad + dc : pad + dc + w]
        interior &= nm
        codes |= (ng >= center_g).astype(np.int64) << bit
    if not interior.any():
        raise InputError(
            f"parcel {parcel.parcel_id} too small for radius-3 texture sampling"
        )
    hist = np.bincount(codes[interior], minlength=256).astype(np.float64)
    return hist / hist.sum()


def extract_features(parcel: Parcel, img: RgbImage) -> np.ndarray:
    """311-value shape/color/texture descriptor of one parcel."""
    r0, c0 = parcel.bbox_origin
    h, w = parcel.mask.bits.shape
    if r0 < 0 or c0 < 0 or r0 + h > img.height or c0 + w > img.width:
        raise InputError("parcel mask leaves the image bounds")
    _, hull_area, hull_perimeter = convex_hull_metrics(parcel)
    area = float(parcel.area_px)
    perimeter = parcel.perimeter_px
    shape = np.array([
        perimeter,
        area,
        hull_perimeter,
        hull_area,
        hull_area / area,
        area / perimeter,
        aspect_ratio(parcel),
    ])
    gray = to_gray(img).data
    return np.concatenate([shape, _color_block(img, parcel),
                           _lbp_block(gray, parcel)])


# ---------------------------------------------------------------- forest


@dataclass(frozen=True)
class ForestModel:
    """Trained ensemble; trees are JSON-shaped node lists.

    Internal nodes: {"feat", "thresh", "left", "right"} with x[feat] <=
    thresh routing left.  Leaves: {"leaf": label, "votes": [n per class]}.
    """

    trees: tuple
    n_trees: int
    max_depth: int
    feature_subsample: int
    n_features: int
    seed: int
    class_labels: tuple[str, ...] = CLASS_LABELS


def _best_split(X: np.ndarray, y: np.ndarray, feats: np.ndarray):
    """Lowest-Gini axis split among the given features, or None.

    Ties go to the earlier feature in `feats`, then the lower threshold.
    """
    n = len(y)
    cols = X[:, feats]
    order = np.argsort(cols, axis=0, kind="stable")
    vals = np.take_along_axis(cols, order, axis=0)
    ones = np.cumsum(y[order], axis=0)

    left_n = np.arange(1, n, dtype=np.float64)[:, None]
    right_n = n - left_n
    left1 = ones[:-1].astype(np.float64)
    right1 = ones[-1][None, :] - left1
    gini_l = 1.0 - (left1 / left_n) ** 2 - ((left_n - left1) / left_n) ** 2
    gini_r = 1.0 - (right1 / right_n) ** 2 - ((right_n - right1) / right_n) ** 2
    score = (left_n * gini_l + right_n * gini_r) / n
    score = np.where(vals[1:] > vals[:-1], score, np.inf)

    best_rows = np.argmin(score, axis=0)
    col_scores = score[best_rows, np.arange(score.shape[1])]
    if not np.isfinite(col_scores).any():
        return None
    col = int(np.argmin(col_scores))
    row = int(best_rows[col])
    thresh = float((vals[row, col] + vals[row + 1, col]) / 2.0)
    return int(feats[col]), thresh, float(col_scores[col])


def _grow(X: np.ndarray, y: np.ndarray, depth_left: int, subsample: int,
          rng: np.random.Generator, nodes: list) -> int:
    count1 = int(y.sum())
    count0 = len(y) - count1

    def leaf() -> int:
        label = CLASS_LABELS[0] if count0 >= count1 else CLASS_LABELS[1]
        nodes.append({"leaf": label, "votes": [count0, count1]})
        return len(nodes) - 1

    if depth_left <= 0 or count0 == 0 or count1 == 0 or len(y) < 2:
        return leaf()
    feats = np.sort(rng.choice(X.shape[1], size=subsample, replace=False))
    split = _best_split(X, y, feats)
    if split is None:
        return leaf()
    feat, thresh, _ = split
    go_left = X[:, feat] <= thresh
    left = _grow(X[go_left], y[go_left], depth_left - 1, subsample, rng, nodes)
    right = _grow(X[~go_left], y[~go_left], depth_left - 1, subsample, rng, nodes)
    nodes.append({"feat": feat, "thresh": thresh, "left": left, "right": right})
    return len(nodes) - 1


def train_forest(samples: list[LabeledParcel], n_trees: int = 100,
                 max_depth: int = 12, seed: int = 0,
                 feature_subsample: int | None = None) -> ForestModel:
    """Bootstrap-aggregated Gini trees, reproducible under the seed."""
    if len(samples) < 2:
        raise ModelError("need at least 2 training samples")
    if n_trees < 1 or max_depth < 1:
        raise ModelError("n_trees and max_depth must be >= 1")
    n_features = len(samples[0].features)
    X = np.stack([s.features for s in samples]).astype(np.float64)
    if X.shape[1] != n_features:
        raise InputError("inconsistent feature lengths")
    y = np.array([CLASS_LABELS.index(s.label) for s in samples], dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise ModelError("training data contains a single class")
    subsample = feature_subsample or math.isqrt(n_features - 1) + 1
    subsample = min(subsample, n_features)

    trees = []
    for child_seed in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child_seed)
        pick = rng.integers(0, len(y), size=len(y))
        nodes: list = []
        _grow(X[pick], y[pick], max_depth, subsample, rng, nodes)
        trees.append(tuple(nodes))
    return ForestModel(tuple(trees), n_trees, max_depth, subsample,
                       n_features, seed)


def _tree_vote(nodes, x: np.ndarray) -> str:
    node = nodes[-1]
    while "leaf" not in node:
        node = nodes[node["left"] if x[node["feat"]] <= node["thresh"]
                     else node["right"]]
    return node["leaf"]


def predict(model: ForestModel, features: np.ndarray) -> tuple[str, float]:
    """(majority label, winning-vote fraction); ties go to the first class."""
    if len(features) != model.n_features:
        raise InputError(
            f"feature length {len(features)} != model's {model.n_features}"
        )
    counts = dict.fromkeys(model.class_labels, 0)
    for nodes in model.trees:
        counts[_tree_vote(nodes, features)] += 1
    winner = max(model.class_labels, key=lambda lbl: counts[lbl])
    return winner, counts[winner] / model.n_trees


# ------------------------------------------------------- cross-validation


@dataclass(frozen=True)
class CvReport:
    fold_confusions: tuple
    confusion: np.ndarray
    accuracy: float
    macro_f1: float
    class_labels: tuple[str, ...] = CLASS_LABELS


def _macro_f1(confusion: np.ndarray) -> float:
    scores = []
    for k in range(confusion.shape[0]):
        tp = confusion[k, k]
        fp = confusion[:, k].sum() - tp
        fn = confusion[k, :].sum() - tp
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


def cross_validate(samples: list[LabeledParcel], folds: int, seed: int = 0,
                   n_trees: int = 100, max_depth: int = 12) -> CvReport:
    """Stratified k-fold CV; confusion rows are true class, columns predicted."""
    if folds < 2:
        raise InputError("need at least 2 folds")
    if len(samples) < folds:
        raise InputError(f"{folds} folds need at least {folds} samples")
    y = np.array([CLASS_LABELS.index(s.label) for s in samples])
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF01D]))
    assignment = np.empty(len(samples), dtype=np.int64)
    for cls in range(len(CLASS_LABELS)):
        members = np.nonzero(y == cls)[0]
        rng.shuffle(members)
        assignment[members] = np.arange(len(members)) % folds

    fold_seeds = np.random.SeedSequence(seed).spawn(folds)
    fold_confusions = []
    total = np.zeros((2, 2), dtype=np.int64)
    for k in range(folds):
        train = [s for s, a in zip(samples, assignment) if a != k]
        test = [(s, int(CLASS_LABELS.index(s.label)))
                for s, a in zip(samples, assignment) if a == k]
        if len({s.label for s in train}) < 2:
            raise ModelError(f"fold {k} leaves a single class in training data")
        model = train_forest(train, n_trees, max_depth,
                             seed=int(fold_seeds[k].generate_state(1)[0]))
        confusion = np.zeros((2, 2), dtype=np.int64)
        for sample, true_cls in test:
            pred, _ = predict(model, sample.features)
            confusion[true_cls, CLASS_LABELS.index(pred)] += 1
        fold_confusions.append(confusion)
        total += confusion
    accuracy = float(np.trace(total) / total.sum())
    return CvReport(tuple(fold_confusions), total, accuracy, _macro_f1(total))


# ------------------------------------------------------------ persistence


def save_model(model: ForestModel, path: str | Path) -> None:
    doc = {
        "version": MODEL_VERSION,
        "seed": model.seed,
        "params": {
            "n_trees": model.n_trees,
            "max_depth": model.max_depth,
            "feature_subsample": model.feature_subsample,
            "n_features": model.n_features,
            "class_labels": list(model.class_labels),
        },
        "trees": [{"nodes": list(nodes)} for nodes in model.trees],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_model(path: str | Path) -> ForestModel:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read model file {path}: {exc}") from exc
    if doc.get("version") != MODEL_VERSION:
        raise ModelError(f"unsupported model version {doc.get('version')!r}")
    try:
        params = doc["params"]
        return ForestModel(
            trees=tuple(tuple(t["nodes"]) for t in doc["trees"]),
            n_trees=params["n_trees"],
            max_depth=params["max_depth"],
            feature_subsample=params["feature_subsample"],
            n_features=params["n_features"],
            seed=doc["seed"],
            class_labels=tuple(params["class_labels"]),
        )
    except (KeyError, TypeError) as exc:
        raise ModelError(f"malformed model file {path}: {exc}") from exc


# --------------------------------------------------------- training data


def load_manifest(manifest_path: str | Path) -> list[LabeledParcel]:
    """Read training samples from a CSV manifest of id,label rows.

    Each id names an RGB crop {id}.png beside the manifest and, optionally,
    a {id}_mask.png parcel mask (otherwise the whole crop is the parcel).
    """
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    try:
        rows = list(csv.DictReader(manifest_path.open(newline="")))
    except OSError as exc:
        raise InputError(f"cannot read manifest {manifest_path}: {exc}") from exc
    if not rows or "id" not in rows[0] or "label" not in rows[0]:
        raise InputError("manifest needs a header row with id,label columns")

    samples: list[LabeledParcel] = []
    for row in rows:
        crop_id = row["id"].strip()
        label = row["label"].strip()
        img = read_rgb(base / f"{crop_id}.png")
        mask_file = base / f"{crop_id}_mask.png"
        if mask_file.exists():
            bits = read_mask(mask_file).bits
            if bits.shape != (img.height, img.width):
                raise InputError(f"mask size mismatch for sample {crop_id!r}")
        else:
            bits = np.ones((img.height, img.width), dtype=bool)
        parcel = _parcel_from_sample_mask(bits, crop_id)
        samples.append(LabeledParcel(extract_features(parcel, img), label))
    return samples


def _parcel_from_sample_mask(bits: np.ndarray, crop_id: str) -> Parcel:
    """Largest component of a sample mask as a Parcel."""
    labels, count = ndimage.label(
        bits, structure=ndimage.generate_binary_structure(2, 1)
    )
    if count == 0:
        raise InputError(f"sample {crop_id!r} has an empty mask")
    areas = np.bincount(labels.ravel())
    areas[0] = 0
    comp = int(np.argmax(areas))
    sl = ndimage.find_objects(labels)[comp - 1]
    parcel = parcel_from_component(labels[sl] == comp,
                                   (sl[0].start, sl[1].start),
                                   crop_id, "extracted")
    if parcel is None:
        raise InputError(f"sample {crop_id!r} mask is too small to trace")
    return parcel
