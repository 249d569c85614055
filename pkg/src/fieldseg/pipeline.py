"""Four-stage orchestration: extract, filter, split, classify, emit.

A RunConfig carries every stage's parameters plus the stage toggles that
drive the ablation table.  All outputs are deterministic functions of
(config, seed, inputs): GeoJSON is emitted with sorted keys, CSV with
fixed float formatting, PNG through Pillow's default encoder.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import classify as _classify
from .edges import (DEFAULT_K_HIGH, DEFAULT_K_LOW, DEFAULT_SIGMA, EdgeMap,
                    binarize_edges, canny, fuse_edge_maps, load_edge_map,
                    local_hysteresis_params)
from .errors import ConfigError, InputError
from .evaluate import DEFAULT_LINK_MIN_OVERLAP, EvalReport, evaluate_parcels
from .extract import ExtractionParams, clean_edge_mask, extract_parcels
from .filters import ShapeThresholds, apply_filter, audit_records
from .geometry import (Parcel, directional_chamfer_build, edge_orientations)
from .raster import (BinaryMask, GrayImage, RgbImage, read_mask, read_rgb,
                     to_gray, write_rgb)
from .split import SplitParams, describe_cuts, split_localized, split_mincut
from .vector import geojson_to_parcels, load_geojson, parcels_to_geojson, \
    save_geojson

DEFAULT_GSD = 1.19
ABLATION_ROWS = (
    ("PP", ("pp",)),
    ("PP+MC", ("pp", "mc")),
    ("PP+LCD", ("pp", "lcd")),
    ("PP+MC+LCD", ("pp", "mc", "lcd")),
)


@dataclass(frozen=True)
class StageToggles:
    pp: bool = True
    mc: bool = True
    lcd: bool = True
    nonag: bool = False

    @classmethod
    def from_names(cls, names) -> "StageToggles":
        valid = {"pp", "mc", "lcd", "nonag"}
        chosen = set(names)
        unknown = chosen - valid
        if unknown:
            raise ConfigError(f"unknown stages: {sorted(unknown)}")
        return cls(**{name: name in chosen for name in valid})


@dataclass(frozen=True)
class ClassifiedParcel:
    parcel: Parcel
    label: str
    confidence: float


@dataclass(frozen=True)
class PipelineResult:
    parcels: tuple[ClassifiedParcel, ...]
    stage_counts: dict
    timings: dict
    dropped: tuple
    cut_debug: tuple = ()


@dataclass(frozen=True)
class RunConfig:
    input_image: Path | None = None
    edge_maps: tuple[Path, ...] = ()
    cropland_mask: Path | None = None
    gsd_m_per_px: float = DEFAULT_GSD
    stages: StageToggles = field(default_factory=StageToggles)
    extraction: ExtractionParams = field(default_factory=ExtractionParams)
    thresholds: ShapeThresholds | None = None
    split: SplitParams = field(default_factory=SplitParams)
    k_low: float = DEFAULT_K_LOW
    k_high: float = DEFAULT_K_HIGH
    gaussian_sigma: float = DEFAULT_SIGMA
    chamfer_bins: int = 16
    link_min_overlap: float = DEFAULT_LINK_MIN_OVERLAP
    log_base: str = "ln"
    model_path: Path | None = None
    output_dir: Path = Path(".")
    seed: int = 0
    debug_cuts: bool = False

    def __post_init__(self) -> None:
        if self.gsd_m_per_px <= 0:
            raise ConfigError("gsd_m_per_px must be positive")
        if self.stages.nonag and self.model_path is None:
            raise ConfigError("nonag stage requires a classifier model path")
        if self.thresholds is None:
            object.__setattr__(
                self, "thresholds",
                ShapeThresholds.from_meters(gsd_m_per_px=self.gsd_m_per_px),
            )


# --------------------------------------------------------------- config IO


_FILTER_METER_KEYS = {
    "min_perimeter_m": "min_perimeter_m",
    "min_area_m2": "min_area_m2",
    "convexity_max_ratio": "convexity_max_ratio",
    "convexity_area_cap_m2": "convexity_area_cap_m2",
    "min_area_perimeter_ratio_m": "min_area_perimeter_ratio_m",
    "ap_area_cap_m2": "ap_area_cap_m2",
    "min_aspect_ratio": "min_aspect_ratio",
    "sub_polygon_min_contour_px": "sub_polygon_min_contour_px",
}
_SPLIT_KEYS = ("beta", "curvature_window", "curvature_min_angle",
               "max_cut_euclid", "min_cut_contour", "min_sub_contour",
               "max_recursion_depth", "min_strength")
_EXTRACTION_KEYS = ("binarize_threshold", "dilate_radius", "erode_radius",
                    "min_component_area")
_EDGE_KEYS = ("k_low", "k_high", "gaussian_sigma", "chamfer_bins")
_EVAL_KEYS = ("link_min_overlap", "log_base")
_TOP_KEYS = ("gsd_m_per_px", "seed")


def _check_keys(section: str, table: dict, allowed) -> None:
    unknown = set(table) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {sorted(unknown)}")


def load_config(path: str | Path | None = None, **overrides) -> RunConfig:
    """RunConfig from defaults, then a TOML file, then keyword overrides."""
    doc: dict = {}
    if path is not None:
        try:
            doc = tomllib.loads(Path(path).read_text())
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    _check_keys("top level", doc, set(_TOP_KEYS) | {
        "stages", "extraction", "filter", "split", "edges", "classify",
        "evaluate",
    })

    gsd = float(doc.get("gsd_m_per_px", DEFAULT_GSD))
    seed = int(doc.get("seed", 0))

    stage_tbl = doc.get("stages", {})
    _check_keys("stages", stage_tbl, ("pp", "mc", "lcd", "nonag"))
    stages = StageToggles(**{k: bool(v) for k, v in stage_tbl.items()})

    ext_tbl = doc.get("extraction", {})
    _check_keys("extraction", ext_tbl, _EXTRACTION_KEYS)
    extraction = ExtractionParams(**ext_tbl)

    filt_tbl = doc.get("filter", {})
    _check_keys("filter", filt_tbl, _FILTER_METER_KEYS)
    thresholds = ShapeThresholds.from_meters(
        gsd_m_per_px=gsd,
        **{_FILTER_METER_KEYS[k]: v for k, v in filt_tbl.items()},
    )

    split_tbl = dict(doc.get("split", {}))
    _check_keys("split", split_tbl, _SPLIT_KEYS)
    split_tbl.setdefault("min_sub_contour", thresholds.sub_polygon_min_contour)
    split_params = SplitParams(**split_tbl)

    edge_tbl = doc.get("edges", {})
    _check_keys("edges", edge_tbl, _EDGE_KEYS)

    cls_tbl = doc.get("classify", {})
    _check_keys("classify", cls_tbl, ("model",))

    eval_tbl = doc.get("evaluate", {})
    _check_keys("evaluate", eval_tbl, _EVAL_KEYS)

    cfg = RunConfig(
        gsd_m_per_px=gsd,
        seed=seed,
        stages=stages,
        extraction=extraction,
        thresholds=thresholds,
        split=split_params,
        k_low=float(edge_tbl.get("k_low", DEFAULT_K_LOW)),
        k_high=float(edge_tbl.get("k_high", DEFAULT_K_HIGH)),
        gaussian_sigma=float(edge_tbl.get("gaussian_sigma", DEFAULT_SIGMA)),
        chamfer_bins=int(edge_tbl.get("chamfer_bins", 16)),
        link_min_overlap=float(
            eval_tbl.get("link_min_overlap", DEFAULT_LINK_MIN_OVERLAP)
        ),
        log_base=str(eval_tbl.get("log_base", "ln")),
        model_path=Path(cls_tbl["model"]) if "model" in cls_tbl else None,
    )
    return replace(cfg, **overrides) if overrides else cfg


# ---------------------------------------------------------------- pipeline


def _build_edge_map(cfg: RunConfig, gray: GrayImage,
                    cropland: np.ndarray) -> EdgeMap:
    if cfg.edge_maps:
        maps = [load_edge_map(p) for p in cfg.edge_maps]
        fused = fuse_edge_maps(maps)
        if fused.prob.shape != gray.data.shape:
            raise InputError(
                f"edge map shape {fused.prob.shape} != image "
                f"{gray.data.shape}"
            )
        return fused
    params = local_hysteresis_params(
        gray, BinaryMask(cropland), cfg.k_low, cfg.k_high,
        cfg.gaussian_sigma,
    )
    return canny(gray, params)


def run_pipeline(cfg: RunConfig) -> PipelineResult:
    """Extract, filter (pp), split (mc then lcd), classify (nonag)."""
    if cfg.input_image is None:
        raise InputError("an input image is required")
    img = read_rgb(cfg.input_image)
    gray = to_gray(img)
    if cfg.cropland_mask is not None:
        cropland = read_mask(cfg.cropland_mask).bits
        if cropland.shape != gray.data.shape:
            raise InputError("cropland mask does not match the image frame")
    else:
        cropland = np.ones_like(gray.data, dtype=bool)

    timings: dict[str, float] = {}
    counts: dict[str, int] = {}

    t0 = time.perf_counter()
    emap = _build_edge_map(cfg, gray, cropland)
    parcels = extract_parcels(emap, BinaryMask(cropland), cfg.extraction)
    timings["extract"] = time.perf_counter() - t0
    counts["extracted"] = len(parcels)

    dropped: tuple = ()
    if cfg.stages.pp:
        t0 = time.perf_counter()
        parcels, dropped_pairs = apply_filter(parcels, cfg.thresholds)
        dropped = tuple(dropped_pairs)
        timings["filter"] = time.perf_counter() - t0
        counts["filtered"] = len(parcels)

    debug: list[dict] = []
    if cfg.stages.mc:
        t0 = time.perf_counter()
        cleaned = clean_edge_mask(
            binarize_edges(emap, cfg.extraction.binarize_threshold),
            cfg.extraction,
        )
        dcd = directional_chamfer_build(
            cleaned, edge_orientations(emap), cfg.chamfer_bins
        )
        split_out: list[Parcel] = []
        for parcel in parcels:
            if cfg.debug_cuts:
                debug.append(describe_cuts(parcel, emap, dcd, cfg.split))
            split_out.extend(split_mincut(parcel, emap, dcd, cfg.split))
        parcels = split_out
        timings["min_cut"] = time.perf_counter() - t0
        counts["min_cut"] = len(parcels)

    if cfg.stages.lcd:
        t0 = time.perf_counter()
        parcels = [
            child
            for parcel in parcels
            for child in split_localized(
                parcel, gray, cfg.extraction, cfg.thresholds,
                cfg.k_low, cfg.k_high, cfg.gaussian_sigma,
            )
        ]
        timings["localized"] = time.perf_counter() - t0
        counts["localized"] = len(parcels)

    t0 = time.perf_counter()
    if cfg.stages.nonag:
        model = _classify.load_model(cfg.model_path)
        labeled = tuple(
            ClassifiedParcel(p, *_classify.predict(
                model, _classify.extract_features(p, img)
            ))
            for p in parcels
        )
    else:
        labeled = tuple(ClassifiedParcel(p, "Ag", 0.0) for p in parcels)
    timings["classify"] = time.perf_counter() - t0
    counts["final"] = len(labeled)

    return PipelineResult(labeled, counts, timings, dropped, tuple(debug))


def evaluate_result(result: PipelineResult, gt_doc: dict,
                    frame: tuple[int, int], cfg: RunConfig) -> EvalReport:
    gt = geojson_to_parcels(gt_doc, frame)
    det = [cp.parcel for cp in result.parcels]
    return evaluate_parcels(gt, det, cfg.link_min_overlap, cfg.log_base,
                            frame)


# --------------------------------------------------------------- emission


def _overlay(img: RgbImage, result: PipelineResult) -> RgbImage:
    """Final parcels tinted over the input: Ag yellow, non-Ag purple."""
    out = img.data.astype(np.float64)
    colors = {"Ag": (255.0, 255.0, 0.0), "NonAg": (160.0, 32.0, 240.0)}
    for cp in result.parcels:
        r0, c0 = cp.parcel.bbox_origin
        h, w = cp.parcel.mask.bits.shape
        region = out[r0 : r0 + h, c0 : c0 + w]
        color = np.array(colors[cp.label])
        blended = 0.55 * region + 0.45 * color[None, None, :]
        region[cp.parcel.mask.bits] = blended[cp.parcel.mask.bits]
    return RgbImage(np.floor(out + 0.5).clip(0, 255).astype(np.uint8))


def _metrics_row(stage_name: str, report: EvalReport) -> dict:
    return {
        "stages": stage_name,
        "precision": f"{report.precision:.6f}",
        "recall": f"{report.recall:.6f}",
        "f1": f"{report.f1:.6f}",
        "agglomeration": f"{report.agglomeration:.6f}",
        "fragmentation": f"{report.fragmentation:.6f}",
        "detection_rate": f"{report.detection_rate:.6f}",
    }


_METRIC_FIELDS = ("stages", "precision", "recall", "f1", "agglomeration",
                  "fragmentation", "detection_rate")


def _write_csv(path: Path, rows: list[dict]) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=_METRIC_FIELDS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    path.write_text(buf.getvalue())


def _stage_name(stages: StageToggles) -> str:
    parts = ["PP"] if stages.pp else ["RAW"]
    if stages.mc:
        parts.append("MC")
    if stages.lcd:
        parts.append("LCD")
    if stages.nonag:
        parts.append("NONAG")
    return "+".join(parts)


def emit_run(cfg: RunConfig, gt_path: str | Path | None = None) -> Path:
    """Execute the configured pipeline and write all artifacts.

    Returns the output directory.  Artifacts: boundaries.geojson,
    overlay.png, audit.json, metrics.csv (with ground truth), and
    cuts_debug.json under --debug-cuts.
    """
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = run_pipeline(cfg)
    if cfg.debug_cuts:
        (out_dir / "cuts_debug.json").write_text(
            json.dumps(list(result.cut_debug), sort_keys=True) + "\n"
        )

    items = [(cp.parcel, cp.label, cp.confidence) for cp in result.parcels]
    save_geojson(parcels_to_geojson(items), out_dir / "boundaries.geojson")

    img = read_rgb(cfg.input_image)
    write_rgb(_overlay(img, result), out_dir / "overlay.png")

    (out_dir / "audit.json").write_text(
        json.dumps(audit_records(result.dropped), sort_keys=True) + "\n"
    )

    if gt_path is not None:
        gt_doc = load_geojson(gt_path)
        report = evaluate_result(
            result, gt_doc, (img.height, img.width), cfg
        )
        _write_csv(out_dir / "metrics.csv",
                   [_metrics_row(_stage_name(cfg.stages), report)])
    return out_dir


def run_ablation(cfg: RunConfig, gt_path: str | Path) -> list[dict]:
    """PP / PP+MC / PP+LCD / PP+MC+LCD, evaluated and written as CSV.

    Classification is forced off: the ablation isolates the boundary
    stages, and its metrics compare geometry only.
    """
    gt_doc = load_geojson(gt_path)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    img = read_rgb(cfg.input_image)
    frame = (img.height, img.width)
    rows = []
    for name, stage_names in ABLATION_ROWS:
        row_cfg = replace(
            cfg,
            stages=StageToggles.from_names(stage_names),
            debug_cuts=False,
        )
        result = run_pipeline(row_cfg)
        report = evaluate_result(result, gt_doc, frame, row_cfg)
        rows.append(_metrics_row(name, report))
        items = [(cp.parcel, cp.label, cp.confidence)
                 for cp in result.parcels]
        slug = name.lower().replace("+", "_")
        save_geojson(parcels_to_geojson(items),
                     out_dir / f"boundaries_{slug}.geojson")
    _write_csv(out_dir / "ablation.csv", rows)
    return rows


def train_command(manifest: str | Path, out_model: str | Path, folds: int,
                  seed: int, n_trees: int = 100, max_depth: int = 12):
    """Cross-validate on the manifest, then train and persist a model."""
    samples = _classify.load_manifest(manifest)
    report = _classify.cross_validate(samples, folds, seed, n_trees,
                                      max_depth)
    model = _classify.train_forest(samples, n_trees, max_depth, seed)
    _classify.save_model(model, out_model)
    return report, model
