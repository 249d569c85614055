"""Field parcel delineation for ortho-rectified RGB imagery.

Pipeline: edge-derived candidate polygons, shape filtering, min-cut and
localized-recut splitting of merged parcels, then Ag / non-Ag labeling
with a random forest.  See the README for the CLI surface.
"""

from .classify import (CLASS_LABELS, FEATURE_LENGTH, CvReport,
                       LabeledParcel, cross_validate, extract_features,
                       load_manifest, load_model, predict, save_model,
                       train_forest)
from .edges import (EdgeMap, HysteresisParams, binarize_edges, canny,
                    fuse_edge_maps, load_edge_map, local_hysteresis_params,
                    save_edge_map)
from .errors import ConfigError, FieldSegError, InputError, ModelError
from .evaluate import (EvalReport, MappingInstance, aggregate,
                       agglomeration_metric, build_mapping,
                       evaluate_parcels, fragmentation_metric,
                       instance_metrics)
from .extract import ExtractionParams, clean_edge_mask, extract_parcels
from .filters import (RULE_NONE, RULE_SMALL, RULE_NONCONVEX, RULE_ELONGATED,
                      RULE_THIN_STRIP, ShapeThresholds, apply_filter,
                      audit_records, judge)
from .geometry import (Contour, Parcel, aspect_ratio, convex_hull,
                       convex_hull_metrics, directional_chamfer_build,
                       directional_chamfer_query, edge_orientations,
                       fill_contour, mean_width, parcel_from_component,
                       trace_boundary, trace_contours)
from .pipeline import (ClassifiedParcel, PipelineResult, RunConfig,
                       StageToggles, emit_run, load_config, run_ablation,
                       run_pipeline)
from .raster import (BinaryMask, GrayImage, RgbImage, read_mask, read_rgb,
                     to_gray, write_mask, write_rgb)
from .split import (Cut, SplitParams, candidate_cuts, describe_cuts,
                    find_cut_points, split_localized, split_mincut)
from .vector import (geojson_to_parcels, load_geojson, mask_from_polygons,
                     parcels_to_geojson, polygons_from_mask, save_geojson)

__version__ = "0.1.0"
