"""Stage 2: the four shape-complexity rules dropping noise and non-fields.

Rule order is fixed and only the first firing rule is reported, so the
audit trail states exactly why a polygon was discarded:

  r1  tiny speck: perimeter AND area below floor thresholds
  r2  strongly nonconvex but small: hull/area ratio with an area cap
      (large nonconvex polygons are left for the splitting stage)
  r3  elongated noise: low area/perimeter ratio with an area cap
  r4  thin strip (roads, waterways, hedges): low aspect ratio

Thresholds are physical (meters, square meters, hectares make sense for
fields) and converted to pixels through the ground-sample distance.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InputError
from .geometry import Parcel, aspect_ratio, convex_hull_metrics

RULE_NONE = "none"
RULE_SMALL = "r1_small"
RULE_NONCONVEX = "r2_nonconvex"
RULE_ELONGATED = "r3_elongated_noise"
RULE_THIN_STRIP = "r4_thin_strip"


@dataclass(frozen=True)
class ShapeThresholds:
    """Pixel-space gates for the four rules.

    sub_polygon_min_contour is not used here; it rides along so one block
    carries every shape threshold and the splitting stage reads it from
    the same place.
    """

    min_perimeter: float
    min_area: float
    convexity_max_ratio: float
    convexity_area_cap: float
    min_area_perimeter_ratio: float
    ap_area_cap: float
    min_aspect_ratio: float
    sub_polygon_min_contour: float = 60.0

    def __post_init__(self) -> None:
        for name in ("min_perimeter", "min_area", "convexity_area_cap",
                     "min_area_perimeter_ratio", "ap_area_cap",
                     "sub_polygon_min_contour"):
            if getattr(self, name) <= 0:
                raise InputError(f"{name} must be positive")
        if self.convexity_max_ratio <= 1.0:
            raise InputError("convexity_max_ratio must exceed 1")
        if not (0.0 < self.min_aspect_ratio < 1.0):
            raise InputError("min_aspect_ratio must lie in (0, 1)")

    @classmethod
    def from_meters(cls, gsd_m_per_px: float = 1.19,
                    min_perimeter_m: float = 60.0,
                    min_area_m2: float = 400.0,
                    convexity_max_ratio: float = 1.3,
                    convexity_area_cap_m2: float = 10_000.0,
                    min_area_perimeter_ratio_m: float = 2.0,
                    ap_area_cap_m2: float = 2_500.0,
                    min_aspect_ratio: float = 0.12,
                    sub_polygon_min_contour_px: float = 60.0) -> "ShapeThresholds":
        if gsd_m_per_px <= 0:
            raise InputError("ground-sample distance must be positive")
        sq = gsd_m_per_px * gsd_m_per_px
        return cls(
            min_perimeter=min_perimeter_m / gsd_m_per_px,
            min_area=min_area_m2 / sq,
            convexity_max_ratio=convexity_max_ratio,
            convexity_area_cap=convexity_area_cap_m2 / sq,
            min_area_perimeter_ratio=min_area_perimeter_ratio_m / gsd_m_per_px,
            ap_area_cap=ap_area_cap_m2 / sq,
            min_aspect_ratio=min_aspect_ratio,
            sub_polygon_min_contour=sub_polygon_min_contour_px,
        )


@dataclass(frozen=True)
class FilterVerdict:
    kept: bool
    rule_fired: str

    def __post_init__(self) -> None:
        if self.kept != (self.rule_fired == RULE_NONE):
            raise InputError("kept flag inconsistent with rule tag")


def rule1_small(p: Parcel, t: ShapeThresholds) -> bool:
    """Conjunction: a long thin feature with small area survives to rule 4."""
    return p.perimeter_px < t.min_perimeter and p.area_px < t.min_area


def rule2_nonconvex(p: Parcel, t: ShapeThresholds) -> bool:
    if p.area_px >= t.convexity_area_cap:
        return False
    _, hull_area, _ = convex_hull_metrics(p)
    return hull_area / p.area_px > t.convexity_max_ratio


def rule3_elongated_noise(p: Parcel, t: ShapeThresholds) -> bool:
    return (p.area_px / p.perimeter_px < t.min_area_perimeter_ratio
            and p.area_px < t.ap_area_cap)


def rule4_thin_strip(p: Parcel, t: ShapeThresholds) -> bool:
    return aspect_ratio(p) < t.min_aspect_ratio


_RULES = (
    (RULE_SMALL, rule1_small),
    (RULE_NONCONVEX, rule2_nonconvex),
    (RULE_ELONGATED, rule3_elongated_noise),
    (RULE_THIN_STRIP, rule4_thin_strip),
)


def judge(p: Parcel, t: ShapeThresholds) -> FilterVerdict:
    for tag, rule in _RULES:
        if rule(p, t):
            return FilterVerdict(kept=False, rule_fired=tag)
    return FilterVerdict(kept=True, rule_fired=RULE_NONE)


def apply_filter(parcels: list[Parcel], t: ShapeThresholds
                 ) -> tuple[list[Parcel], list[tuple[Parcel, FilterVerdict]]]:
    """Partition parcels into kept and dropped-with-verdict, ordered by id."""
    kept: list[Parcel] = []
    dropped: list[tuple[Parcel, FilterVerdict]] = []
    for p in sorted(parcels, key=lambda q: q.parcel_id):
        verdict = judge(p, t)
        if verdict.kept:
            kept.append(p)
        else:
            dropped.append((p, verdict))
    return kept, dropped


def audit_records(dropped: list[tuple[Parcel, FilterVerdict]]) -> list[dict]:
    """JSON-ready audit entries for dropped parcels."""
    return [
        {
            "id": p.parcel_id,
            "rule": v.rule_fired,
            "area": p.area_px,
            "perimeter": round(p.perimeter_px, 3),
        }
        for p, v in dropped
    ]
