"""Segmentation scoring: match detections to ground truth and rate them.

Ground-truth and detected parcels are linked when they share at least
link_min_overlap of the smaller one's pixels.  Connected components of
the link graph become mapping instances: right (1:1), over_segmented
(1 gt : k det), under_segmented (k gt : 1 det).  Components with several
parcels on both sides are resolved by maximal overlap so every instance
stays pure.  Detections overlapping no ground truth become fp-only
"unmatched" pseudo-instances; they carry zero ground-truth pixels, so
the gt-pixel-weighted image metrics ignore them and only the pooled
pixel tallies see their false positives.

Merging k fields or shattering one into k costs 1/(1 + log k); the log
is natural by default and base-10 by configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InputError
from .geometry import Parcel

KIND_RIGHT = "right"
KIND_OVER = "over_segmented"
KIND_UNDER = "under_segmented"
KIND_UNMATCHED = "unmatched"

DEFAULT_LINK_MIN_OVERLAP = 0.1
LOG_BASES = ("ln", "log10")


@dataclass(frozen=True)
class MappingInstance:
    """One matched group: its members, its kind, and its pixel tallies."""

    gt_ids: tuple[str, ...]
    det_ids: tuple[str, ...]
    kind: str
    tp: int
    fp: int
    fn: int

    def __post_init__(self) -> None:
        n_gt, n_det = len(self.gt_ids), len(self.det_ids)
        ok = {
            KIND_RIGHT: n_gt == 1 and n_det == 1,
            KIND_OVER: n_gt == 1 and n_det > 1,
            KIND_UNDER: n_gt > 1 and n_det == 1,
            KIND_UNMATCHED: n_gt == 0 and n_det >= 1,
        }.get(self.kind, False)
        if not ok:
            raise InputError(
                f"instance kind {self.kind!r} inconsistent with "
                f"{n_gt} gt / {n_det} det members"
            )
        if min(self.tp, self.fp, self.fn) < 0:
            raise InputError("negative pixel tally")

    @property
    def gt_pixels(self) -> int:
        return self.tp + self.fn


@dataclass(frozen=True)
class ScoredInstance:
    instance: MappingInstance
    precision: float
    recall: float
    f1: float
    agg_metric: float
    frag_metric: float


@dataclass(frozen=True)
class EvalReport:
    per_instance: tuple[ScoredInstance, ...]
    precision: float
    recall: float
    f1: float
    agglomeration: float
    fragmentation: float
    detection_rate: float
    pooled_precision: float
    pooled_recall: float
    pooled_f1: float


def _pair_overlap(a: Parcel, b: Parcel) -> int:
    """Shared pixel count, via the bounding-box intersection."""
    ar, ac = a.bbox_origin
    br, bc = b.bbox_origin
    ah, aw = a.mask.bits.shape
    bh, bw = b.mask.bits.shape
    r0, r1 = max(ar, br), min(ar + ah, br + bh)
    c0, c1 = max(ac, bc), min(ac + aw, bc + bw)
    if r0 >= r1 or c0 >= c1:
        return 0
    a_bits = a.mask.bits[r0 - ar : r1 - ar, c0 - ac : c1 - ac]
    b_bits = b.mask.bits[r0 - br : r1 - br, c0 - bc : c1 - bc]
    return int((a_bits & b_bits).sum())


def _union_pixels(group: list[Parcel], other: list[Parcel]) -> tuple[int, int]:
    """(pixels of group, pixels of group covered by other's union)."""
    total = 0
    covered = 0
    for p in group:
        total += p.area_px
        if not other:
            continue
        r0, c0 = p.bbox_origin
        h, w = p.mask.bits.shape
        hit = p.mask.bits & False
        for q in other:
            qr, qc = q.bbox_origin
            qh, qw = q.mask.bits.shape
            rr0, rr1 = max(r0, qr), min(r0 + h, qr + qh)
            cc0, cc1 = max(c0, qc), min(c0 + w, qc + qw)
            if rr0 >= rr1 or cc0 >= cc1:
                continue
            hit[rr0 - r0 : rr1 - r0, cc0 - c0 : cc1 - c0] |= q.mask.bits[
                rr0 - qr : rr1 - qr, cc0 - qc : cc1 - qc
            ]
        covered += int((p.mask.bits & hit).sum())
    return total, covered


def _tallies(gts: list[Parcel], dets: list[Parcel]) -> tuple[int, int, int]:
    gt_total, gt_covered = _union_pixels(gts, dets)
    det_total, det_covered = _union_pixels(dets, gts)
    # gt parcels are disjoint, as are det parcels, so the unions add up
    return gt_covered, det_total - det_covered, gt_total - gt_covered


def _make_instance(gts: list[Parcel], dets: list[Parcel]) -> MappingInstance:
    if not gts:
        kind = KIND_UNMATCHED
    elif len(gts) > 1:
        kind = KIND_UNDER
    elif len(dets) > 1:
        kind = KIND_OVER
    else:
        kind = KIND_RIGHT
    tp, fp, fn = _tallies(gts, dets)
    return MappingInstance(
        tuple(p.parcel_id for p in gts),
        tuple(p.parcel_id for p in dets),
        kind, tp, fp, fn,
    )


def build_mapping(gt: list[Parcel], det: list[Parcel],
                  link_min_overlap: float = DEFAULT_LINK_MIN_OVERLAP,
                  frame: tuple[int, int] | None = None) -> list[MappingInstance]:
    """Partition linked gt/det parcels into pure mapping instances.

    Ground-truth parcels overlapping no detection are silently unmapped
    (they surface only through the detection rate); detections overlapping
    no ground truth become fp-only pseudo-instances.
    """
    if not 0 < link_min_overlap <= 1:
        raise InputError("link_min_overlap must be in (0, 1]")
    if frame is not None:
        for p in list(gt) + list(det):
            r0, c0 = p.bbox_origin
            h, w = p.mask.bits.shape
            if r0 < 0 or c0 < 0 or r0 + h > frame[0] or c0 + w > frame[1]:
                raise InputError(
                    f"parcel {p.parcel_id} leaves the {frame} frame"
                )

    gt = sorted(gt, key=lambda p: p.parcel_id)
    det = sorted(det, key=lambda p: p.parcel_id)
    overlap = {}
    links_of_gt: dict[int, list[int]] = {i: [] for i in range(len(gt))}
    links_of_det: dict[int, list[int]] = {j: [] for j in range(len(det))}
    for i, g in enumerate(gt):
        for j, d in enumerate(det):
            shared = _pair_overlap(g, d)
            if shared:
                overlap[i, j] = shared
            if shared >= link_min_overlap * min(g.area_px, d.area_px):
                links_of_gt[i].append(j)
                links_of_det[j].append(i)

    # connected components of the bipartite link graph
    seen_gt: set[int] = set()
    seen_det: set[int] = set()
    instances: list[MappingInstance] = []
    for start in range(len(gt)):
        if start in seen_gt or not links_of_gt[start]:
            continue
        comp_gt, comp_det = [], []
        stack = [("g", start)]
        while stack:
            side, idx = stack.pop()
            if side == "g":
                if idx in seen_gt:
                    continue
                seen_gt.add(idx)
                comp_gt.append(idx)
                stack.extend(("d", j) for j in links_of_gt[idx])
            else:
                if idx in seen_det:
                    continue
                seen_det.add(idx)
                comp_det.append(idx)
                stack.extend(("g", i) for i in links_of_det[idx])
        comp_gt.sort()
        comp_det.sort()
        instances.extend(
            _resolve_component(gt, det, comp_gt, comp_det, overlap)
        )

    for j, d in enumerate(det):
        if j not in seen_det:
            instances.append(_make_instance([], [d]))
    return instances


def _resolve_component(gt, det, comp_gt, comp_det, overlap):
    if len(comp_gt) == 1 or len(comp_det) == 1:
        return [_make_instance([gt[i] for i in comp_gt],
                               [det[j] for j in comp_det])]

    # mixed component: every parcel follows its maximal-overlap partner,
    # ties to the smaller id, so the instances that re-form stay pure
    partner_of_gt = {
        i: max(comp_det, key=lambda j: (overlap.get((i, j), 0), -j))
        for i in comp_gt
    }
    members: dict[int, list[int]] = {}
    for i in comp_gt:
        members.setdefault(partner_of_gt[i], []).append(i)

    groups: list[tuple[list[int], list[int]]] = []
    slot_of_det: dict[int, int] = {}
    for j in sorted(members):
        groups.append((sorted(members[j]), [j]))
        slot_of_det[j] = len(groups) - 1
    leftovers = [j for j in comp_det if j not in members]
    pseudo: list[int] = []
    for j in leftovers:
        i = max(comp_gt, key=lambda i_: (overlap.get((i_, j), 0), -i_))
        slot = slot_of_det[partner_of_gt[i]]
        if len(groups[slot][0]) == 1:
            groups[slot][1].append(j)
        else:
            pseudo.append(j)

    out = [
        _make_instance([gt[i] for i in g_idx], [det[j] for j in sorted(d_idx)])
        for g_idx, d_idx in groups
    ]
    out.extend(_make_instance([], [det[j]]) for j in pseudo)
    return out


# ----------------------------------------------------------------- metrics


def instance_metrics(inst: MappingInstance) -> tuple[float, float, float]:
    """(precision, recall, f1); any 0/0 ratio collapses to 0."""
    if inst.tp + inst.fp + inst.fn == 0:
        raise InputError("empty instance has no metrics")
    precision = inst.tp / (inst.tp + inst.fp) if inst.tp + inst.fp else 0.0
    recall = inst.tp / (inst.tp + inst.fn) if inst.tp + inst.fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    return precision, recall, f1


def _k_metric(k: int, log_base: str) -> float:
    if k < 1:
        raise InputError("multiplicity k must be >= 1")
    if log_base not in LOG_BASES:
        raise InputError(f"log_base must be one of {LOG_BASES}")
    log = math.log(k) if log_base == "ln" else math.log10(k)
    return 1.0 / (1.0 + log)


def agglomeration_metric(k: int, log_base: str = "ln") -> float:
    """Penalty for k ground-truth fields merged into one detection."""
    return _k_metric(k, log_base)


def fragmentation_metric(k: int, log_base: str = "ln") -> float:
    """Penalty for one ground-truth field split across k detections."""
    return _k_metric(k, log_base)


def score(inst: MappingInstance, log_base: str = "ln") -> ScoredInstance:
    precision, recall, f1 = instance_metrics(inst)
    agg = (agglomeration_metric(len(inst.gt_ids), log_base)
           if inst.kind == KIND_UNDER else 1.0)
    frag = (fragmentation_metric(len(inst.det_ids), log_base)
            if inst.kind == KIND_OVER else 1.0)
    return ScoredInstance(inst, precision, recall, f1, agg, frag)


def aggregate(instances: list[MappingInstance], total_gt_fields: int,
              log_base: str = "ln") -> EvalReport:
    """Weight instance metrics by ground-truth pixels and pool the tallies.

    When no instance carries ground-truth pixels (nothing linked, or no
    detections at all) the weighted means are undefined; the report then
    scores 0 on precision/recall/F1 and keeps the vacuous penalty value
    1.0, so a catastrophic result still serializes instead of raising.
    """
    if total_gt_fields < 0:
        raise InputError("total_gt_fields must be >= 0")
    scored = [score(inst, log_base) for inst in instances]
    weights = [inst.gt_pixels for inst in instances]
    total_w = sum(weights)

    def wmean(values: list[float], vacuous: float = 0.0) -> float:
        if total_w == 0:
            return vacuous
        return sum(w * v for w, v in zip(weights, values)) / total_w

    tp = sum(i.tp for i in instances)
    fp = sum(i.fp for i in instances)
    fn = sum(i.fn for i in instances)
    pooled_p = tp / (tp + fp) if tp + fp else 0.0
    pooled_r = tp / (tp + fn) if tp + fn else 0.0
    pooled_f1 = (2 * pooled_p * pooled_r / (pooled_p + pooled_r)
                 if pooled_p + pooled_r else 0.0)

    mapped_gt = {gid for inst in instances for gid in inst.gt_ids}
    rate = len(mapped_gt) / total_gt_fields if total_gt_fields else 0.0
    return EvalReport(
        per_instance=tuple(scored),
        precision=wmean([s.precision for s in scored]),
        recall=wmean([s.recall for s in scored]),
        f1=wmean([s.f1 for s in scored]),
        agglomeration=wmean([s.agg_metric for s in scored], vacuous=1.0),
        fragmentation=wmean([s.frag_metric for s in scored], vacuous=1.0),
        detection_rate=rate,
        pooled_precision=pooled_p,
        pooled_recall=pooled_r,
        pooled_f1=pooled_f1,
    )


def evaluate_parcels(gt: list[Parcel], det: list[Parcel],
                     link_min_overlap: float = DEFAULT_LINK_MIN_OVERLAP,
                     log_base: str = "ln",
                     frame: tuple[int, int] | None = None) -> EvalReport:
    """build_mapping + aggregate in one call."""
    instances = build_mapping(gt, det, link_min_overlap, frame)
    return aggregate(instances, total_gt_fields=len(gt), log_base=log_base)
