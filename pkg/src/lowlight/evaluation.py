"""Detection evaluation: greedy IoU matching, 101-point interpolated PR/AP,
and lighting-condition error-elimination curves.

AP follows the COCO idiom: per-class average precision on a 101-point recall
grid, swept over IoU thresholds 0.50:0.05:0.95, with AP50/AP75 at the two
named thresholds.  Classes without ground truth are sentinels (None), not
zeros, and are excluded from means.

The elimination analysis recomputes a pooled PR curve after removing the
false positives and missed ground truths attributed to one lighting
condition: a missed instance is attributed to extreme low light iff its
extreme flag is set; a false positive is attributed iff its maximum-IoU
same-class instance (IoU >= attribution threshold) is extreme-flagged.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

from .annotations import CLASSES, AnnotationSet, Detection, Instance, filter_instances
from .imgcore import ValidationError

RECALL_GRID = np.arange(101, dtype=np.float64) / 100.0
IOU_SWEEP = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
CURVE_THRESHOLDS = (0.5, 0.75)


def iou(a: Sequence[float], b: Sequence[float]) -> float:
    """Intersection over union of two (x, y, w, h) boxes."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        raise ValidationError("iou requires positive box extents")
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (aw * ah + bw * bh - inter)


@dataclass
class DetMatch:
    """One evaluated detection: label, matched instance if any, match IoU."""

    detection: Detection
    is_tp: bool
    matched_id: Optional[int]
    iou: float


@dataclass
class MatchSet:
    """Matching outcome for one (image, class) partition at one threshold."""

    threshold: float
    matches: list[DetMatch]  # descending score, ties by input order
    missed: list[Instance]   # ground truth left unmatched
    gt_count: int


def match_detections(
    dets: Sequence[Detection],
    instances: Sequence[Instance],
    iou_threshold: float,
) -> MatchSet:
    """Greedy matching: best-scoring detections claim ground truth first.

    Preconditions: every detection and instance shares one image and class
    (partitioning is the caller's job).  Each detection takes the unmatched
    instance of highest IoU when that IoU reaches the threshold, otherwise
    it is a false positive.  Score ties break by input order; IoU ties by
    instance order.
    """
    keys = {(d.image_id, d.category) for d in dets} | {
        (g.image_id, g.category) for g in instances
    }
    if len(keys) > 1:
        raise ValidationError(f"matching requires one (image, class) partition, got {keys}")

    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    taken = [False] * len(instances)
    matches_by_input = {}
    for oi in order:
        det = dets[oi]
        best_iou = 0.0
        best_j = -1
        for j, inst in enumerate(instances):
            if taken[j]:
                continue
            v = iou(det.bbox, inst.bbox)
            if v > best_iou:
                best_iou, best_j = v, j
        if best_j >= 0 and best_iou >= iou_threshold:
            taken[best_j] = True
            matches_by_input[oi] = DetMatch(det, True, instances[best_j].id, best_iou)
        else:
            matches_by_input[oi] = DetMatch(det, False, None, 0.0)
    matches = [matches_by_input[oi] for oi in order]
    missed = [inst for j, inst in enumerate(instances) if not taken[j]]
    return MatchSet(
        threshold=iou_threshold, matches=matches, missed=missed, gt_count=len(instances)
    )


@dataclass(eq=False)
class PRCurve:
    """Precision interpolated on the 101-point recall grid.

    ``precisions`` and ``ap`` are None when there is no ground truth to
    recall against (the sentinel case).
    """

    recalls: np.ndarray = field(default_factory=lambda: RECALL_GRID.copy())
    precisions: Optional[np.ndarray] = None
    ap: Optional[float] = None
    iou_threshold: Optional[float] = None

    @property
    def defined(self) -> bool:
        return self.precisions is not None


def _interpolated_curve(
    points: list[tuple[float, int, bool]],
    gt_count: int,
    iou_threshold: Optional[float],
) -> PRCurve:
    """Build a PRCurve from pooled (score, order, is_tp) points.

    Points are ranked by descending score with ties broken by the order key;
    the precision envelope (running max from the right) is sampled at the
    first rank reaching each grid recall, 0 past the last recall reached.
    """
    if gt_count < 0:
        raise ValidationError(f"gt count must be >= 0, got {gt_count}")
    if gt_count == 0:
        return PRCurve(iou_threshold=iou_threshold)
    ranked = sorted(points, key=lambda p: (-p[0], p[1]))
    if not ranked:
        return PRCurve(
            precisions=np.zeros(len(RECALL_GRID)), ap=0.0, iou_threshold=iou_threshold
        )
    tp = np.cumsum([1.0 if p[2] else 0.0 for p in ranked])
    ranks = np.arange(1.0, len(ranked) + 1.0)
    precision = tp / ranks
    recall = tp / gt_count
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_GRID, side="left")
    sampled = np.where(idx < len(ranked), envelope[np.minimum(idx, len(ranked) - 1)], 0.0)
    return PRCurve(
        precisions=sampled, ap=float(sampled.mean()), iou_threshold=iou_threshold
    )


def pr_curve(
    match_sets: Iterable[MatchSet],
    gt_count: Optional[int] = None,
    iou_threshold: Optional[float] = None,
) -> PRCurve:
    """Pool match sets across images into one interpolated curve.

    ``gt_count`` defaults to the summed ground truth of the pooled sets.
    Score ties across sets break by pooling order.
    """
    sets = list(match_sets)
    if gt_count is None:
        gt_count = sum(ms.gt_count for ms in sets)
    if iou_threshold is None and sets:
        thresholds = {ms.threshold for ms in sets}
        if len(thresholds) == 1:
            iou_threshold = thresholds.pop()
    points = []
    seq = 0
    for ms in sets:
        for m in ms.matches:
            points.append((m.detection.score, seq, m.is_tp))
            seq += 1
    return _interpolated_curve(points, gt_count, iou_threshold)


@dataclass(frozen=True)
class EvalOptions:
    """Ground-truth filters applied before matching."""

    include_extreme: Optional[bool] = None
    exclude_truncated: bool = False
    exclude_occluded: bool = False

    @property
    def active(self) -> bool:
        return (
            self.include_extreme is not None
            or self.exclude_truncated
            or self.exclude_occluded
        )


@dataclass
class EvalReport:
    """AP summary plus the pooled and per-class curves behind it."""

    ap50: Optional[float]
    ap75: Optional[float]
    ap: Optional[float]
    per_class: dict[str, dict[str, Optional[float]]]
    curves: dict[str, PRCurve]
    gt_count: int
    det_count: int
    condition_curves: Optional[dict[str, PRCurve]] = None


def _partition(
    dets: Sequence[Detection], instances: Sequence[Instance]
) -> tuple[dict, dict]:
    det_groups: dict[tuple[int, str], list[tuple[int, Detection]]] = {}
    for gi, det in enumerate(dets):
        det_groups.setdefault((det.image_id, det.category), []).append((gi, det))
    gt_groups: dict[tuple[int, str], list[Instance]] = {}
    for inst in instances:
        gt_groups.setdefault((inst.image_id, inst.category), []).append(inst)
    return det_groups, gt_groups


def _class_points(
    det_groups: dict,
    gt_groups: dict,
    image_ids: list[int],
    category: str,
    threshold: float,
) -> tuple[list[tuple[float, int, bool]], list[Instance]]:
    """Match one class across all images; returns pooled points and misses."""
    points = []
    missed: list[Instance] = []
    for image_id in image_ids:
        key = (image_id, category)
        group = det_groups.get(key, [])
        gts = gt_groups.get(key, [])
        if not group and not gts:
            continue
        ms = match_detections([d for _, d in group], gts, threshold)
        # match_detections returns score order; recover each detection's
        # global input index for cross-image tie-breaking.
        order_by_det = {id(det): gi for gi, det in group}
        for m in ms.matches:
            points.append((m.detection.score, order_by_det[id(m.detection)], m.is_tp))
        missed.extend(ms.missed)
    return points, missed


def evaluate(
    dets: Sequence[Detection],
    annset: AnnotationSet,
    options: EvalOptions = EvalOptions(),
) -> EvalReport:
    """COCO-style evaluation of detections against an annotation set.

    Per-class AP is averaged into mAP at each threshold of the IoU sweep;
    classes without ground truth are excluded from means (sentinel).  The
    report carries pooled and per-class curves at IoU 0.5 and 0.75.
    """
    known_images = {im.id for im in annset.images}
    for det in dets:
        if det.image_id not in known_images:
            raise ValidationError(f"detection references unknown image id {det.image_id}")
    gt_set = filter_instances(
        annset,
        include_extreme=options.include_extreme,
        exclude_truncated=options.exclude_truncated,
        exclude_occluded=options.exclude_occluded,
    ) if options.active else annset

    image_ids = [im.id for im in annset.images]
    det_groups, gt_groups = _partition(dets, gt_set.instances)
    class_gt = {
        c: sum(1 for inst in gt_set.instances if inst.category == c) for c in CLASSES
    }

    ap_by_class_threshold: dict[str, dict[float, Optional[float]]] = {c: {} for c in CLASSES}
    curves: dict[str, PRCurve] = {}
    for t in IOU_SWEEP:
        pooled_points: list[tuple[float, int, bool]] = []
        for c in CLASSES:
            points, _ = _class_points(det_groups, gt_groups, image_ids, c, t)
            curve = _interpolated_curve(points, class_gt[c], t)
            ap_by_class_threshold[c][t] = curve.ap
            if t in CURVE_THRESHOLDS:
                curves[f"{c}@{t:.2f}"] = curve
                pooled_points.extend(points)
        if t in CURVE_THRESHOLDS:
            curves[f"pooled@{t:.2f}"] = _interpolated_curve(
                sorted(pooled_points, key=lambda p: p[1]), sum(class_gt.values()), t
            )

    def mean_ap(values: list[Optional[float]]) -> Optional[float]:
        defined = [v for v in values if v is not None]
        return float(np.mean(defined)) if defined else None

    map_by_threshold = {
        t: mean_ap([ap_by_class_threshold[c][t] for c in CLASSES]) for t in IOU_SWEEP
    }
    per_class = {
        c: {
            "ap50": ap_by_class_threshold[c][0.5],
            "ap75": ap_by_class_threshold[c][0.75],
            "ap": mean_ap([ap_by_class_threshold[c][t] for t in IOU_SWEEP]),
        }
        for c in CLASSES
    }
    # curves in a stable order: pooled first, then per class
    ordered = {}
    for t in CURVE_THRESHOLDS:
        ordered[f"pooled@{t:.2f}"] = curves[f"pooled@{t:.2f}"]
    for c in CLASSES:
        for t in CURVE_THRESHOLDS:
            ordered[f"{c}@{t:.2f}"] = curves[f"{c}@{t:.2f}"]
    return EvalReport(
        ap50=map_by_threshold[0.5],
        ap75=map_by_threshold[0.75],
        ap=mean_ap(list(map_by_threshold.values())),
        per_class=per_class,
        curves=ordered,
        gt_count=len(gt_set.instances),
        det_count=len(dets),
    )


def conditional_eval(
    dets: Sequence[Detection],
    annset: AnnotationSet,
    iou_threshold: float = 0.5,
    attribution_iou: float = 0.1,
) -> dict[str, PRCurve]:
    """Pooled PR curves before and after eliminating condition-attributed errors.

    Returns ``base``, ``extreme_eliminated`` (extreme-attributed false
    positives and missed instances removed), and ``other_eliminated`` (the
    complement).  Matching is done once; elimination only filters its
    outcome, so each eliminated curve dominates the base curve.
    """
    for inst in annset.instances:
        if inst.extreme is None:
            raise ValidationError(
                f"instance {inst.id} has no 'extreme' flag; conditional analysis "
                "requires flagged ground truth"
            )
    known_images = {im.id for im in annset.images}
    for det in dets:
        if det.image_id not in known_images:
            raise ValidationError(f"detection references unknown image id {det.image_id}")

    det_groups, gt_groups = _partition(dets, annset.instances)
    # entries: (score, order, is_tp, fp_is_extreme_attributed)
    entries: list[tuple[float, int, bool, bool]] = []
    missed_extreme = 0
    missed_other = 0
    for (image_id, category), group in sorted(
        det_groups.items(), key=lambda kv: (kv[0][0], kv[0][1])
    ):
        gts = gt_groups.get((image_id, category), [])
        ms = match_detections([d for _, d in group], gts, iou_threshold)
        order_by_det = {id(det): gi for gi, det in group}
        for m in ms.matches:
            attributed = False
            if not m.is_tp:
                best_iou, best_inst = 0.0, None
                for inst in gts:
                    v = iou(m.detection.bbox, inst.bbox)
                    if v > best_iou:
                        best_iou, best_inst = v, inst
                attributed = best_iou >= attribution_iou and bool(best_inst.extreme)
            entries.append(
                (m.detection.score, order_by_det[id(m.detection)], m.is_tp, attributed)
            )
        for inst in ms.missed:
            if inst.extreme:
                missed_extreme += 1
            else:
                missed_other += 1
    for (image_id, category), gts in gt_groups.items():
        if (image_id, category) not in det_groups:
            for inst in gts:
                if inst.extreme:
                    missed_extreme += 1
                else:
                    missed_other += 1

    gt_total = len(annset.instances)
    base_points = [(s, o, tp) for s, o, tp, _ in entries]
    extreme_points = [(s, o, tp) for s, o, tp, attr in entries if tp or not attr]
    other_points = [(s, o, tp) for s, o, tp, attr in entries if tp or attr]
    return {
        "base": _interpolated_curve(base_points, gt_total, iou_threshold),
        "extreme_eliminated": _interpolated_curve(
            extreme_points, gt_total - missed_extreme, iou_threshold
        ),
        "other_eliminated": _interpolated_curve(
            other_points, gt_total - missed_other, iou_threshold
        ),
    }


def curve_to_dict(curve: PRCurve) -> dict:
    return {
        "iou_threshold": curve.iou_threshold,
        "ap": curve.ap,
        "recall": [float(r) for r in curve.recalls],
        "precision": None if curve.precisions is None else [float(p) for p in curve.precisions],
    }


def curve_from_dict(doc: dict) -> PRCurve:
    precisions = doc.get("precision")
    return PRCurve(
        recalls=np.asarray(doc["recall"], dtype=np.float64),
        precisions=None if precisions is None else np.asarray(precisions, dtype=np.float64),
        ap=doc.get("ap"),
        iou_threshold=doc.get("iou_threshold"),
    )


def report_to_dict(report: EvalReport) -> dict:
    doc = {
        "summary": {"ap50": report.ap50, "ap75": report.ap75, "ap": report.ap},
        "per_class": report.per_class,
        "counts": {"ground_truth": report.gt_count, "detections": report.det_count},
        "curves": {name: curve_to_dict(c) for name, c in report.curves.items()},
    }
    if report.condition_curves is not None:
        doc["condition_curves"] = {
            name: curve_to_dict(c) for name, c in report.condition_curves.items()
        }
    return doc


def write_curves_csv(curves: dict[str, PRCurve], fh: TextIO) -> None:
    """One row per defined curve point: curve name, iou, recall, precision."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["curve", "iou", "recall", "precision"])
    for name, curve in curves.items():
        if not curve.defined:
            continue
        iou_field = "" if curve.iou_threshold is None else f"{curve.iou_threshold:g}"
        for r, p in zip(curve.recalls, curve.precisions):
            writer.writerow([name, iou_field, f"{r:.2f}", repr(float(p))])
