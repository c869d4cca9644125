"""Detection evaluation: IoU, COCO-style AP/recall, counting accuracy.

Average precision follows the COCO convention: greedy one-to-one matching
in confidence order (each ground-truth box matched at most once, ties
between equal confidences resolved by original detection rank, ties
between ground-truth candidates by higher IoU), and 101-point interpolated
AP — the mean over recall thresholds {0.00, 0.01, ..., 1.00} of the
maximum precision at recall >= threshold.  Reports average AP over the ten
IoU thresholds 0.50:0.05:0.95 and recall at IoU 0.5, macro-averaged over
the categories present in the ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .retrieval import Detection
from .roialign import Box

__all__ = [
    "COCO_IOU_THRESHOLDS",
    "EvalReport",
    "iou",
    "average_precision",
    "coco_map",
    "counting_accuracy",
    "box_recall",
]

COCO_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))

RECALL_POINTS = np.array([i / 100.0 for i in range(101)])


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0 when the union is empty."""
    ix = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    iy = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


@dataclass
class EvalReport:
    """Evaluation summary; every value lies in [0, 1]."""

    ap_per_iou: dict[float, float]
    ap_mean: float
    recall: float
    counting_accuracy: float = 0.0
    per_category: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        values = list(self.ap_per_iou.values()) + [
            self.ap_mean,
            self.recall,
            self.counting_accuracy,
            *self.per_category.values(),
        ]
        if any(not (0.0 <= v <= 1.0) for v in values):
            raise ValueError("report values must lie in [0, 1]")
        if self.ap_per_iou:
            mean = sum(self.ap_per_iou.values()) / len(self.ap_per_iou)
            if abs(mean - self.ap_mean) > 1e-12:
                raise ValueError("ap_mean is not the mean of ap_per_iou")

    def to_json(self) -> dict:
        return {
            "ap_per_iou": {f"{t:.2f}": v for t, v in self.ap_per_iou.items()},
            "ap_mean": self.ap_mean,
            "recall": self.recall,
            "counting_accuracy": self.counting_accuracy,
            "per_category": dict(self.per_category),
        }

    @staticmethod
    def tsv_header() -> str:
        cols = ["ap_mean", "recall", "counting_accuracy"] + [f"ap@{t:.2f}" for t in COCO_IOU_THRESHOLDS]
        return "\t".join(cols)

    def tsv_line(self) -> str:
        cols = [self.ap_mean, self.recall, self.counting_accuracy] + [
            self.ap_per_iou.get(t, 0.0) for t in COCO_IOU_THRESHOLDS
        ]
        return "\t".join(f"{v:.6f}" for v in cols)


def _match(
    dets: list[tuple[int, Box, float]],
    gts: dict[int, list[Box]],
    thr: float,
) -> tuple[np.ndarray, int]:
    """Greedy matching for one category; returns (tp flags in rank order, n_gt)."""
    n_gt = sum(len(v) for v in gts.values())
    order = sorted(range(len(dets)), key=lambda i: (-dets[i][2], i))
    matched: dict[int, set[int]] = {img: set() for img in gts}
    tp = np.zeros(len(dets))
    for rank, i in enumerate(order):
        img, box, _conf = dets[i]
        candidates = gts.get(img, [])
        best_iou, best_j = 0.0, -1
        for j, g in enumerate(candidates):
            if j in matched.get(img, set()):
                continue
            v = iou(box, g)
            if v > best_iou:
                best_iou, best_j = v, j
        if best_j >= 0 and best_iou >= thr:
            matched[img].add(best_j)
            tp[rank] = 1.0
    return tp, n_gt


def _interpolated_ap(tp: np.ndarray, n_gt: int) -> float:
    if n_gt == 0:
        return 0.0
    if len(tp) == 0:
        return 0.0
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(1.0 - tp)
    recall = cum_tp / n_gt
    precision = cum_tp / (cum_tp + cum_fp)
    ap = 0.0
    for r in RECALL_POINTS:
        mask = recall >= r
        ap += precision[mask].max() if mask.any() else 0.0
    return ap / len(RECALL_POINTS)


def average_precision(
    detections: list[tuple[int, Box, float]],
    ground_truth: dict[int, list[Box]],
    iou_threshold: float,
) -> float:
    """Single-category AP at one IoU threshold.

    ``detections`` are (image_id, box, confidence) triples; ``ground_truth``
    maps image ids to that category's boxes.
    """
    tp, n_gt = _match(list(detections), ground_truth, iou_threshold)
    return _interpolated_ap(tp, n_gt)


def coco_map(
    detections: dict[int, list[Detection]],
    ground_truth: dict[int, list[tuple[str, Box]]],
    categories: list[str] | None = None,
) -> EvalReport:
    """Full evaluation over images and categories.

    ``categories`` is the query vocabulary; detections outside it are an
    error.  Categories with no ground truth anywhere are excluded from the
    macro averages (by default the vocabulary is exactly the ground-truth
    categories).
    """
    gt_cats = sorted({c for recs in ground_truth.values() for c, _ in recs})
    if categories is None:
        categories = gt_cats
    known = set(categories)
    for img, dets in detections.items():
        for d in dets:
            if d.label not in known:
                raise ValueError(f"unknown category {d.label!r} in detections for image {img}")

    eval_cats = [c for c in categories if c in set(gt_cats)]
    if not eval_cats:
        zero = {t: 0.0 for t in COCO_IOU_THRESHOLDS}
        return EvalReport(ap_per_iou=zero, ap_mean=0.0, recall=0.0)

    ap_by_cat_thr: dict[str, dict[float, float]] = {}
    recall_by_cat: dict[str, float] = {}
    for cat in eval_cats:
        gts = {
            img: [b for c, b in recs if c == cat]
            for img, recs in ground_truth.items()
        }
        n_gt = sum(len(v) for v in gts.values())
        dets = [
            (img, d.box, d.confidence)
            for img, img_dets in sorted(detections.items())
            for d in img_dets
            if d.label == cat
        ]
        ap_by_cat_thr[cat] = {}
        for thr in COCO_IOU_THRESHOLDS:
            tp, _ = _match(dets, gts, thr)
            ap_by_cat_thr[cat][thr] = _interpolated_ap(tp, n_gt)
        tp50, _ = _match(dets, gts, 0.5)
        recall_by_cat[cat] = float(tp50.sum()) / n_gt if n_gt else 0.0

    ap_per_iou = {
        thr: float(np.mean([ap_by_cat_thr[c][thr] for c in eval_cats])) for thr in COCO_IOU_THRESHOLDS
    }
    per_category = {c: float(np.mean(list(ap_by_cat_thr[c].values()))) for c in eval_cats}
    return EvalReport(
        ap_per_iou=ap_per_iou,
        ap_mean=float(np.mean(list(ap_per_iou.values()))),
        recall=float(np.mean(list(recall_by_cat.values()))),
        per_category=per_category,
    )


def counting_accuracy(predicted: list[int], true: list[int]) -> float:
    """Fraction of exact count matches over paired lists."""
    if len(predicted) != len(true):
        raise ValueError("count lists must have equal length")
    if not predicted:
        return 0.0
    hits = sum(1 for p, t in zip(predicted, true) if int(p) == int(t))
    return hits / len(predicted)


def box_recall(candidates: list[Box], gt_boxes: list[Box], thr: float) -> float:
    """Label-agnostic recall: fraction of ground-truth boxes covered by some
    candidate at IoU >= thr.  1.0 when there is no ground truth."""
    if not gt_boxes:
        return 1.0
    hit = 0
    for g in gt_boxes:
        if any(iou(c, g) >= thr for c in candidates):
            hit += 1
    return hit / len(gt_boxes)
