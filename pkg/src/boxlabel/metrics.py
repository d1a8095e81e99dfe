"""Evaluation: per-class / mean IoU for semantic label maps, mask-IoU
average precision (mAP^r) and average best overlap (ABO) for instances.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import IGNORE
from .errors import BothEmpty, DimensionMismatch, EmptyDataset, MissingMask


@dataclass(frozen=True)
class SemanticReport:
    confusion: np.ndarray  # (C+1, C+1), gt rows, pred columns
    per_class_iou: dict  # class id -> IoU, only classes present somewhere
    miou: float

    def to_json_dict(self) -> dict:
        return {
            "miou": self.miou,
            "per_class": {str(k): v for k, v in sorted(self.per_class_iou.items())},
        }


@dataclass(frozen=True)
class InstanceReport:
    ap_per_class: dict  # thresh -> {class id -> AP}
    map_at: dict  # thresh -> mAP
    abo: float

    def to_json_dict(self) -> dict:
        out = {f"mAP@{t:g}": v for t, v in sorted(self.map_at.items())}
        out["ABO"] = self.abo
        return out


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise DimensionMismatch(f"mask shapes {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        raise BothEmpty("IoU of two empty masks is undefined")
    return np.count_nonzero(a & b) / union


def semantic_eval(preds, gts, n_classes: int) -> SemanticReport:
    """Pixel IoU per class over paired label maps.

    Pixels where either map carries the ignore value (255) are excluded.
    The mean runs over classes present in GT or prediction; classes
    absent from both have undefined IoU and are skipped.
    """
    if len(preds) != len(gts) or len(preds) == 0:
        raise EmptyDataset("need equal non-empty pred/gt lists")
    c1 = n_classes + 1
    confusion = np.zeros((c1, c1), dtype=np.int64)
    for pred, gt in zip(preds, gts):
        if pred.shape != gt.shape:
            raise DimensionMismatch(f"pred {pred.shape} vs gt {gt.shape}")
        valid = (gt != IGNORE) & (pred != IGNORE)
        confusion += np.bincount(
            gt[valid].astype(np.int64) * c1 + pred[valid].astype(np.int64),
            minlength=c1 * c1,
        ).reshape(c1, c1)
    if confusion.sum() == 0:
        raise EmptyDataset("no scored pixels (everything ignored)")
    tp = np.diag(confusion).astype(np.float64)
    denom = confusion.sum(axis=0) + confusion.sum(axis=1) - tp
    per_class = {c: float(tp[c] / denom[c]) for c in range(c1) if denom[c] > 0}
    miou = float(np.mean(list(per_class.values())))
    return SemanticReport(confusion, per_class, miou)


def _average_precision(scores, is_tp, n_positive: int) -> float:
    """All-point interpolated AP from per-detection TP flags."""
    if n_positive == 0:
        return 0.0
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    tp = np.asarray(is_tp, dtype=np.float64)[order]
    fp = 1.0 - tp
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(fp)
    recall = cum_tp / n_positive
    precision = cum_tp / np.maximum(cum_tp + cum_fp, 1e-12)
    # precision envelope, then sum area under recall steps
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    steps = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def instance_ap(detections_per_image, gts_per_image, iou_thresh: float) -> dict:
    """Per-class mask AP at one IoU threshold.

    detections_per_image: list over images of [(class_id, score, mask)].
    gts_per_image: list over images of [(class_id, mask)].
    Detections are matched greedily in score order to the unmatched
    same-class GT with the highest mask IoU.
    """
    classes = sorted({c for gts in gts_per_image for c, _ in gts})
    ap = {}
    for cls in classes:
        scores, flags = [], []
        n_pos = 0
        for dets, gts in zip(detections_per_image, gts_per_image):
            gt_masks = [m for c, m in gts if c == cls]
            n_pos += len(gt_masks)
            matched = [False] * len(gt_masks)
            cls_dets = sorted([d for d in dets if d[0] == cls],
                              key=lambda d: -d[1])
            for _, score, mask in cls_dets:
                if mask is None:
                    raise MissingMask("instance AP needs detection masks")
                best_iou, best_j = 0.0, -1
                for j, gm in enumerate(gt_masks):
                    if matched[j]:
                        continue
                    union = np.count_nonzero(mask | gm)
                    iou = np.count_nonzero(mask & gm) / union if union else 0.0
                    if iou > best_iou:
                        best_iou, best_j = iou, j
                tp = best_iou >= iou_thresh and best_j >= 0
                if tp:
                    matched[best_j] = True
                scores.append(score)
                flags.append(tp)
        ap[cls] = _average_precision(scores, flags, n_pos)
    return ap


def abo(detections_per_image, gts_per_image) -> float:
    """Average best overlap: per class, mean over GT instances of the
    best same-class detection IoU, then averaged across classes."""
    per_class: dict = {}
    for dets, gts in zip(detections_per_image, gts_per_image):
        for cls, gm in gts:
            best = 0.0
            for dcls, _score, mask in dets:
                if dcls != cls or mask is None:
                    continue
                union = np.count_nonzero(mask | gm)
                if union:
                    best = max(best, np.count_nonzero(mask & gm) / union)
            per_class.setdefault(cls, []).append(best)
    if not per_class:
        return 0.0
    return float(np.mean([np.mean(v) for v in per_class.values()]))


def instance_eval(detections_per_image, gts_per_image,
                  thresholds=(0.5, 0.75)) -> InstanceReport:
    ap_per_class = {t: instance_ap(detections_per_image, gts_per_image, t)
                    for t in thresholds}
    map_at = {t: (float(np.mean(list(v.values()))) if v else 0.0)
              for t, v in ap_per_class.items()}
    return InstanceReport(ap_per_class, map_at,
                          abo(detections_per_image, gts_per_image))
