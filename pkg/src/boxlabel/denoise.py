"""Post-processing stages between recursive training rounds and the
round-loop harness with a pluggable predictor.

Stage order is fixed: box enforcing -> outlier reset -> CRF filtering,
followed by a final box re-clamp (the CRF may leak labels past box
borders; emitted training labels must satisfy the stage-1 guarantee).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

import numpy as np
import scipy.ndimage as ndi

from .core import BoxSet, IGNORE, WeakLabelConfig
from .densecrf import CrfParams, labelmap_to_unaries, meanfield
from .errors import DimensionMismatch
from .metrics import semantic_eval


def enforce_boxes(pred: np.ndarray, boxes: BoxSet) -> np.ndarray:
    """Reset pixels outside boxes to background; inside a box keep a
    class only if some covering box carries it."""
    out = np.zeros_like(pred)
    for box in boxes:
        region = box.slices()
        match = pred[region] == box.class_id
        out[region][match] = box.class_id
    return out


def reset_outliers(cur: np.ndarray, boxes: BoxSet, initial: np.ndarray,
                   thresh: float = 0.5, connected: bool = False) -> np.ndarray:
    """Reset boxes whose class segment has IoU(segment, box) < thresh
    back to the initial labels.

    Reset decisions are taken on a snapshot of the input so a reset of
    one box cannot cascade into another within a single pass. With
    connected=True only the largest connected component of the class
    counts as the segment.
    """
    if cur.shape != initial.shape:
        raise DimensionMismatch(f"cur {cur.shape} vs initial {initial.shape}")
    out = cur.copy()
    to_reset = []
    for box in boxes:
        region = box.slices()
        seg = cur[region] == box.class_id
        if connected and seg.any():
            comps, n = ndi.label(seg)
            if n > 1:
                sizes = ndi.sum_labels(seg, comps, index=range(1, n + 1))
                seg = comps == (1 + int(np.argmax(sizes)))
        # stage 1 guarantees the segment lies inside its box, so the
        # IoU against the box reduces to an area fraction
        iou = int(seg.sum()) / box.area
        if iou < thresh:
            to_reset.append(box)
    for box in to_reset:
        region = box.slices()
        out[region] = initial[region]
    return out


def crf_stage(labels: np.ndarray, image: np.ndarray, params: CrfParams,
              n_classes: int) -> np.ndarray:
    """Boundary-aware filtering of a hard label map via mean-field CRF."""
    unaries = labelmap_to_unaries(labels, n_classes + 1, params.unary_confidence)
    _, out = meanfield(unaries, image, params)
    return out


def run_round(pred: np.ndarray, boxes: BoxSet, initial: np.ndarray,
              image: np.ndarray, cfg: WeakLabelConfig, crf_params: CrfParams,
              n_classes: int, stages=(1, 2, 3)) -> np.ndarray:
    """One inter-round label clean-up pass; `stages` selects ablations."""
    labels = pred
    if 1 in stages:
        labels = enforce_boxes(labels, boxes)
    if 2 in stages:
        labels = reset_outliers(labels, boxes, initial, cfg.outlier_iou_thresh)
    if 3 in stages:
        labels = crf_stage(labels, image, crf_params, n_classes)
        if 1 in stages:
            labels = enforce_boxes(labels, boxes)  # CRF can leak past boxes
    return labels


class Predictor(Protocol):
    """Stand-in for the trained segmentation network (out of scope)."""

    def predict(self, image: np.ndarray, current_labels: np.ndarray) -> np.ndarray: ...


@dataclass
class SyntheticPredictor:
    """Test predictor: ground truth corrupted by seeded boundary
    erosion/dilation and uniform label noise."""

    gt_lookup: Callable[[str], np.ndarray]
    noise: float = 0.0
    morph_radius: int = 0
    n_classes: int = 20
    seed: int = 0
    _counter: int = field(default=0, init=False)

    def predict(self, image: np.ndarray, current_labels: np.ndarray,
                name: Optional[str] = None) -> np.ndarray:
        gt = self.gt_lookup(name).copy()
        if self.noise == 0.0 and self.morph_radius == 0:
            return gt
        rng = np.random.default_rng([self.seed, self._counter])
        self._counter += 1
        if self.morph_radius > 0:
            for cls in np.unique(gt):
                if cls in (0, IGNORE):
                    continue
                mask = gt == cls
                if rng.random() < 0.5:
                    newm = ndi.binary_dilation(mask, iterations=self.morph_radius)
                else:
                    newm = ndi.binary_erosion(mask, iterations=self.morph_radius)
                gt[mask] = 0
                gt[newm] = cls
        if self.noise > 0:
            flip = rng.random(gt.shape) < self.noise
            gt[flip] = rng.integers(0, self.n_classes + 1, size=int(flip.sum()))
        return gt


@dataclass
class RoundState:
    round_index: int
    labels: dict  # name -> label map
    stats: dict


def recursive_harness(dataset, initial_labels: dict, predictor, rounds: int,
                      cfg: WeakLabelConfig, crf_params: CrfParams,
                      n_classes: int = 20) -> list[RoundState]:
    """Run the recursive label-refinement loop.

    dataset: list of (name, image, BoxSet, gt_or_None). Round 0 carries
    the generator output; each later round cleans up the predictor's
    labels with the three post-processing stages. Stats include the
    changed-pixel fraction and, when GT is available, the mIoU
    trajectory.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")

    def stats_for(labels: dict, prev: Optional[dict]) -> dict:
        st = {}
        total = changed = 0
        counts = {}
        for name, lab in labels.items():
            total += lab.size
            if prev is not None:
                changed += int(np.count_nonzero(lab != prev[name]))
            vals, cnts = np.unique(lab, return_counts=True)
            for v, c in zip(vals.tolist(), cnts.tolist()):
                counts[v] = counts.get(v, 0) + c
        st["changed_pixel_fraction"] = changed / total if total else 0.0
        st["class_pixel_counts"] = counts
        gts = [gt for (name, _, _, gt) in dataset if gt is not None]
        if len(gts) == len(dataset) and dataset:
            preds = [labels[name] for (name, _, _, _) in dataset]
            st["miou"] = semantic_eval(preds, gts, n_classes).miou
        return st

    states = [RoundState(0, dict(initial_labels), stats_for(initial_labels, None))]
    for r in range(1, rounds + 1):
        prev = states[-1].labels
        new_labels = {}
        for name, image, boxes, _gt in dataset:
            try:
                pred = predictor.predict(image, prev[name], name=name)
            except TypeError:
                pred = predictor.predict(image, prev[name])
            new_labels[name] = run_round(pred, boxes, initial_labels[name],
                                         image, cfg, crf_params, n_classes)
        states.append(RoundState(r, new_labels, stats_for(new_labels, prev)))
    return states
