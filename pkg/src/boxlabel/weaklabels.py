"""Label-synthesis methods: Box, Box^i, GrabCut+^i voting, proposal
selection, proposal/GrabCut intersection, per-image composition, and
training-free instance baselines.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .core import Box, BoxSet, IGNORE, WeakLabelConfig, clip_box
from .errors import CountMismatch, DegenerateBox, DimensionMismatch
from .grabcut import GrabCutParams, run_grabcut

log = logging.getLogger(__name__)

# per-pixel states of a TriSegment
SEG_BG = 0
SEG_FG = 1
SEG_IGNORE = 2

RECTANGLE = "rectangle"
ELLIPSE = "ellipse"


@dataclass(frozen=True)
class TriSegment:
    """Ternary FG/BG/IGNORE states over one box region."""

    box_index: int
    box: Box
    states: np.ndarray  # uint8 (box.height, box.width)

    def __post_init__(self) -> None:
        if self.states.shape != (self.box.height, self.box.width):
            raise DimensionMismatch("TriSegment states must cover exactly the box")


def mask_to_trisegment(mask: np.ndarray, box: Box, box_index: int = 0) -> TriSegment:
    """Binary mask -> TriSegment: FG where the mask is set inside the box."""
    crop = mask[box.slices()]
    states = np.where(crop, SEG_FG, SEG_BG).astype(np.uint8)
    return TriSegment(box_index, box, states)


def rasterize_box_labels(boxes: BoxSet, dims: tuple[int, int]) -> np.ndarray:
    """Box baseline: every pixel inside a box gets that class, rest background."""
    w, h = dims
    labels = np.zeros((h, w), dtype=np.uint8)
    for box in boxes:  # back-to-front, smaller boxes painted last
        labels[box.slices()] = box.class_id
    return labels


def _inner_rect(box: Box, inner_frac: float) -> Box:
    """Centered rectangle holding ~inner_frac of the box area.

    Width follows the box aspect (sqrt scaling); height is then chosen
    to hit the target area as closely as integer sizes allow.
    """
    scale = math.sqrt(inner_frac)
    iw = max(1, min(box.width, round(scale * box.width)))
    ih = max(1, min(box.height, round(inner_frac * box.width * box.height / iw)))
    x0 = box.xmin + (box.width - iw) // 2
    y0 = box.ymin + (box.height - ih) // 2
    return Box(box.class_id, x0, y0, x0 + iw, y0 + ih)


def rasterize_box_inner(boxes: BoxSet, dims: tuple[int, int],
                        inner_frac: float) -> np.ndarray:
    """Box^i baseline: fill the inner-area rectangle, ignore the box remainder."""
    if not (0 < inner_frac <= 1):
        raise ValueError("inner_frac must lie in (0, 1]")
    w, h = dims
    labels = np.zeros((h, w), dtype=np.uint8)
    for box in boxes:
        labels[box.slices()] = IGNORE
        labels[_inner_rect(box, inner_frac).slices()] = box.class_id
    return labels


def vote_to_state(frac: float, cfg: WeakLabelConfig) -> int:
    """Threshold a foreground vote fraction: >=fg_thresh FG, <bg_thresh BG, else IGNORE."""
    if frac >= cfg.vote_fg_thresh:
        return SEG_FG
    if frac < cfg.vote_bg_thresh:
        return SEG_BG
    return SEG_IGNORE


def _jitter_box(box: Box, cfg: WeakLabelConfig, dims: tuple[int, int],
                rng: np.random.Generator) -> Box:
    j = cfg.jitter_frac
    dx0, dx1 = rng.uniform(-j, j, 2) * box.width
    dy0, dy1 = rng.uniform(-j, j, 2) * box.height
    w, h = dims
    xmin = min(max(0, int(round(box.xmin + dx0))), w - 1)
    xmax = max(min(w, int(round(box.xmax + dx1))), xmin + 1)
    ymin = min(max(0, int(round(box.ymin + dy0))), h - 1)
    ymax = max(min(h, int(round(box.ymax + dy1))), ymin + 1)
    return Box(box.class_id, xmin, ymin, xmax, ymax)


def grabcut_plus_i(image: np.ndarray, box: Box, cfg: WeakLabelConfig,
                   params: GrabCutParams, boundary=None,
                   box_index: int = 0) -> TriSegment:
    """Vote over perturbed GrabCut+ runs and threshold into FG/BG/IGNORE.

    Perturbation k jitters each box coordinate and draws the context
    margin from [margin_min, margin_max]; its random stream is seeded
    by (cfg.rng_seed, box_index, k) so results are reproducible and
    independent of execution order.
    """
    h, w = image.shape[:2]
    box = clip_box(box, (w, h))
    votes = np.zeros((h, w), dtype=np.int64)
    for k in range(cfg.n_perturbations):
        ss = np.random.SeedSequence([cfg.rng_seed, box_index, k])
        rng = np.random.default_rng(ss)
        jittered = _jitter_box(box, cfg, (w, h), rng)
        margin = float(rng.uniform(cfg.margin_min, cfg.margin_max))
        run_seed = int(rng.integers(0, 2**63 - 1))
        mask = run_grabcut(image, jittered, cfg, replace(params, margin=margin),
                           boundary=boundary, seed=run_seed)
        votes += mask
    frac = votes[box.slices()] / cfg.n_perturbations
    states = np.full(frac.shape, SEG_IGNORE, dtype=np.uint8)
    states[frac >= cfg.vote_fg_thresh] = SEG_FG
    states[frac < cfg.vote_bg_thresh] = SEG_BG
    return TriSegment(box_index, box, states)


def mask_tight_box(mask: np.ndarray) -> Box | None:
    """Tight bounding box of a binary mask, or None when empty."""
    ys, xs = np.nonzero(mask)
    if len(ys) == 0:
        return None
    return Box(0, int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


def box_iou(a: Box, b: Box) -> float:
    ix = max(0, min(a.xmax, b.xmax) - max(a.xmin, b.xmin))
    iy = max(0, min(a.ymax, b.ymax) - max(a.ymin, b.ymin))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union else 0.0


def pick_best_proposal(box: Box, proposals: list[np.ndarray]) -> np.ndarray | None:
    """Proposal whose tight bounding box best overlaps the annotated box.

    Ties keep the lowest index; returns None when the set is empty or
    no proposal overlaps at all.
    """
    best_iou, best = 0.0, None
    for mask in proposals:
        tight = mask_tight_box(mask)
        if tight is None:
            continue
        iou = box_iou(tight, box)
        if iou > best_iou:
            best_iou, best = iou, mask
    return best


def intersect_mg(proposal_mask: np.ndarray | None, grabcut_mask: np.ndarray,
                 box: Box, box_index: int = 0) -> TriSegment:
    """FG where proposal and GrabCut agree inside the box, IGNORE elsewhere.

    Without a proposal this degrades to the GrabCut mask as FG and the
    box remainder as BG.
    """
    gc_crop = grabcut_mask[box.slices()]
    if proposal_mask is None:
        log.warning("no proposal for box %d; degrading to the GrabCut segment", box_index)
        states = np.where(gc_crop, SEG_FG, SEG_BG).astype(np.uint8)
        return TriSegment(box_index, box, states)
    if proposal_mask.shape != grabcut_mask.shape:
        raise DimensionMismatch(
            f"proposal {proposal_mask.shape} vs grabcut {grabcut_mask.shape}")
    both = proposal_mask[box.slices()] & gc_crop
    states = np.where(both, SEG_FG, SEG_IGNORE).astype(np.uint8)
    return TriSegment(box_index, box, states)


def compose_labelmap(segments: list[TriSegment], boxes: BoxSet,
                     dims: tuple[int, int]) -> np.ndarray:
    """Paint per-box segments back-to-front onto an all-background map.

    FG pixels take the box class, IGNORE becomes 255, BG leaves the
    pixel untouched (so back boxes stay visible under front-box BG).
    """
    if len(segments) != len(boxes):
        raise CountMismatch(f"{len(segments)} segments for {len(boxes)} boxes")
    w, h = dims
    labels = np.zeros((h, w), dtype=np.uint8)
    for box, seg in zip(boxes, segments):
        region = labels[box.slices()]
        region[seg.states == SEG_FG] = box.class_id
        region[seg.states == SEG_IGNORE] = IGNORE
    return labels


def instance_baseline(box: Box, method: str, dims: tuple[int, int]) -> np.ndarray:
    """Training-free instance masks: the filled box or its inscribed ellipse."""
    w, h = dims
    box = clip_box(box, (w, h))
    mask = np.zeros((h, w), dtype=bool)
    if method == RECTANGLE:
        mask[box.slices()] = True
    elif method == ELLIPSE:
        a = box.width / 2.0
        b = box.height / 2.0
        cx = box.xmin + a
        cy = box.ymin + b
        ys, xs = np.mgrid[box.ymin:box.ymax, box.xmin:box.xmax]
        inside = (((xs + 0.5 - cx) / a) ** 2 + ((ys + 0.5 - cy) / b) ** 2) <= 1.0
        mask[box.slices()] = inside
    else:
        raise ValueError(f"unknown instance baseline {method!r}")
    return mask
