"""Core value types and geometric primitives.

Array conventions used throughout the package:
  image     -- uint8 array of shape (H, W, 3), RGB
  label map -- uint8 array of shape (H, W); 0 = background, 1..C = classes,
               255 = ignore (Pascal convention)
  mask      -- bool array of shape (H, W), True = foreground
  boundary  -- float array of shape (H, W), values in [0, 1]
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

from .errors import DegenerateBox

IGNORE = 255
DEFAULT_NUM_CLASSES = 20  # Pascal VOC object classes (background excluded)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with half-open pixel coordinates [min, max)."""

    class_id: int
    xmin: int
    ymin: int
    xmax: int
    ymax: int

    @property
    def width(self) -> int:
        return self.xmax - self.xmin

    @property
    def height(self) -> int:
        return self.ymax - self.ymin

    @property
    def area(self) -> int:
        return self.width * self.height

    def slices(self) -> tuple[slice, slice]:
        """(row, col) slices selecting the box region of an (H, W) array."""
        return slice(self.ymin, self.ymax), slice(self.xmin, self.xmax)


def clip_box(box: Box, dims: tuple[int, int]) -> Box:
    """Clamp a box to image bounds; raises DegenerateBox if nothing remains.

    dims is (width, height).
    """
    w, h = dims
    xmin = max(0, min(box.xmin, w))
    ymin = max(0, min(box.ymin, h))
    xmax = max(0, min(box.xmax, w))
    ymax = max(0, min(box.ymax, h))
    if xmax <= xmin or ymax <= ymin:
        raise DegenerateBox(
            f"box ({box.xmin},{box.ymin},{box.xmax},{box.ymax}) is empty "
            f"after clipping to {w}x{h}"
        )
    return Box(box.class_id, xmin, ymin, xmax, ymax)


@dataclass(frozen=True)
class BoxSet:
    """Ordered collection of boxes for one image.

    Iteration order is back-to-front: descending area, ties broken by
    ascending (ymin, xmin, class_id). Painting in this order leaves
    smaller (front) boxes on top.
    """

    boxes: tuple[Box, ...]
    image_dims: tuple[int, int]  # (width, height)

    def __len__(self) -> int:
        return len(self.boxes)

    def __iter__(self) -> Iterator[Box]:
        return iter(self.boxes)

    def __getitem__(self, i: int) -> Box:
        return self.boxes[i]


def order_boxes(boxes: Sequence[Box], image_dims: tuple[int, int]) -> BoxSet:
    """Clip boxes to the image and sort them back-to-front."""
    clipped = [clip_box(b, image_dims) for b in boxes]
    ordered = sorted(clipped, key=lambda b: (-b.area, b.ymin, b.xmin, b.class_id))
    return BoxSet(tuple(ordered), image_dims)


@dataclass(frozen=True)
class WeakLabelConfig:
    """Every numeric knob of the label-synthesis pipeline."""

    vote_fg_thresh: float = 0.70
    vote_bg_thresh: float = 0.20
    n_perturbations: int = 150
    jitter_frac: float = 0.05
    margin_min: float = 0.10
    margin_max: float = 0.60
    margin_default: float = 0.40
    inner_region_frac: float = 0.20
    outlier_iou_thresh: float = 0.50
    gmm_components: int = 5
    grabcut_iters: int = 5
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not (0 < self.vote_bg_thresh < self.vote_fg_thresh <= 1):
            raise ValueError("need 0 < vote_bg_thresh < vote_fg_thresh <= 1")
        if not (0 <= self.jitter_frac < 0.5):
            raise ValueError("jitter_frac must lie in [0, 0.5)")
        if not (0 < self.margin_min <= self.margin_default <= self.margin_max):
            raise ValueError("need 0 < margin_min <= margin_default <= margin_max")
        if not (0 < self.inner_region_frac <= 1):
            raise ValueError("inner_region_frac must lie in (0, 1]")
