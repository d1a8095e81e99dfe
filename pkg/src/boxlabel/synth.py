"""Seeded synthetic scenes: images + GT labels + instances + boxes +
oracle boundary maps + oracle proposals.

Scenes are small, flat-coloured shapes on a contrasting background, so
the pipeline's cues hold by construction: boxes are tight bounds of the
instances, boundaries trace the true contours, and the proposal set
contains each GT mask alongside near-miss distractors.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage as ndi

from .core import Box, BoxSet, order_boxes
from .errors import SpecInfeasible

_MAX_ATTEMPTS = 1000


@dataclass(frozen=True)
class SceneSpec:
    width: int = 64
    height: int = 64
    n_objects: int = 2
    shapes: tuple = ("rectangle", "ellipse", "blob")
    color_separation: float = 60.0
    noise_sigma: float = 0.0
    occlusion: bool = False
    n_classes: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        if self.width > 256 or self.height > 256:
            raise ValueError("scenes are capped at 256x256 (exact-CRF scale)")
        if self.n_objects < 0:
            raise ValueError("n_objects must be >= 0")


@dataclass(frozen=True)
class Scene:
    image: np.ndarray
    gt_labels: np.ndarray
    instances: tuple  # ((class_id, mask bool (H, W)), ...)
    boxes: BoxSet
    boundary: np.ndarray
    proposals: tuple  # (mask, ...)


def _shape_mask(shape: str, w: int, h: int, bw: int, bh: int, x0: int, y0: int,
                rng: np.random.Generator) -> np.ndarray:
    mask = np.zeros((h, w), dtype=bool)
    ys, xs = np.mgrid[0:h, 0:w]
    if shape == "rectangle":
        mask[y0:y0 + bh, x0:x0 + bw] = True
    elif shape == "ellipse":
        a, b = bw / 2.0, bh / 2.0
        cx, cy = x0 + a, y0 + b
        mask = (((xs + 0.5 - cx) / a) ** 2 + ((ys + 0.5 - cy) / b) ** 2) <= 1.0
    elif shape == "blob":
        a, b = bw / 2.0, bh / 2.0
        cx, cy = x0 + a, y0 + b
        mask = (((xs + 0.5 - cx) / a) ** 2 + ((ys + 0.5 - cy) / b) ** 2) <= 1.0
        for _ in range(int(rng.integers(1, 3))):
            fa = a * rng.uniform(0.4, 0.8)
            fb = b * rng.uniform(0.4, 0.8)
            fcx = cx + rng.uniform(-0.35, 0.35) * bw
            fcy = cy + rng.uniform(-0.35, 0.35) * bh
            lobe = (((xs + 0.5 - fcx) / fa) ** 2 + ((ys + 0.5 - fcy) / fb) ** 2) <= 1.0
            mask |= lobe
        # keep the blob inside the nominal box so bounds stay predictable
        clip = np.zeros_like(mask)
        clip[y0:y0 + bh, x0:x0 + bw] = True
        mask &= clip
    else:
        raise ValueError(f"unknown shape {shape!r}")
    return mask


def _pick_color(rng: np.random.Generator, taken: list, separation: float) -> np.ndarray:
    for _ in range(_MAX_ATTEMPTS):
        color = rng.integers(0, 256, 3).astype(np.float64)
        if all(np.linalg.norm(color - t) >= separation for t in taken):
            return color
    raise SpecInfeasible(f"cannot pick a colour {separation} away from {len(taken)} others")


def _tight_box(mask: np.ndarray, class_id: int) -> Box | None:
    ys, xs = np.nonzero(mask)
    if len(ys) == 0:
        return None
    return Box(class_id, int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


def generate(spec: SceneSpec) -> Scene:
    """Produce one scene, bit-identical for identical specs."""
    rng = np.random.default_rng(spec.seed)
    w, h = spec.width, spec.height
    colors = [_pick_color(rng, [], 0.0)]  # background colour first

    placed = []  # (class_id, full mask)
    for _ in range(spec.n_objects):
        for attempt in range(_MAX_ATTEMPTS):
            shape = spec.shapes[rng.integers(len(spec.shapes))]
            bw = int(rng.integers(max(8, w // 8), max(10, w // 2)))
            bh = int(rng.integers(max(8, h // 8), max(10, h // 2)))
            x0 = int(rng.integers(1, max(2, w - bw - 1)))
            y0 = int(rng.integers(1, max(2, h - bh - 1)))
            mask = _shape_mask(shape, w, h, bw, bh, x0, y0, rng)
            if not mask.any():
                continue
            tight = _tight_box(mask, 0)
            if mask.sum() / tight.area < 0.5:
                continue  # too thin for the outlier-reset invariant
            if not spec.occlusion and any(m[mask].any() or _boxes_touch(tight, _tight_box(m, 0))
                                          for _, m in placed):
                continue
            placed.append((int(rng.integers(1, spec.n_classes + 1)), mask))
            break
        else:
            raise SpecInfeasible(
                f"could not place object {len(placed)} after {_MAX_ATTEMPTS} attempts")

    # later objects occlude earlier ones
    gt = np.zeros((h, w), dtype=np.uint8)
    owner = np.full((h, w), -1, dtype=np.int64)
    for i, (cls, mask) in enumerate(placed):
        owner[mask] = i
    instances = []
    boxes = []
    for i, (cls, _mask) in enumerate(placed):
        visible = owner == i
        tight = _tight_box(visible, cls)
        if tight is None or visible.sum() / tight.area < 0.5:
            raise SpecInfeasible("occlusion left an instance too fragmented")
        instances.append((cls, visible))
        boxes.append(tight)
        gt[visible] = cls

    image = np.empty((h, w, 3), dtype=np.float64)
    image[:, :] = colors[0]
    for i, (cls, _mask) in enumerate(placed):
        color = _pick_color(rng, colors, spec.color_separation)
        colors.append(color)
        image[owner == i] = color
    if spec.noise_sigma > 0:
        image += rng.normal(0.0, spec.noise_sigma, image.shape)
    image = np.clip(np.round(image), 0, 255).astype(np.uint8)

    boundary = np.zeros((h, w), dtype=np.float64)
    contours = np.zeros((h, w), dtype=bool)
    for _cls, visible in instances:
        contours |= visible & ~ndi.binary_erosion(visible)
    boundary[ndi.binary_dilation(contours)] = 1.0

    proposals = []
    for _cls, visible in instances:
        proposals.append(visible.copy())
        for variant in _distractors(visible, rng):
            proposals.append(variant)

    box_set = order_boxes(boxes, (w, h))
    return Scene(image, gt, tuple(instances), box_set, boundary, tuple(proposals))


def _boxes_touch(a: Box | None, b: Box | None) -> bool:
    if a is None or b is None:
        return False
    return not (a.xmax <= b.xmin or b.xmax <= a.xmin or
                a.ymax <= b.ymin or b.ymax <= a.ymin)


def _distractors(mask: np.ndarray, rng: np.random.Generator) -> list:
    """Systematic near-miss variants of a GT mask."""
    out = []
    eroded = ndi.binary_erosion(mask, iterations=int(rng.integers(1, 3)))
    if eroded.any():
        out.append(eroded)
    out.append(ndi.binary_dilation(mask, iterations=int(rng.integers(1, 3))))
    dy, dx = rng.integers(2, 4, 2) * rng.choice([-1, 1], 2)
    shifted = np.roll(np.roll(mask, int(dy), axis=0), int(dx), axis=1)
    # roll wraps; clear anything that wrapped across the border
    if dy > 0:
        shifted[:int(dy), :] = False
    else:
        shifted[int(dy):, :] = False
    if dx > 0:
        shifted[:, :int(dx)] = False
    else:
        shifted[:, int(dx):] = False
    if shifted.any():
        out.append(shifted)
    return out


def generate_corpus(base_spec: SceneSpec, count: int) -> list[Scene]:
    """`count` scenes with seeds base_seed..base_seed+count-1."""
    from dataclasses import replace
    return [generate(replace(base_spec, seed=base_spec.seed + i)) for i in range(count)]
