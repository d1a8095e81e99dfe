"""File formats: images, annotations, label maps, boundaries, proposals, detections.

Label maps are indexed 8-bit PNGs with the Pascal 21-colour palette and
index 255 = (224, 224, 192). Annotations, proposals and detections use
small JSON schemas; see the README for the exact shapes.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image as PilImage

from .core import Box, DEFAULT_NUM_CLASSES, clip_box
from .errors import (
    DegenerateBox,
    DimensionMismatch,
    FormatError,
    ParseError,
    UnknownClassId,
)


def pascal_palette(ignore_rgb=(224, 224, 192)) -> np.ndarray:
    """256x3 uint8 Pascal VOC colour palette (bit-reversal construction)."""
    palette = np.zeros((256, 3), dtype=np.uint8)
    for i in range(256):
        cid = i
        r = g = b = 0
        for shift in range(8):
            r |= ((cid >> 0) & 1) << (7 - shift)
            g |= ((cid >> 1) & 1) << (7 - shift)
            b |= ((cid >> 2) & 1) << (7 - shift)
            cid >>= 3
        palette[i] = (r, g, b)
    palette[255] = ignore_rgb
    return palette


def write_labelmap(labels: np.ndarray, path) -> None:
    """Write a label map as an indexed 8-bit PNG with the Pascal palette."""
    labels = np.asarray(labels)
    if labels.dtype != np.uint8 or labels.ndim != 2:
        raise FormatError("label map must be a 2-D uint8 array")
    img = PilImage.fromarray(labels, mode="P")
    img.putpalette(pascal_palette().flatten().tolist())
    img.save(path, format="PNG")


def read_labelmap(path) -> np.ndarray:
    """Read an indexed/grayscale 8-bit PNG back into a uint8 label map."""
    with PilImage.open(path) as img:
        if img.mode not in ("P", "L"):
            raise FormatError(f"label map must be 8-bit indexed/grayscale, got mode {img.mode}")
        return np.asarray(img, dtype=np.uint8)


def read_image(path) -> np.ndarray:
    """Read an RGB image as (H, W, 3) uint8."""
    with PilImage.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def write_image(image: np.ndarray, path) -> None:
    PilImage.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def read_boundary_map(path) -> np.ndarray:
    """Read an 8- or 16-bit grayscale PNG as boundary probabilities in [0, 1]."""
    with PilImage.open(path) as img:
        if img.mode == "L":
            return np.asarray(img, dtype=np.float64) / 255.0
        if img.mode in ("I", "I;16", "I;16B"):
            return np.asarray(img, dtype=np.float64) / 65535.0
        raise FormatError(f"boundary map must be grayscale, got mode {img.mode}")


def write_boundary_map(prob: np.ndarray, path) -> None:
    arr = np.clip(np.asarray(prob, dtype=np.float64), 0.0, 1.0)
    PilImage.fromarray(np.round(arr * 255.0).astype(np.uint8), mode="L").save(path, format="PNG")


def read_annotations(path, max_class: int = DEFAULT_NUM_CLASSES):
    """Parse an annotation JSON file; returns (boxes, (width, height)).

    Boxes are validated and clipped to the stated image dimensions.
    """
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed JSON: {exc}") from exc
    try:
        w = int(data["image_width"])
        h = int(data["image_height"])
        raw = data["boxes"]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{path}: missing required field: {exc}") from exc
    boxes = []
    for entry in raw:
        try:
            box = Box(int(entry["class_id"]), int(entry["xmin"]), int(entry["ymin"]),
                      int(entry["xmax"]), int(entry["ymax"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: bad box entry {entry!r}") from exc
        if not (1 <= box.class_id <= max_class):
            raise UnknownClassId(f"{path}: class_id {box.class_id} outside [1, {max_class}]")
        if box.xmax <= box.xmin or box.ymax <= box.ymin:
            raise DegenerateBox(f"{path}: box {entry!r} has non-positive extent")
        boxes.append(clip_box(box, (w, h)))
    return boxes, (w, h)


def write_annotations(boxes, dims, path) -> None:
    w, h = dims
    data = {
        "image_width": w,
        "image_height": h,
        "boxes": [
            {"class_id": b.class_id, "xmin": b.xmin, "ymin": b.ymin,
             "xmax": b.xmax, "ymax": b.ymax}
            for b in boxes
        ],
    }
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)


def read_mask(path, expected_dims=None) -> np.ndarray:
    """Read a binary mask PNG; grayscale values > 127 count as foreground."""
    with PilImage.open(path) as img:
        if img.mode not in ("L", "P", "1"):
            raise FormatError(f"mask must be grayscale, got mode {img.mode}")
        arr = np.asarray(img.convert("L"), dtype=np.uint8)
    mask = arr > 127
    if expected_dims is not None and mask.shape != tuple(expected_dims):
        raise DimensionMismatch(f"{path}: mask shape {mask.shape} != expected {tuple(expected_dims)}")
    return mask


def write_mask(mask: np.ndarray, path) -> None:
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    PilImage.fromarray(arr, mode="L").save(path, format="PNG")


def read_proposals(proposal_dir, expected_dims=None) -> list[np.ndarray]:
    """Load the proposal masks listed in <dir>/proposals.json."""
    proposal_dir = Path(proposal_dir)
    manifest_path = proposal_dir / "proposals.json"
    try:
        with open(manifest_path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{manifest_path}: malformed JSON: {exc}") from exc
    names = data.get("masks")
    if names is None:
        raise ParseError(f"{manifest_path}: missing 'masks' list")
    return [read_mask(proposal_dir / name, expected_dims) for name in names]


def write_proposals(masks, proposal_dir) -> None:
    proposal_dir = Path(proposal_dir)
    proposal_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for i, mask in enumerate(masks):
        name = f"m{i}.png"
        write_mask(mask, proposal_dir / name)
        names.append(name)
    with open(proposal_dir / "proposals.json", "w") as fh:
        json.dump({"masks": names}, fh, indent=1)


@dataclass(frozen=True)
class Detection:
    class_id: int
    box: Box
    score: float
    mask: Optional[np.ndarray] = None  # (H, W) bool


def read_detections(path, expected_dims=None, max_class: int = DEFAULT_NUM_CLASSES) -> list[Detection]:
    """Parse a detection JSON file; result is sorted by descending score."""
    path = Path(path)
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed JSON: {exc}") from exc
    dets = []
    for entry in data.get("detections", []):
        try:
            bd = entry["box"]
            box = Box(int(entry["class_id"]), int(bd["xmin"]), int(bd["ymin"]),
                      int(bd["xmax"]), int(bd["ymax"]))
            score = float(entry["score"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: bad detection entry {entry!r}") from exc
        if not np.isfinite(score):
            raise ParseError(f"{path}: non-finite score in {entry!r}")
        if not (1 <= box.class_id <= max_class):
            raise UnknownClassId(f"{path}: class_id {box.class_id} outside [1, {max_class}]")
        mask = None
        if entry.get("mask"):
            mask = read_mask(path.parent / entry["mask"], expected_dims)
        dets.append(Detection(box.class_id, box, score, mask))
    dets.sort(key=lambda d: -d.score)
    return dets


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    image_path: Path
    annotation_path: Path
    boundary_path: Optional[Path] = None
    proposal_dir: Optional[Path] = None
    gt_label_path: Optional[Path] = None


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    root: Path = field(default_factory=Path)


def read_manifest(path) -> DatasetManifest:
    """Load a dataset manifest; all referenced files must exist."""
    path = Path(path)
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed JSON: {exc}") from exc
    root = path.parent
    entries = []
    for entry in data.get("entries", []):
        try:
            image_path = root / entry["image_path"]
            annotation_path = root / entry["annotation_path"]
        except (KeyError, TypeError) as exc:
            raise ParseError(f"{path}: bad manifest entry {entry!r}") from exc
        name = entry.get("name") or Path(entry["image_path"]).stem
        opt = {}
        for key in ("boundary_path", "proposal_dir", "gt_label_path"):
            opt[key] = root / entry[key] if entry.get(key) else None
        me = ManifestEntry(name, image_path, annotation_path, **opt)
        for p in (me.image_path, me.annotation_path, me.boundary_path,
                  me.proposal_dir, me.gt_label_path):
            if p is not None and not os.path.exists(p):
                raise ParseError(f"{path}: referenced file missing: {p}")
        entries.append(me)
    return DatasetManifest(tuple(entries), root)


def write_manifest(entries: list[dict], path) -> None:
    with open(path, "w") as fh:
        json.dump({"entries": entries}, fh, indent=1, sort_keys=True)
