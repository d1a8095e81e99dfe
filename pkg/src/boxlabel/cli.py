"""Batch command-line front-end.

Subcommands: synth, gen, denoise, eval, render. Exit codes: 0 success,
2 usage, 3 data error, 4 internal error. Machine-readable errors go to
stderr as `ERROR:<code>: message`.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy.ndimage as ndi

from . import __version__
from .core import WeakLabelConfig, order_boxes
from .dataio import (
    pascal_palette,
    read_annotations,
    read_boundary_map,
    read_image,
    read_labelmap,
    read_manifest,
    read_mask,
    read_proposals,
    write_annotations,
    write_boundary_map,
    write_image,
    write_labelmap,
    write_manifest,
    write_mask,
    write_proposals,
)
from .densecrf import CrfParams
from .denoise import run_round
from .errors import BoxLabelError
from .grabcut import BOUNDARY_MAP, RGB_CONTRAST, GrabCutParams, run_grabcut
from .metrics import instance_eval, semantic_eval
from .synth import SceneSpec, generate
from .weaklabels import (
    TriSegment,
    grabcut_plus_i,
    intersect_mg,
    mask_to_trisegment,
    compose_labelmap,
    pick_best_proposal,
    rasterize_box_inner,
    rasterize_box_labels,
)

log = logging.getLogger("boxlabel")

GEN_METHODS = ("box", "boxi", "grabcut", "grabcut+", "grabcut+i", "mcg", "mg+")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 2 with the stable stderr prefix
        raise UsageError(message)


def sobel_boundary(image: np.ndarray) -> np.ndarray:
    """Gradient-magnitude fallback boundary map, normalized to [0, 1]."""
    gray = image.astype(np.float64).mean(axis=2)
    gx = ndi.sobel(gray, axis=1)
    gy = ndi.sobel(gray, axis=0)
    mag = np.hypot(gx, gy)
    top = mag.max()
    return mag / top if top > 0 else mag


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_metadata(out_dir: Path, args_dict: dict, cfg, extra=None) -> None:
    meta = {
        "tool": "boxlabel",
        "version": __version__,
        "config": dataclasses.asdict(cfg) if dataclasses.is_dataclass(cfg) else cfg,
        "args": {k: str(v) for k, v in sorted(args_dict.items())},
    }
    if extra:
        meta.update(extra)
    with open(out_dir / "metadata.json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def _input_digests(manifest) -> dict:
    out = {}
    for entry in manifest.entries:
        digests = {"image": _sha256(entry.image_path),
                   "annotation": _sha256(entry.annotation_path)}
        if entry.boundary_path:
            digests["boundary"] = _sha256(entry.boundary_path)
        if entry.gt_label_path:
            digests["gt"] = _sha256(entry.gt_label_path)
        out[entry.name] = digests
    return out


def _entry_boundary(entry, args, image):
    if entry.boundary_path is not None:
        return read_boundary_map(entry.boundary_path)
    if getattr(args, "boundaries", None):
        path = Path(args.boundaries) / f"{entry.name}.png"
        if path.exists():
            return read_boundary_map(path)
    return None


def _entry_proposals(entry, args, dims):
    if entry.proposal_dir is not None:
        return read_proposals(entry.proposal_dir, dims)
    if getattr(args, "proposals", None):
        pdir = Path(args.proposals) / entry.name
        if pdir.exists():
            return read_proposals(pdir, dims)
    return None


def _gen_one(entry, index, args, cfg):
    image = read_image(entry.image_path)
    h, w = image.shape[:2]
    raw_boxes, dims = read_annotations(entry.annotation_path, max_class=args.classes)
    if dims != (w, h):
        raise BoxLabelError(f"{entry.name}: annotation dims {dims} != image {(w, h)}")
    boxes = order_boxes(raw_boxes, (w, h))
    # per-image seed derived from position, not worker, so --threads
    # never changes outputs
    img_seed = int(np.random.SeedSequence([cfg.rng_seed, index]).generate_state(1)[0])
    method = args.method

    if method == "box":
        return rasterize_box_labels(boxes, (w, h))
    if method == "boxi":
        return rasterize_box_inner(boxes, (w, h), cfg.inner_region_frac)

    boundary = _entry_boundary(entry, args, image)
    if method in ("grabcut+", "grabcut+i", "mg+") and boundary is None:
        log.warning("%s: no boundary map; using internal gradient boundary", entry.name)
        boundary = sobel_boundary(image)
    proposals = None
    if method in ("mcg", "mg+"):
        proposals = _entry_proposals(entry, args, (h, w))
        if proposals is None:
            raise BoxLabelError(
                f"{entry.name}: method {method} needs proposals; provide "
                "manifest proposal_dir entries or --proposals")

    segments = []
    for i, box in enumerate(boxes):
        if method == "grabcut":
            params = GrabCutParams(pairwise_source=RGB_CONTRAST, margin=cfg.margin_default)
            mask = run_grabcut(image, box, cfg, params, seed=img_seed + i)
            segments.append(mask_to_trisegment(mask, box, i))
        elif method == "grabcut+":
            params = GrabCutParams(pairwise_source=BOUNDARY_MAP, margin=cfg.margin_default)
            mask = run_grabcut(image, box, cfg, params, boundary=boundary, seed=img_seed + i)
            segments.append(mask_to_trisegment(mask, box, i))
        elif method == "grabcut+i":
            params = GrabCutParams(pairwise_source=BOUNDARY_MAP)
            seg = grabcut_plus_i(image, box, replace(cfg, rng_seed=img_seed),
                                 params, boundary=boundary, box_index=i)
            segments.append(seg)
        elif method == "mcg":
            best = pick_best_proposal(box, proposals)
            if best is None:
                mask = np.zeros((h, w), dtype=bool)
                mask[box.slices()] = True
            else:
                mask = best
            segments.append(mask_to_trisegment(mask, box, i))
        elif method == "mg+":
            params = GrabCutParams(pairwise_source=BOUNDARY_MAP, margin=cfg.margin_default)
            gc_mask = run_grabcut(image, box, cfg, params, boundary=boundary, seed=img_seed + i)
            best = pick_best_proposal(box, proposals)
            segments.append(intersect_mg(best, gc_mask, box, i))
    return compose_labelmap(segments, boxes, (w, h))


def cmd_gen(args) -> int:
    manifest = read_manifest(args.manifest)
    cfg = WeakLabelConfig(rng_seed=args.seed, n_perturbations=args.runs)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def work(item):
        index, entry = item
        labels = _gen_one(entry, index, args, cfg)
        write_labelmap(labels, out_dir / f"{entry.name}.png")

    items = list(enumerate(manifest.entries))
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            list(pool.map(work, items))
    else:
        for item in items:
            work(item)
    _write_metadata(out_dir, vars(args), cfg,
                    {"input_digests": _input_digests(manifest)})
    return 0


def cmd_denoise(args) -> int:
    manifest = read_manifest(args.manifest)
    stages = tuple(int(s) for s in args.stages.split(","))
    if any(s not in (1, 2, 3) for s in stages):
        raise UsageError("--stages entries must be among 1,2,3")
    cfg = WeakLabelConfig(rng_seed=args.seed, outlier_iou_thresh=args.iou_thresh)
    crf = CrfParams(w_appearance=args.crf_w_appearance, theta_alpha=args.crf_theta_alpha,
                    theta_beta=args.crf_theta_beta, w_smooth=args.crf_w_smooth,
                    theta_gamma=args.crf_theta_gamma, iterations=args.crf_iterations,
                    unary_confidence=args.crf_unary_confidence)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def work(entry):
        image = read_image(entry.image_path)
        h, w = image.shape[:2]
        raw_boxes, dims = read_annotations(entry.annotation_path, max_class=args.classes)
        boxes = order_boxes(raw_boxes, (w, h))
        pred = read_labelmap(Path(args.pred) / f"{entry.name}.png")
        initial = read_labelmap(Path(args.initial) / f"{entry.name}.png")
        labels = run_round(pred, boxes, initial, image, cfg, crf,
                           n_classes=args.classes, stages=stages)
        write_labelmap(labels, out_dir / f"{entry.name}.png")

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            list(pool.map(work, manifest.entries))
    else:
        for entry in manifest.entries:
            work(entry)
    _write_metadata(out_dir, vars(args), cfg,
                    {"crf": dataclasses.asdict(crf),
                     "input_digests": _input_digests(manifest)})
    return 0


def _load_instance_file(path):
    """Instance JSON: single image or {"images": [...]}; masks are paths
    relative to the file. Detections carry scores, GT instances do not."""
    path = Path(path)
    with open(path) as fh:
        data = json.load(fh)
    images = data["images"] if "images" in data else [data]
    dets, gts = [], []
    for img in images:
        d, g = [], []
        for entry in img.get("detections", []):
            mask = read_mask(path.parent / entry["mask"]) if entry.get("mask") else None
            d.append((int(entry["class_id"]), float(entry["score"]), mask))
        for entry in img.get("instances", []):
            g.append((int(entry["class_id"]), read_mask(path.parent / entry["mask"])))
        dets.append(d)
        gts.append(g)
    return dets, gts


def cmd_eval(args) -> int:
    if args.eval_kind == "semantic":
        pred_dir, gt_dir = Path(args.pred), Path(args.gt)
        names = sorted(p.name for p in gt_dir.glob("*.png"))
        if not names:
            raise BoxLabelError(f"no ground-truth label maps in {gt_dir}")
        preds = [read_labelmap(pred_dir / n) for n in names]
        gts = [read_labelmap(gt_dir / n) for n in names]
        report = semantic_eval(preds, gts, args.classes).to_json_dict()
    else:
        dets, _ = _load_instance_file(args.dets)
        _, gts = _load_instance_file(args.gt)
        if len(dets) != len(gts):
            raise BoxLabelError("detection and GT files list different image counts")
        thresholds = tuple(float(t) for t in args.iou.split(","))
        report = instance_eval(dets, gts, thresholds).to_json_dict()
    text = json.dumps(report, indent=1, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    return 0


def cmd_render(args) -> int:
    manifest = read_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    palette = pascal_palette()
    for entry in manifest.entries:
        image = read_image(entry.image_path).astype(np.float64)
        labels = read_labelmap(Path(args.labels) / f"{entry.name}.png")
        colors = palette[labels].astype(np.float64)
        blend = labels != 0  # alpha applies to non-background only
        out = image.copy()
        out[blend] = (1 - args.alpha) * image[blend] + args.alpha * colors[blend]
        write_image(np.round(out).astype(np.uint8), out_dir / f"{entry.name}.png")
    return 0


def cmd_synth(args) -> int:
    if args.spec:
        with open(args.spec) as fh:
            spec = SceneSpec(**json.load(fh))
    else:
        spec = SceneSpec()
    spec = replace(spec, seed=args.seed)
    out = Path(args.out)
    for sub in ("images", "annotations", "boundaries", "gt", "gt_instances", "proposals"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(args.count):
        scene = generate(replace(spec, seed=spec.seed + i))
        name = f"scene_{i:04d}"
        write_image(scene.image, out / "images" / f"{name}.png")
        write_annotations(scene.boxes, (spec.width, spec.height),
                          out / "annotations" / f"{name}.json")
        write_boundary_map(scene.boundary, out / "boundaries" / f"{name}.png")
        write_labelmap(scene.gt_labels, out / "gt" / f"{name}.png")
        write_proposals(scene.proposals, out / "proposals" / name)
        inst_dir = out / "gt_instances" / name
        inst_dir.mkdir(parents=True, exist_ok=True)
        inst_entries = []
        for j, (cls, mask) in enumerate(scene.instances):
            write_mask(mask, inst_dir / f"i{j}.png")
            inst_entries.append({"class_id": cls, "mask": f"i{j}.png"})
        with open(inst_dir / "instances.json", "w") as fh:
            json.dump({"instances": inst_entries}, fh, indent=1)
        entries.append({
            "name": name,
            "image_path": f"images/{name}.png",
            "annotation_path": f"annotations/{name}.json",
            "boundary_path": f"boundaries/{name}.png",
            "proposal_dir": f"proposals/{name}",
            "gt_label_path": f"gt/{name}.png",
        })
    write_manifest(entries, out / "manifest.json")
    _write_metadata(out, vars(args), spec)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="boxlabel", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int,
                       default=int(os.environ.get("BOXLABEL_THREADS", "1")))
        p.add_argument("--classes", type=int, default=20,
                       help="number of object classes C")

    p = sub.add_parser("gen", help="generate label maps from boxes")
    p.add_argument("--method", required=True, choices=GEN_METHODS)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--boundaries", help="directory of <name>.png boundary maps")
    p.add_argument("--proposals", help="directory of per-image proposal subdirs")
    p.add_argument("--runs", type=int, default=150,
                   help="perturbed runs for grabcut+i")
    common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("denoise", help="apply inter-round post-processing stages")
    p.add_argument("--pred", required=True)
    p.add_argument("--initial", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stages", default="1,2,3")
    p.add_argument("--iou-thresh", type=float, default=0.5, dest="iou_thresh")
    p.add_argument("--crf-w-appearance", type=float, default=5.0)
    p.add_argument("--crf-theta-alpha", type=float, default=60.0)
    p.add_argument("--crf-theta-beta", type=float, default=10.0)
    p.add_argument("--crf-w-smooth", type=float, default=3.0)
    p.add_argument("--crf-theta-gamma", type=float, default=3.0)
    p.add_argument("--crf-iterations", type=int, default=10)
    p.add_argument("--crf-unary-confidence", type=float, default=0.9)
    common(p)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("eval", help="score label maps or instance masks")
    esub = p.add_subparsers(dest="eval_kind", required=True)
    ps = esub.add_parser("semantic")
    ps.add_argument("--pred", required=True)
    ps.add_argument("--gt", required=True)
    ps.add_argument("--classes", type=int, default=20)
    ps.add_argument("--out")
    ps.set_defaults(func=cmd_eval)
    pi = esub.add_parser("instance")
    pi.add_argument("--dets", required=True)
    pi.add_argument("--gt", required=True)
    pi.add_argument("--iou", default="0.5,0.75")
    pi.add_argument("--out")
    pi.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="palette overlays for inspection")
    p.add_argument("--labels", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=0.6)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("synth", help="generate a synthetic dataset tree")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--spec", help="JSON file of SceneSpec fields")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"ERROR:2: {exc}", file=sys.stderr)
        return 2
    except BoxLabelError as exc:
        print(f"ERROR:3: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # internal failure
        print(f"ERROR:4: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
