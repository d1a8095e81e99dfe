"""Iterated GMM / min-cut segmentation of a single annotated box.

Two pairwise flavours: classic RGB contrast, and boundary-probability
terms fed by an external edge detector ("GrabCut+").
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .core import Box, WeakLabelConfig, clip_box
from .errors import DegenerateBox, MissingBoundaryMap
from .gmm import fit_gmm, neg_log_likelihood
from .maxflow import FlowNetwork, min_cut

log = logging.getLogger(__name__)

RGB_CONTRAST = "rgb"
BOUNDARY_MAP = "boundary"

# trimap states
TRIMAP_BG = 0  # definite background
TRIMAP_FG = 1  # probable foreground

_BG_HARD_COST = 1e9  # terminal cost pinning definite-background pixels
_EARLY_STOP_FRAC = 1e-3


@dataclass(frozen=True)
class GrabCutParams:
    pairwise_source: str = RGB_CONTRAST
    lam: float = 50.0
    gamma_boundary: float = 5.0
    margin: float = 0.40

    def __post_init__(self) -> None:
        if self.pairwise_source not in (RGB_CONTRAST, BOUNDARY_MAP):
            raise ValueError(f"unknown pairwise_source {self.pairwise_source!r}")
        if self.lam < 0 or self.gamma_boundary < 0:
            raise ValueError("lam and gamma_boundary must be >= 0")


def init_trimap(box: Box, margin: float, dims: tuple[int, int]) -> tuple[Box, np.ndarray]:
    """Expand the box by margin*(w, h) per side and seed the trimap.

    Returns (crop_rect, trimap over crop). Pixels inside the box are
    probable foreground, the surrounding ring definite background. If
    the crop degenerates to the box (image-border case) the 1-pixel
    crop border is used as background so both colour models stay
    fittable.
    """
    box = clip_box(box, dims)
    w, h = dims
    ex = int(round(margin * box.width))
    ey = int(round(margin * box.height))
    crop = Box(box.class_id,
               max(0, box.xmin - ex), max(0, box.ymin - ey),
               min(w, box.xmax + ex), min(h, box.ymax + ey))
    trimap = np.full((crop.height, crop.width), TRIMAP_BG, dtype=np.uint8)
    trimap[box.ymin - crop.ymin:box.ymax - crop.ymin,
           box.xmin - crop.xmin:box.xmax - crop.xmin] = TRIMAP_FG
    if not np.any(trimap == TRIMAP_BG):
        trimap[0, :] = TRIMAP_BG
        trimap[-1, :] = TRIMAP_BG
        trimap[:, 0] = TRIMAP_BG
        trimap[:, -1] = TRIMAP_BG
    return crop, trimap


_OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1))  # one direction per 8-neighbour pair


def _neighbour_pairs(h: int, w: int):
    """Yield (idx_p, idx_q, dist) index arrays for the 8-neighbourhood."""
    grid = np.arange(h * w).reshape(h, w)
    for dy, dx in _OFFSETS:
        src = grid[0:h - dy, max(0, -dx):w - max(0, dx)]
        dst = grid[dy:h, max(0, dx):w + min(0, dx)]
        dist = float(np.hypot(dy, dx))
        yield src.ravel(), dst.ravel(), dist


def pairwise_weights(crop_image: np.ndarray, boundary_crop, params: GrabCutParams):
    """Edge list (u, v, weight) over the crop's 8-neighbourhood.

    RGB mode: lam * exp(-beta * |z_p - z_q|^2) / dist with
    beta = 1 / (2 * mean |z_p - z_q|^2) over all crop edges.
    Boundary mode: lam * exp(-gamma * max(pb_p, pb_q)) / dist.
    """
    h, w = crop_image.shape[:2]
    flat = crop_image.reshape(-1, 3).astype(np.float64)
    pairs = list(_neighbour_pairs(h, w))
    if params.pairwise_source == RGB_CONTRAST:
        sq = [np.sum((flat[u] - flat[v]) ** 2, axis=1) for u, v, _ in pairs]
        total = sum(float(s.sum()) for s in sq)
        count = sum(len(s) for s in sq)
        mean_sq = total / count if count else 0.0
        beta = 0.0 if mean_sq <= 0 else 1.0 / (2.0 * mean_sq)
        us, vs, ws = [], [], []
        for (u, v, dist), s in zip(pairs, sq):
            us.append(u)
            vs.append(v)
            ws.append(params.lam * np.exp(-beta * s) / dist)
    else:
        if boundary_crop is None:
            raise MissingBoundaryMap("boundary pairwise terms need a boundary map")
        pb = boundary_crop.ravel()
        us, vs, ws = [], [], []
        for u, v, dist in pairs:
            us.append(u)
            vs.append(v)
            ws.append(params.lam * np.exp(-params.gamma_boundary * np.maximum(pb[u], pb[v])) / dist)
    return np.concatenate(us), np.concatenate(vs), np.concatenate(ws)


def segmentation_energy(unary_fg, unary_bg, fg, edges) -> float:
    """Sum of chosen unaries plus pairwise weight across the cut."""
    us, vs, ws = edges
    e = float(np.where(fg.ravel(), unary_fg, unary_bg).sum())
    cut = fg.ravel()[us] != fg.ravel()[vs]
    return e + float(ws[cut].sum())


def run_grabcut(image: np.ndarray, box: Box, cfg: WeakLabelConfig,
                params: GrabCutParams, boundary=None, seed=None,
                return_energy: bool = False):
    """Segment one box; returns a full-image bool mask (FG subset of box).

    The seed defaults to cfg.rng_seed; fully determines GMM fits and
    therefore the output.
    """
    h, w = image.shape[:2]
    box = clip_box(box, (w, h))
    if seed is None:
        seed = cfg.rng_seed
    crop, trimap = init_trimap(box, params.margin, (w, h))
    ys, xs = crop.slices()
    crop_img = image[ys, xs]
    boundary_crop = boundary[ys, xs] if boundary is not None else None
    if params.pairwise_source == BOUNDARY_MAP and boundary is None:
        raise MissingBoundaryMap("boundary pairwise terms need a boundary map")

    flat = crop_img.reshape(-1, 3).astype(np.float64)
    bg_fixed = (trimap == TRIMAP_BG).ravel()
    inside_box = (trimap == TRIMAP_FG).ravel()
    us, vs, ws = pairwise_weights(crop_img, boundary_crop, params)

    fg = inside_box.copy()
    energies = []
    for it in range(cfg.grabcut_iters):
        fg_px = flat[fg]
        bg_px = flat[~fg]
        if len(fg_px) == 0 or len(bg_px) == 0:
            return _box_fallback(box, (h, w), return_energy, energies)
        fg_gmm = fit_gmm(fg_px, cfg.gmm_components, np.random.SeedSequence([seed, it, 0]))
        bg_gmm = fit_gmm(bg_px, cfg.gmm_components, np.random.SeedSequence([seed, it, 1]))
        unary_fg = neg_log_likelihood(fg_gmm, flat)  # cost of labelling FG
        unary_bg = neg_log_likelihood(bg_gmm, flat)  # cost of labelling BG
        # negative log-likelihoods can go below zero; a per-pixel shift of
        # both terminals leaves the optimal cut unchanged
        shift = np.minimum(unary_fg, unary_bg)
        cap_sink = unary_fg - shift
        cap_source = unary_bg - shift
        cap_sink[bg_fixed] = _BG_HARD_COST
        cap_source[bg_fixed] = 0.0
        net = FlowNetwork(n_nodes=len(flat), cap_source=cap_source, cap_sink=cap_sink,
                          edges_u=us, edges_v=vs, cap_uv=ws, cap_vu=ws)
        _, new_fg = min_cut(net)
        new_fg &= inside_box  # FG never escapes the annotated box
        if return_energy:
            energies.append(segmentation_energy(unary_fg, unary_bg, new_fg, (us, vs, ws)))
        changed = np.count_nonzero(new_fg != fg)
        fg = new_fg
        if not np.any(fg):
            return _box_fallback(box, (h, w), return_energy, energies)
        if changed < _EARLY_STOP_FRAC * len(flat):
            break

    mask = np.zeros((h, w), dtype=bool)
    mask[ys, xs] = fg.reshape(crop.height, crop.width)
    if return_energy:
        return mask, energies
    return mask


def _box_fallback(box: Box, shape, return_energy, energies):
    log.warning("grabcut produced an empty side; falling back to the box rectangle")
    mask = np.zeros(shape, dtype=bool)
    mask[box.slices()] = True
    if return_energy:
        return mask, energies
    return mask
