"""Fully-connected CRF mean-field filtering with Potts compatibility.

Message passing is exact (dense N x N kernel) up to 16384 pixels; above
that a 5-sigma-truncated spatial window is used. Two Gaussian kernels:
appearance (position + colour) and smoothness (position only).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ImageTooLarge

EXACT_PIXEL_LIMIT = 16384
_TRUNCATED_OP_BUDGET = 2_000_000_000


@dataclass(frozen=True)
class CrfParams:
    w_appearance: float = 5.0
    theta_alpha: float = 60.0
    theta_beta: float = 10.0
    w_smooth: float = 3.0
    theta_gamma: float = 3.0
    iterations: int = 10
    unary_confidence: float = 0.9

    def __post_init__(self) -> None:
        if self.w_appearance < 0 or self.w_smooth < 0:
            raise ValueError("kernel weights must be >= 0")
        if self.theta_alpha <= 0 or self.theta_beta <= 0 or self.theta_gamma <= 0:
            raise ValueError("kernel widths must be > 0")


def labelmap_to_unaries(labels: np.ndarray, n_labels: int,
                        confidence: float) -> np.ndarray:
    """Hard labels -> per-pixel probability vectors (H, W, n_labels).

    The stated label gets `confidence`, the rest share the remainder;
    ignore pixels (255) get the uniform distribution.
    """
    if n_labels < 2:
        raise ValueError("n_labels must be >= 2")
    if not (1.0 / n_labels < confidence < 1.0):
        raise ValueError("confidence must lie in (1/n_labels, 1)")
    h, w = labels.shape
    unaries = np.full((h, w, n_labels), (1.0 - confidence) / (n_labels - 1))
    ys, xs = np.nonzero(labels != 255)
    unaries[ys, xs, labels[ys, xs]] = confidence
    unaries[labels == 255] = 1.0 / n_labels
    return unaries


def _exact_kernel(image: np.ndarray, params: CrfParams) -> np.ndarray:
    h, w = image.shape[:2]
    n = h * w
    ys, xs = np.mgrid[0:h, 0:w]
    pos = np.stack([ys.ravel(), xs.ravel()], axis=1).astype(np.float64)
    sq_pos = ((pos[:, None, :] - pos[None, :, :]) ** 2).sum(axis=2)
    k = params.w_smooth * np.exp(-sq_pos / (2.0 * params.theta_gamma ** 2))
    if params.w_appearance > 0:
        col = image.reshape(n, 3).astype(np.float64)
        sq_col = ((col[:, None, :] - col[None, :, :]) ** 2).sum(axis=2)
        k += params.w_appearance * np.exp(
            -sq_pos / (2.0 * params.theta_alpha ** 2)
            - sq_col / (2.0 * params.theta_beta ** 2))
    np.fill_diagonal(k, 0.0)  # a pixel sends no message to itself
    return k


def _truncated_message(q: np.ndarray, image: np.ndarray, params: CrfParams) -> np.ndarray:
    """Q-weighted kernel sums using a truncated spatial window."""
    h, w, n_labels = q.shape
    radius = int(np.ceil(5.0 * max(params.theta_alpha if params.w_appearance > 0 else 0.0,
                                   params.theta_gamma if params.w_smooth > 0 else 0.0)))
    radius = min(radius, max(h, w) - 1)
    ops = (2 * radius + 1) ** 2 * h * w
    if ops > _TRUNCATED_OP_BUDGET:
        raise ImageTooLarge(
            f"{h}x{w} with window radius {radius} exceeds the compute budget")
    col = image.astype(np.float64)
    out = np.zeros_like(q)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dy == 0 and dx == 0:
                continue
            sq_pos = float(dy * dy + dx * dx)
            ws = params.w_smooth * np.exp(-sq_pos / (2.0 * params.theta_gamma ** 2))
            wa_sp = params.w_appearance * np.exp(-sq_pos / (2.0 * params.theta_alpha ** 2))
            if ws < 1e-12 and wa_sp < 1e-12:
                continue
            ys0, ys1 = max(0, -dy), min(h, h - dy)
            xs0, xs1 = max(0, -dx), min(w, w - dx)
            if ys1 <= ys0 or xs1 <= xs0:
                continue  # offset shifts past the smaller image axis
            dst = (slice(ys0, ys1), slice(xs0, xs1))
            src = (slice(ys0 + dy, ys1 + dy), slice(xs0 + dx, xs1 + dx))
            weight = np.full((ys1 - ys0, xs1 - xs0), ws)
            if wa_sp >= 1e-12:
                sq_col = ((col[dst] - col[src]) ** 2).sum(axis=2)
                weight = weight + wa_sp * np.exp(-sq_col / (2.0 * params.theta_beta ** 2))
            out[dst] += weight[:, :, None] * q[src]
    return out


def meanfield(unaries: np.ndarray, image: np.ndarray,
              params: CrfParams) -> tuple[np.ndarray, np.ndarray]:
    """Synchronous mean-field inference; returns (Q, argmax label map)."""
    if unaries.shape[:2] != image.shape[:2]:
        raise DimensionMismatch(f"unaries {unaries.shape[:2]} vs image {image.shape[:2]}")
    sums = unaries.sum(axis=2)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise ValueError("per-pixel unary probabilities must sum to 1")
    h, w, n_labels = unaries.shape
    n = h * w
    if params.w_appearance == 0 and params.w_smooth == 0:
        q = unaries.copy()
        return q, q.argmax(axis=2).astype(np.uint8)

    log_unary = np.log(np.maximum(unaries, 1e-30))
    q = unaries.copy()
    exact = n <= EXACT_PIXEL_LIMIT
    kernel = _exact_kernel(image, params) if exact else None
    for _ in range(params.iterations):
        if exact:
            msg = (kernel @ q.reshape(n, n_labels)).reshape(h, w, n_labels)
        else:
            msg = _truncated_message(q, image, params)
        # Potts compatibility: penalty from mass on all *other* labels
        pairwise = msg.sum(axis=2, keepdims=True) - msg
        logits = log_unary - pairwise
        logits -= logits.max(axis=2, keepdims=True)
        q = np.exp(logits)
        q /= q.sum(axis=2, keepdims=True)
    return q, q.argmax(axis=2).astype(np.uint8)
