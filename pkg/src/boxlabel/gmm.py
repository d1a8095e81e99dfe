"""Gaussian mixture colour models for GrabCut unary terms.

Fitting is seeded k-means++ followed by EM on full 3x3 covariances.
Covariances are regularized with 1e-3 * I so densities stay finite on
flat colour regions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import EmptyInput

_COV_REG = 1e-3
_EM_TOL = 1e-4
_EM_MAX_ITERS = 50
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class Gmm:
    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, 3)
    covariances: np.ndarray  # (K, 3, 3)
    log_likelihood_history: tuple = field(default=(), compare=False)

    @property
    def n_components(self) -> int:
        return len(self.weights)


def _component_log_pdf(pixels: np.ndarray, means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """log N(x; mu_k, Sigma_k) for every pixel/component pair -> (N, K)."""
    n, k = len(pixels), len(means)
    out = np.empty((n, k))
    for j in range(k):
        chol = np.linalg.cholesky(covs[j])
        diff = pixels - means[j]
        sol = np.linalg.solve(chol, diff.T)  # (3, N)
        maha = np.sum(sol * sol, axis=0)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        out[:, j] = -0.5 * (3 * _LOG_2PI + logdet + maha)
    return out


def _kmeans_pp(pixels: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty((k, 3))
    centers[0] = pixels[rng.integers(len(pixels))]
    d2 = np.sum((pixels - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j] = pixels[rng.integers(len(pixels))]
        else:
            centers[j] = pixels[rng.choice(len(pixels), p=d2 / total)]
        d2 = np.minimum(d2, np.sum((pixels - centers[j]) ** 2, axis=1))
    return centers


def fit_gmm(pixels: np.ndarray, k: int, seed) -> Gmm:
    """Fit a K-component mixture to RGB pixels; deterministic given the seed.

    seed may be an int or anything np.random.default_rng accepts. K is
    reduced to the pixel count when fewer pixels than components exist.
    """
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 3)
    if len(pixels) == 0:
        raise EmptyInput("cannot fit a GMM to zero pixels")
    if k < 1:
        raise ValueError("k must be >= 1")
    k = min(k, len(pixels))
    rng = np.random.default_rng(seed)

    centers = _kmeans_pp(pixels, k, rng)
    assign = np.argmin(
        ((pixels[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2), axis=1
    )

    eye = _COV_REG * np.eye(3)
    weights = np.empty(k)
    means = np.empty((k, 3))
    covs = np.empty((k, 3, 3))
    for j in range(k):
        sel = pixels[assign == j]
        if len(sel) == 0:
            sel = pixels[rng.integers(len(pixels))][None, :]
        weights[j] = len(sel)
        means[j] = sel.mean(axis=0)
        diff = sel - means[j]
        covs[j] = diff.T @ diff / len(sel) + eye
    weights /= weights.sum()

    history = []
    for _ in range(_EM_MAX_ITERS):
        # E step
        log_joint = _component_log_pdf(pixels, means, covs) + np.log(weights)
        log_norm = logsumexp(log_joint, axis=1)
        loglik = float(log_norm.sum())
        if history and loglik < history[-1]:
            # the regularized M-step overshot; revert to the previous params
            weights, means, covs = prev
            break
        resp = np.exp(log_joint - log_norm[:, None])
        if history and loglik - history[-1] < _EM_TOL:
            history.append(loglik)
            break
        history.append(loglik)
        prev = (weights, means, covs)
        # M step
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-12)
        new_means = (resp.T @ pixels) / nk[:, None]
        new_covs = np.empty_like(covs)
        for j in range(k):
            diff = pixels - new_means[j]
            new_covs[j] = (resp[:, j, None] * diff).T @ diff / nk[j] + eye
        weights = nk / len(pixels)
        means, covs = new_means, new_covs

    return Gmm(weights=weights, means=means, covariances=covs,
               log_likelihood_history=tuple(history))


def neg_log_likelihood(g: Gmm, pixels: np.ndarray) -> np.ndarray:
    """-log sum_k w_k N(pixel; mu_k, Sigma_k), vectorized over pixels."""
    pixels = np.asarray(pixels, dtype=np.float64)
    single = pixels.ndim == 1
    pixels = pixels.reshape(-1, 3)
    log_joint = _component_log_pdf(pixels, g.means, g.covariances) + np.log(g.weights)
    nll = -logsumexp(log_joint, axis=1)
    return float(nll[0]) if single else nll
