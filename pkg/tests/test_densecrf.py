import math

import numpy as np
import pytest

import boxlabel.densecrf as dc
from boxlabel.densecrf import CrfParams, labelmap_to_unaries, meanfield
from boxlabel.errors import DimensionMismatch


class TestLabelmapToUnaries:
    def test_confidence_split(self):
        labels = np.array([[3]], np.uint8)
        u = labelmap_to_unaries(labels, 21, 0.9)
        assert u[0, 0, 3] == pytest.approx(0.9)
        assert u[0, 0, 0] == pytest.approx(0.005)
        assert u[0, 0].sum() == pytest.approx(1.0)

    def test_ignore_uniform(self):
        labels = np.array([[255]], np.uint8)
        u = labelmap_to_unaries(labels, 21, 0.9)
        assert np.allclose(u[0, 0], 1 / 21)

    def test_rejects_degenerate_confidence(self):
        with pytest.raises(ValueError):
            labelmap_to_unaries(np.zeros((2, 2), np.uint8), 21, 1 / 21)


class TestMeanfield:
    def test_two_pixel_hand_computation(self):
        img = np.zeros((1, 2, 3), np.uint8)
        unaries = np.array([[[0.9, 0.1], [0.6, 0.4]]])
        params = CrfParams(w_appearance=2.0, theta_alpha=3.0, theta_beta=10.0,
                           w_smooth=1.0, theta_gamma=2.0, iterations=1)
        q, _ = meanfield(unaries, img, params)
        # identical colours, distance 1: one combined kernel value
        k = 2.0 * math.exp(-1 / (2 * 3.0 ** 2)) + 1.0 * math.exp(-1 / (2 * 2.0 ** 2))

        def update(u, q_other):
            raw = [u[l] * math.exp(-k * (sum(q_other) - q_other[l])) for l in range(2)]
            z = sum(raw)
            return [r / z for r in raw]

        want0 = update([0.9, 0.1], [0.6, 0.4])
        want1 = update([0.6, 0.4], [0.9, 0.1])
        assert np.allclose(q[0, 0], want0, atol=1e-9)
        assert np.allclose(q[0, 1], want1, atol=1e-9)

    def test_zero_weight_identity(self):
        labels = np.array([[0, 1], [1, 1]], np.uint8)
        u = labelmap_to_unaries(labels, 3, 0.9)
        q, out = meanfield(u, np.zeros((2, 2, 3), np.uint8),
                           CrfParams(w_appearance=0.0, w_smooth=0.0))
        assert np.array_equal(q, u)
        assert np.array_equal(out, labels)

    def test_majority_smoothing(self):
        img = np.full((8, 8, 3), 100, np.uint8)
        labels = np.zeros((8, 8), np.uint8)
        labels[0, 0] = 2  # minority pixel on a uniform image
        u = labelmap_to_unaries(labels, 3, 0.9)
        _, out = meanfield(u, img, CrfParams())
        assert np.all(out == 0)

    def test_q_normalized_every_iteration(self):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 255, (6, 7, 3)).astype(np.uint8)
        labels = rng.integers(0, 4, (6, 7)).astype(np.uint8)
        u = labelmap_to_unaries(labels, 4, 0.8)
        for iters in range(1, 6):
            q, _ = meanfield(u, img, CrfParams(iterations=iters))
            assert np.abs(q.sum(axis=2) - 1).max() < 1e-6

    def test_label_permutation_equivariance(self):
        rng = np.random.default_rng(1)
        img = rng.integers(0, 255, (5, 5, 3)).astype(np.uint8)
        labels = rng.integers(0, 3, (5, 5)).astype(np.uint8)
        u = labelmap_to_unaries(labels, 3, 0.85)
        perm = np.array([2, 0, 1])
        q1, _ = meanfield(u, img, CrfParams())
        q2, _ = meanfield(u[:, :, perm], img, CrfParams())
        assert np.allclose(q2, q1[:, :, perm])

    def test_truncated_matches_exact_for_small_kernels(self, monkeypatch):
        rng = np.random.default_rng(2)
        img = rng.integers(0, 255, (9, 11, 3)).astype(np.uint8)
        labels = rng.integers(0, 3, (9, 11)).astype(np.uint8)
        u = labelmap_to_unaries(labels, 3, 0.8)
        params = CrfParams(theta_alpha=2.0, theta_gamma=1.5, iterations=3)
        q_exact, _ = meanfield(u, img, params)
        monkeypatch.setattr(dc, "EXACT_PIXEL_LIMIT", 1)
        q_trunc, _ = meanfield(u, img, params)
        assert np.abs(q_exact - q_trunc).max() < 1e-9

    def test_dimension_mismatch(self):
        u = labelmap_to_unaries(np.zeros((2, 2), np.uint8), 2, 0.9)
        with pytest.raises(DimensionMismatch):
            meanfield(u, np.zeros((3, 3, 3), np.uint8), CrfParams())

    def test_unnormalized_unaries_rejected(self):
        u = np.full((2, 2, 2), 0.9)
        with pytest.raises(ValueError):
            meanfield(u, np.zeros((2, 2, 3), np.uint8), CrfParams())
