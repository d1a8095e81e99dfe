import numpy as np
import pytest

from boxlabel.errors import SpecInfeasible
from boxlabel.metrics import mask_iou
from boxlabel.synth import SceneSpec, generate, generate_corpus


class TestGenerate:
    def test_empty_scene(self):
        scene = generate(SceneSpec(n_objects=0, seed=1))
        assert not scene.gt_labels.any()
        assert len(scene.boxes) == 0
        assert scene.image.shape == (64, 64, 3)
        assert not scene.boundary.any()
        assert scene.proposals == ()

    def test_deterministic(self):
        spec = SceneSpec(n_objects=3, seed=7, noise_sigma=10.0)
        a = generate(spec)
        b = generate(spec)
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.gt_labels, b.gt_labels)
        assert tuple(a.boxes) == tuple(b.boxes)

    def test_seed_changes_scene(self):
        a = generate(SceneSpec(seed=0))
        b = generate(SceneSpec(seed=1))
        assert not np.array_equal(a.image, b.image)

    def test_boxes_are_tight(self):
        scene = generate(SceneSpec(n_objects=3, seed=11))
        inst_boxes = set()
        for cls, mask in scene.instances:
            ys, xs = np.nonzero(mask)
            inst_boxes.add((cls, xs.min(), ys.min(), xs.max() + 1, ys.max() + 1))
        got = {(b.class_id, b.xmin, b.ymin, b.xmax, b.ymax) for b in scene.boxes}
        assert got == inst_boxes

    def test_area_fraction_at_least_half(self):
        for seed in range(20):
            scene = generate(SceneSpec(n_objects=2, seed=seed))
            for cls, mask in scene.instances:
                ys, xs = np.nonzero(mask)
                area = (ys.max() - ys.min() + 1) * (xs.max() - xs.min() + 1)
                assert mask.sum() / area >= 0.5

    def test_gt_matches_instances(self):
        scene = generate(SceneSpec(n_objects=3, seed=5))
        rebuilt = np.zeros_like(scene.gt_labels)
        for cls, mask in scene.instances:
            assert not rebuilt[mask].any()  # instances are disjoint
            rebuilt[mask] = cls
        assert np.array_equal(rebuilt, scene.gt_labels)

    def test_proposals_contain_each_gt_mask(self):
        scene = generate(SceneSpec(n_objects=2, seed=3))
        for _cls, mask in scene.instances:
            best = max(mask_iou(mask, p) for p in scene.proposals)
            assert best == 1.0

    def test_proposals_include_distractors(self):
        scene = generate(SceneSpec(n_objects=2, seed=3))
        assert len(scene.proposals) > len(scene.instances)

    def test_boundary_covers_contours(self):
        import scipy.ndimage as ndi
        scene = generate(SceneSpec(n_objects=2, seed=9))
        for _cls, mask in scene.instances:
            contour = mask & ~ndi.binary_erosion(mask)
            assert np.all(scene.boundary[contour] == 1.0)

    def test_flat_colors_without_noise(self):
        scene = generate(SceneSpec(n_objects=2, seed=4, noise_sigma=0.0))
        for _cls, mask in scene.instances:
            pixels = scene.image[mask]
            assert (pixels == pixels[0]).all()

    def test_color_separation_honoured(self):
        scene = generate(SceneSpec(n_objects=3, seed=6, color_separation=80.0))
        colors = [scene.image[~scene.gt_labels.astype(bool)][0].astype(float)]
        for _cls, mask in scene.instances:
            colors.append(scene.image[mask][0].astype(float))
        for i in range(len(colors)):
            for j in range(i + 1, len(colors)):
                assert np.linalg.norm(colors[i] - colors[j]) >= 80.0 - 2.0

    def test_infeasible_spec(self):
        with pytest.raises(SpecInfeasible):
            generate(SceneSpec(width=24, height=24, n_objects=30, seed=0))

    def test_rejects_oversized(self):
        with pytest.raises(ValueError):
            SceneSpec(width=512)


def test_generate_corpus_seeds():
    corpus = generate_corpus(SceneSpec(seed=10), 3)
    assert len(corpus) == 3
    singles = [generate(SceneSpec(seed=10 + i)) for i in range(3)]
    for got, want in zip(corpus, singles):
        assert np.array_equal(got.image, want.image)
