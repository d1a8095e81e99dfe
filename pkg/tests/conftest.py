import numpy as np
import pytest

from boxlabel.synth import SceneSpec, generate_corpus


@pytest.fixture(scope="session")
def corpus_clean():
    """50 clean, well-separated scenes (GrabCut quality checks)."""
    return generate_corpus(SceneSpec(seed=0, n_objects=2, color_separation=60.0), 50)


@pytest.fixture(scope="session")
def corpus_noisy():
    """50 textured scenes (sigma=25) for the boundary-vs-RGB comparison."""
    return generate_corpus(
        SceneSpec(seed=100, n_objects=2, color_separation=60.0, noise_sigma=25.0), 50)


@pytest.fixture(scope="session")
def corpus_small():
    """50 small clean scenes kept CRF-friendly (48x48, exact message passing)."""
    return generate_corpus(
        SceneSpec(width=48, height=48, seed=200, n_objects=2, color_separation=60.0), 50)


def best_instance_iou(mask: np.ndarray, scene, class_id: int) -> float:
    """IoU of a mask against the best-matching GT instance of its class."""
    best = 0.0
    for cls, gm in scene.instances:
        if cls != class_id:
            continue
        union = np.count_nonzero(mask | gm)
        if union:
            best = max(best, np.count_nonzero(mask & gm) / union)
    return best
