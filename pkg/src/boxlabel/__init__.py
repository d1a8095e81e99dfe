"""boxlabel: synthesize segmentation training labels from bounding boxes.

Box-driven label generators (Box, Box^i, GrabCut, GrabCut+, GrabCut+^i,
proposal intersection), inter-round de-noising stages, dense CRF
filtering, and the matching semantic/instance evaluation metrics.
"""

__version__ = "0.1.0"

from .core import Box, BoxSet, WeakLabelConfig, clip_box, order_boxes  # noqa: F401
from .grabcut import GrabCutParams, run_grabcut  # noqa: F401
from .densecrf import CrfParams, meanfield  # noqa: F401
