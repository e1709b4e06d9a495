"""Dense-correspondence warping and pose-guided video synthesis on CPU.

Pipeline: body-surface (IUV) maps give a per-part UV nearest-neighbour
correspondence between a source image and a driving pose (coarse warp
grid); a small network refines the grid with an additive correction;
a chained generator decodes warped appearance features into frames,
conditioning each frame on the previously generated one. Losses,
evaluation metrics, synthetic ground-truth scenes and a batch CLI
round out the toolkit.
"""

__version__ = "0.1.0"

from . import backend

__all__ = ["backend", "__version__"]
