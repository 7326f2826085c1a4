"""Pose-guided graph reasoning for pairwise social relation recognition.

Operates on pre-extracted scene annotations (person/object boxes, COCO
keypoints, heatmap peaks, region and global feature vectors): builds
person-object and person-pose graphs per labeled pair, reasons over them
with small GCNs trained from scratch, and fuses the result with a linear
global-feature branch.
"""

from poserel.backend import active_backend

__version__ = "0.1.0"

__all__ = ["active_backend", "__version__"]
