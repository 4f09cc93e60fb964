"""mdptrack: tracking-by-detection with a four-state target lifecycle.

Targets live in an Active/Tracked/Lost/Inactive state machine with learnable
per-state policies, template-based forward-backward LK patch tracking,
CLEAR MOT and HOTA evaluation, and a synthetic-scenario harness.
"""

from .core import (
    BoundingBox,
    Detection,
    PolicyAction,
    Target,
    TrackState,
    Trajectory,
    apply_transition,
    predict_location,
)
from .geometry import ImageExtent, inside_fraction, iou, synthesize_boxes
from .patch_tracking import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "Detection",
    "PolicyAction",
    "Target",
    "TrackState",
    "Trajectory",
    "apply_transition",
    "predict_location",
    "ImageExtent",
    "inside_fraction",
    "iou",
    "synthesize_boxes",
    "KERNEL_BACKEND",
    "__version__",
]
