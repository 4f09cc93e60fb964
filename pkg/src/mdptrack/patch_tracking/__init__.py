"""ROI extraction, pyramidal forward-backward LK, and template management."""

from ._backend import BACKEND
from .frames import ArrayFrames, PgmDirFrames
from .lk import LkParams, TrackResult, default_grid, fb_lk_track
from .roi import Patch, RoiParams, extract_roi, to_grayscale
from .templates import (
    TemplateEntry,
    TemplateSet,
    summarize,
    track_templates,
    update_templates,
)
from .trackers import CtmTracker, NullTracker, TemplateLkTracker

__all__ = [
    "BACKEND",
    "ArrayFrames",
    "PgmDirFrames",
    "LkParams",
    "TrackResult",
    "default_grid",
    "fb_lk_track",
    "Patch",
    "RoiParams",
    "extract_roi",
    "to_grayscale",
    "TemplateEntry",
    "TemplateSet",
    "summarize",
    "track_templates",
    "update_templates",
    "CtmTracker",
    "NullTracker",
    "TemplateLkTracker",
]
