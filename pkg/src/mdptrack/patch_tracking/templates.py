"""Template sets: appearance snapshots of a target and their anchor bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import BoundingBox
from ..errors import ContractViolation
from .lk import LkParams, TrackResult, failed_result, fb_lk_track
from .roi import Patch

DEFAULT_CAPACITY = 5
DEFAULT_REFRESH_INTERVAL = 10


@dataclass
class TemplateEntry:
    patch: Patch
    frame: int
    box: BoundingBox
    refreshed: int  # frame at which this slot was last written


@dataclass
class TemplateSet:
    capacity: int = DEFAULT_CAPACITY
    refresh_interval: int = DEFAULT_REFRESH_INTERVAL
    entries: list[TemplateEntry] = field(default_factory=list)
    anchor_index: int = 0
    last_update_frame: int | None = None

    def __len__(self) -> int:
        return len(self.entries)


def update_templates(
    templates: TemplateSet,
    patch: Patch,
    frame: int,
    box: BoundingBox,
    policy_confidence: float,
) -> TemplateSet:
    """Insert or rotate a template.

    Below capacity every confirmed patch is inserted.  A full set refreshes at
    most once per ``refresh_interval`` frames, requires ``policy_confidence``
    of at least 0.5, and always evicts the least recently written non-anchor
    slot; the anchor itself is never evicted.
    """
    entry = TemplateEntry(patch=patch, frame=frame, box=box, refreshed=frame)
    if len(templates.entries) < templates.capacity:
        templates.entries.append(entry)
        templates.last_update_frame = frame
        return templates

    if templates.last_update_frame is not None:
        if frame - templates.last_update_frame < templates.refresh_interval:
            return templates
    if policy_confidence < 0.5:
        return templates

    candidates = [i for i in range(len(templates.entries)) if i != templates.anchor_index]
    if not candidates:
        return templates
    victim = min(candidates, key=lambda i: (templates.entries[i].refreshed, i))
    templates.entries[victim] = entry
    templates.last_update_frame = frame
    return templates


def track_templates(
    templates: TemplateSet,
    candidate: Patch,
    grid: np.ndarray | None = None,
    params: LkParams | None = None,
) -> list[TrackResult]:
    """Track every template against the candidate patch, preserving order.

    Individual failures yield unsuccessful results rather than aborting.
    """
    if not templates.entries:
        raise ContractViolation("cannot track an empty template set")
    results = []
    for entry in templates.entries:
        try:
            results.append(fb_lk_track(entry.patch, candidate, grid, params))
        except Exception:
            results.append(failed_result())
    return results


def summarize(results: list[TrackResult], templates: TemplateSet) -> TrackResult:
    """Pick the anchor template's result as the representative outcome.

    The anchor is the template with the lowest median round-trip error among
    successful results; with none successful it falls back to index 0.  The
    set's anchor index is updated to match.
    """
    if not results:
        raise ContractViolation("summarize needs at least one result")
    successful = [
        i for i, r in enumerate(results) if r.success and r.median_fb is not None
    ]
    if successful:
        anchor = min(successful, key=lambda i: (results[i].median_fb, i))
    else:
        anchor = 0
    templates.anchor_index = anchor
    return results[anchor]
