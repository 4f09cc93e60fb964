"""Tracker backends plugged into the inference loop.

Each backend answers two questions per target and frame: "is the target still
where we predict it?" (tracked state) and "does this detection look like the
target?" (lost state).  The LK backend does this with template-pairwise ROI
tracking; the continuous-mode variant tracks frame to frame; the null backend
supports detection-only runs where no pixels are available.
"""

from __future__ import annotations

import numpy as np

from ..core import BoundingBox, Target
from ..errors import ContractViolation
from .frames import ArrayFrames, PgmDirFrames  # noqa: F401  (re-export)
from .lk import LkParams, TrackResult, failed_result, fb_lk_track
from .roi import Patch, RoiParams, extract_roi
from .templates import TemplateSet, summarize, track_templates, update_templates


class NullTracker:
    """Detection-only backend: tracking always 'succeeds' with no box opinion."""

    needs_frames = False

    def init_target(self, target: Target, frame: int, box: BoundingBox) -> None:
        pass

    def track_for_tracked(self, target: Target, frame: int, predicted_box: BoundingBox) -> TrackResult:
        return TrackResult(success=True)

    def track_candidate(self, target: Target, frame: int, det_box: BoundingBox) -> TrackResult:
        return TrackResult(success=True)

    def confirm(
        self, target: Target, frame: int, box: BoundingBox, confidence: float, reconnected: bool = False
    ) -> None:
        pass

    def drop(self, target: Target) -> None:
        pass


class TemplateLkTracker:
    """Template-pairwise forward-backward LK over ROI patches."""

    needs_frames = True

    def __init__(
        self,
        frames,
        roi_params: RoiParams | None = None,
        lk_params: LkParams | None = None,
        capacity: int = 5,
        refresh_interval: int = 10,
    ):
        if frames is None:
            raise ContractViolation("pixel tracker needs a frame source")
        self.frames = frames
        self.roi_params = roi_params or RoiParams()
        self.lk_params = lk_params or LkParams()
        self.capacity = capacity
        self.refresh_interval = refresh_interval

    def _frame(self, frame: int) -> np.ndarray:
        img = self.frames.get(frame)
        if img is None:
            raise ContractViolation(f"frame {frame} is not available to the tracker")
        return img

    def _extract(self, frame: int, box: BoundingBox) -> Patch:
        return extract_roi(self._frame(frame), box, self.roi_params, frame=frame)

    def init_target(self, target: Target, frame: int, box: BoundingBox) -> None:
        target.templates = TemplateSet(
            capacity=self.capacity, refresh_interval=self.refresh_interval
        )
        patch = self._extract(frame, box)
        update_templates(target.templates, patch, frame, box, policy_confidence=1.0)

    def _track_against_templates(self, target: Target, frame: int, box: BoundingBox) -> TrackResult:
        if target.templates is None or not len(target.templates):
            return failed_result()
        candidate = self._extract(frame, box)
        results = track_templates(target.templates, candidate, params=self.lk_params)
        summary = summarize(results, target.templates)
        if summary.box is not None:
            summary.box_in_image = candidate.roi_box_to_image(summary.box)
        return summary

    def track_for_tracked(self, target: Target, frame: int, predicted_box: BoundingBox) -> TrackResult:
        return self._track_against_templates(target, frame, predicted_box)

    def track_candidate(self, target: Target, frame: int, det_box: BoundingBox) -> TrackResult:
        return self._track_against_templates(target, frame, det_box)

    def confirm(
        self, target: Target, frame: int, box: BoundingBox, confidence: float, reconnected: bool = False
    ) -> None:
        patch = self._extract(frame, box)
        update_templates(target.templates, patch, frame, box, policy_confidence=confidence)

    def drop(self, target: Target) -> None:
        pass


class CtmState:
    """Continuous-mode memory: the last confirmed frame, box and patch."""

    def __init__(self, frame: int, box: BoundingBox, patch: Patch):
        self.frame = frame
        self.box = box
        self.patch = patch


class CtmTracker(TemplateLkTracker):
    """Continuous tracking mode: tracked-state flow runs frame to frame.

    Instead of tracking templates against the predicted location, the object
    is followed from its previous confirmed box.  The state is reinitialized
    whenever the target reconnects after being lost, to bridge the
    discontinuity.  Lost-state candidate scoring still uses the templates.
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._states: dict[int, CtmState] = {}

    def init_target(self, target: Target, frame: int, box: BoundingBox) -> None:
        super().init_target(target, frame, box)
        self._states[target.id] = CtmState(frame, box, self._extract(frame, box))

    def track_for_tracked(self, target: Target, frame: int, predicted_box: BoundingBox) -> TrackResult:
        state = self._states.get(target.id)
        if state is None:
            raise ContractViolation(f"continuous tracker not initialized for target {target.id}")
        candidate = self._extract(frame, predicted_box)
        summary = fb_lk_track(state.patch, candidate, params=self.lk_params)
        if summary.box is not None:
            summary.box_in_image = candidate.roi_box_to_image(summary.box)
        return summary

    def confirm(
        self, target: Target, frame: int, box: BoundingBox, confidence: float, reconnected: bool = False
    ) -> None:
        super().confirm(target, frame, box, confidence, reconnected)
        if reconnected or target.id not in self._states:
            self._states[target.id] = CtmState(frame, box, self._extract(frame, box))
        else:
            state = self._states[target.id]
            state.frame = frame
            state.box = box
            state.patch = self._extract(frame, box)

    def drop(self, target: Target) -> None:
        self._states.pop(target.id, None)
