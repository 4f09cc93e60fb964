"""Domain types: boxes, detections, the target lifecycle and its motion model.

A target is always in one of four states.  New detections enter as ACTIVE and
are either promoted to TRACKED or discarded.  TRACKED targets that cannot be
followed become LOST; LOST targets either reconnect to a detection, stay lost,
or retire to INACTIVE, which is a sink state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .errors import ContractViolation

VELOCITY_WINDOW = 5  # trajectory observations used for the motion estimate


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box; (x, y) is the top-left corner."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise ContractViolation(f"non-finite box {self}")
        if self.w <= 0 or self.h <= 0:
            raise ContractViolation(f"box needs positive size, got w={self.w} h={self.h}")

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    def translated(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x + dx, self.y + dy, self.w, self.h)

    def scaled_about_center(self, sx: float, sy: float | None = None) -> "BoundingBox":
        sy = sx if sy is None else sy
        w, h = self.w * sx, self.h * sy
        return BoundingBox(self.cx - w / 2.0, self.cy - h / 2.0, w, h)


@dataclass(frozen=True)
class Detection:
    """One detector output box in a 1-based frame."""

    frame: int
    box: BoundingBox
    confidence: float

    def __post_init__(self):
        if self.frame < 1:
            raise ContractViolation(f"frame index must be >= 1, got {self.frame}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ContractViolation(f"confidence must be in [0,1], got {self.confidence}")


class TrackState(Enum):
    ACTIVE = "active"
    TRACKED = "tracked"
    LOST = "lost"
    INACTIVE = "inactive"


class PolicyAction(Enum):
    """Lifecycle transitions; each is legal only from its source state."""

    ACTIVATE = "activate"          # active -> tracked: detection accepted as real
    DISCARD = "discard"            # active -> inactive: detection rejected as FP
    KEEP_TRACKING = "keep"         # tracked -> tracked
    MARK_LOST = "mark_lost"        # tracked -> lost
    STAY_LOST = "stay_lost"        # lost -> lost
    RECONNECT = "reconnect"        # lost -> tracked
    RETIRE = "retire"              # lost -> inactive: left the scene for good
    FORCE_RETIRE = "force_retire"  # tracked -> inactive: scene-exit heuristic


_TRANSITIONS: dict[tuple[TrackState, PolicyAction], TrackState] = {
    (TrackState.ACTIVE, PolicyAction.ACTIVATE): TrackState.TRACKED,
    (TrackState.ACTIVE, PolicyAction.DISCARD): TrackState.INACTIVE,
    (TrackState.TRACKED, PolicyAction.KEEP_TRACKING): TrackState.TRACKED,
    (TrackState.TRACKED, PolicyAction.MARK_LOST): TrackState.LOST,
    (TrackState.TRACKED, PolicyAction.FORCE_RETIRE): TrackState.INACTIVE,
    (TrackState.LOST, PolicyAction.STAY_LOST): TrackState.LOST,
    (TrackState.LOST, PolicyAction.RECONNECT): TrackState.TRACKED,
    (TrackState.LOST, PolicyAction.RETIRE): TrackState.INACTIVE,
}


def apply_transition(state: TrackState, action: PolicyAction) -> TrackState:
    """Return the successor state, or raise if the action is illegal from ``state``."""
    try:
        return _TRANSITIONS[(state, action)]
    except KeyError:
        raise ContractViolation(
            f"action {action.name} is not legal from state {state.name}"
        ) from None


@dataclass(frozen=True)
class TrajectoryPoint:
    frame: int
    box: BoundingBox
    state: TrackState


@dataclass
class Target:
    """One tracked object and its bookkeeping.

    ``trajectory`` records confirmed (TRACKED-state) positions only; ids are
    never reused within a run.  ``tracked_streak`` keeps its last value while
    the target is LOST so that target ordering can prioritise long streaks.
    """

    id: int
    state: TrackState
    prev_state: TrackState
    templates: object | None = None  # TemplateSet when a pixel tracker is active
    velocity: tuple[float, float] = (0.0, 0.0)
    tracked_streak: int = 0
    lost_duration: int = 0
    trajectory: list[TrajectoryPoint] = field(default_factory=list)
    gt_id: int | None = None  # oracle identity from detection provenance

    def transition(self, action: PolicyAction) -> TrackState:
        new_state = apply_transition(self.state, action)
        self.prev_state = self.state
        self.state = new_state
        return new_state

    @property
    def last_point(self) -> TrajectoryPoint:
        if not self.trajectory:
            raise ContractViolation(f"target {self.id} has an empty trajectory")
        return self.trajectory[-1]

    @property
    def last_box(self) -> BoundingBox:
        return self.last_point.box

    def record(self, frame: int, box: BoundingBox, state: TrackState) -> None:
        if self.trajectory and frame <= self.trajectory[-1].frame:
            raise ContractViolation(
                f"target {self.id}: frame {frame} not after {self.trajectory[-1].frame}"
            )
        self.trajectory.append(TrajectoryPoint(frame, box, state))


@dataclass
class Trajectory:
    """Finished track: target id plus its confirmed (frame, box) sequence."""

    target_id: int
    points: list[tuple[int, BoundingBox]]

    def __len__(self) -> int:
        return len(self.points)


def estimate_velocity(target: Target, window: int = VELOCITY_WINDOW) -> tuple[float, float]:
    """Mean per-frame center displacement over the last ``window`` observations.

    With fewer than two observations the velocity is (0, 0).
    """
    pts = target.trajectory[-window:]
    if len(pts) < 2:
        return (0.0, 0.0)
    span = pts[-1].frame - pts[0].frame
    dx = (pts[-1].box.cx - pts[0].box.cx) / span
    dy = (pts[-1].box.cy - pts[0].box.cy) / span
    return (dx, dy)


def predict_location(target: Target, frame: int, window: int = VELOCITY_WINDOW) -> BoundingBox:
    """Extrapolate the last confirmed box to ``frame`` at constant velocity."""
    if not target.trajectory:
        raise ContractViolation(f"target {target.id}: cannot predict from empty trajectory")
    last = target.trajectory[-1]
    if frame <= last.frame:
        raise ContractViolation(
            f"target {target.id}: prediction frame {frame} not after {last.frame}"
        )
    vx, vy = estimate_velocity(target, window)
    target.velocity = (vx, vy)
    gap = frame - last.frame
    return last.box.translated(vx * gap, vy * gap)
