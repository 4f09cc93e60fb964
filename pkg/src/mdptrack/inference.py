"""The inference loop: per-frame target processing, association, heuristics.

Per frame, targets are processed in priority order.  Tracked targets are
followed and either kept or marked lost; lost targets score the frame's
detections (minus those already explained by tracked targets) and contend for
them in a single greedy or Hungarian association; unassociated detections may
found new targets; conflicting tracked targets are thinned.  A target that
just turned lost gets an immediate reconnection attempt in the same frame.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .assignment import greedy_associate, hungarian
from .core import (
    BoundingBox,
    Detection,
    PolicyAction,
    Target,
    TrackState,
    Trajectory,
    predict_location,
)
from .errors import ContractViolation
from .features import lost_features
from .formats import DetectionSet
from .geometry import ImageExtent, inside_fraction, iou
from .policies import (
    ACTIVE_FP_IOU,
    ACTIVE_TP_IOU,
    DECISION_IOU,
    PolicyKind,
    PolicySet,
    decide_active,
    decide_lost,
    decide_tracked,
)

logger = logging.getLogger(__name__)

_PSEUDO_CONFIDENCE = 0.5


@dataclass
class TesterConfig:
    __test__ = False  # keep pytest from collecting this as a test class

    hungarian: bool = False
    sort_targets: bool = True
    filter_detections: bool = True
    reconnect_lost: bool = True
    resolve_conflicts: bool = True
    prune_min_len: bool = True
    min_traj_len: int = 5
    streak_split: int = 10
    conflict_iou: float = 0.7
    filter_iou: float = 0.5
    lost_ratio_prune: bool = False
    lost_ratio_max: float | None = None
    pseudo_detection_reconnect: bool = False
    tracked_match_iou: float = 0.5

    TOGGLE_NAMES = (
        "sort_targets",
        "filter_detections",
        "reconnect_lost",
        "resolve_conflicts",
        "prune_min_len",
        "lost_ratio_prune",
        "pseudo_detection_reconnect",
    )


@dataclass
class DecisionRecord:
    frame: int
    target_id: int
    state: str
    action: str
    probability: float


class DecisionLog:
    def __init__(self):
        self.records: list[DecisionRecord] = []

    def add(self, frame: int, target_id: int, state: str, action: str, probability: float):
        self.records.append(DecisionRecord(frame, target_id, state, action, probability))

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("frame,target_id,state,action,probability\n")
            for r in self.records:
                fh.write(f"{r.frame},{r.target_id},{r.state},{r.action},{r.probability:.4f}\n")


@dataclass
class _PendingLost:
    """A lost target awaiting global association for this frame."""

    target: Target
    predicted: BoundingBox
    scores: dict[int, float]  # frame-local det index -> probability
    pseudo_box: BoundingBox | None = None
    pseudo_score: float = 0.0
    was_lost_at_frame_start: bool = True


def sort_targets(targets: list[Target], streak_split: int = 10) -> list[Target]:
    """Long-streak targets first; within each group tracked before lost.

    The grouping uses the last tracked streak, which lost targets retain, so
    long-lived targets get reconnection priority.  Stable by id within groups.
    """

    def key(t: Target):
        long_streak = 0 if t.tracked_streak > streak_split else 1
        tracked_first = 0 if t.state == TrackState.TRACKED else 1
        return (long_streak, tracked_first, t.id)

    return sorted(targets, key=key)


def resolve_conflicts(
    targets: list[Target], frame_dets: list[Detection], config: TesterConfig
) -> list[Target]:
    """Force-retire the weaker of any tracked pair overlapping above threshold.

    The shorter tracked streak loses; on equal streaks the one whose best
    detection overlap is smaller loses.
    """
    tracked = [t for t in targets if t.state == TrackState.TRACKED]

    def best_det_iou(t: Target) -> float:
        return max((iou(t.last_box, d.box) for d in frame_dets), default=0.0)

    for i in range(len(tracked)):
        for j in range(i + 1, len(tracked)):
            a, b = tracked[i], tracked[j]
            if a.state != TrackState.TRACKED or b.state != TrackState.TRACKED:
                continue
            if iou(a.last_box, b.last_box) <= config.conflict_iou:
                continue
            if a.tracked_streak != b.tracked_streak:
                loser = a if a.tracked_streak < b.tracked_streak else b
            else:
                ia, ib = best_det_iou(a), best_det_iou(b)
                if ia != ib:
                    loser = a if ia < ib else b
                else:
                    loser = a if a.id > b.id else b
            loser.transition(PolicyAction.FORCE_RETIRE)
    return targets


def prune_lost_by_ratio(targets: list[Target], config: TesterConfig) -> list[Target]:
    """Retire the longest-lost targets until lost/tracked stays in bounds."""
    if config.lost_ratio_max is None:
        return targets
    while True:
        lost = [t for t in targets if t.state == TrackState.LOST]
        n_tracked = sum(1 for t in targets if t.state == TrackState.TRACKED)
        if not lost or len(lost) / max(1, n_tracked) <= config.lost_ratio_max:
            return targets
        victim = max(lost, key=lambda t: (t.lost_duration, -t.id))
        victim.transition(PolicyAction.RETIRE)


def _filtered_candidates(
    frame_dets: list[tuple[int, Detection]],
    processed: list[Target],
    config: TesterConfig,
) -> list[tuple[int, Detection]]:
    """Drop detections already explained by a processed tracked target."""
    if not config.filter_detections:
        return list(frame_dets)
    tracked_boxes = [t.last_box for t in processed if t.state == TrackState.TRACKED]
    out = []
    for local, det in frame_dets:
        if any(iou(det.box, tb) > config.filter_iou for tb in tracked_boxes):
            continue
        out.append((local, det))
    return out


class SequenceRunner:
    """Drives one sequence through the tracker and policies."""

    def __init__(
        self,
        detections: DetectionSet,
        policies: PolicySet,
        tracker,
        config: TesterConfig,
        img: ImageExtent,
        decision_log: DecisionLog | None = None,
        sample_hook=None,
    ):
        self.detections = detections
        self.policies = policies
        self.tracker = tracker
        self.config = config
        self.img = img
        self.log = decision_log
        self.sample_hook = sample_hook
        self.targets: list[Target] = []
        self.finished: list[Trajectory] = []
        self._next_id = 1
        self._by_frame = detections.by_frame()

    # -- helpers -----------------------------------------------------------

    def _log(self, frame: int, target_id: int, state: str, action: PolicyAction, prob: float):
        if self.log is not None:
            self.log.add(frame, target_id, state, action.value, prob)

    def _emit(self, target: Target) -> None:
        points = [(p.frame, p.box) for p in target.trajectory if p.state == TrackState.TRACKED]
        if points:
            self.finished.append(Trajectory(target_id=target.id, points=points))
        self.tracker.drop(target)

    def _cleanup(self) -> None:
        still_alive = []
        for t in self.targets:
            if t.state == TrackState.INACTIVE:
                self._emit(t)
            else:
                still_alive.append(t)
        self.targets = still_alive

    def _need_lost_features(self) -> bool:
        return self.policies.lost.kind == PolicyKind.LEARNED or self.sample_hook is not None

    def _candidate_features(self, target: Target, frame: int, det: Detection, predicted):
        summary = self.tracker.track_candidate(target, frame, det.box)
        return lost_features(summary, predicted, det, self.img)

    # -- per-state processing ----------------------------------------------

    def _process_tracked(self, target: Target, frame: int, frame_dets, processed, pending):
        cfg = self.config
        pol = self.policies
        predicted = predict_location(target, frame)
        summary = self.tracker.track_for_tracked(target, frame, predicted)
        loc_box = summary.box_in_image if (summary.success and summary.box_in_image) else predicted

        m_det = None
        m_iou = cfg.tracked_match_iou
        for _, det in frame_dets:
            o = iou(loc_box, det.box)
            if o > m_iou:
                m_det, m_iou = det, o

        action = decide_tracked(
            pol.tracked, summary, m_det, target, frame, predicted, self.img,
            gt=pol.gt, config=pol.config,
        )
        self._log(frame, target.id, "tracked", action,
                  1.0 if action == PolicyAction.KEEP_TRACKING else 0.0)

        if self.sample_hook is not None and pol.gt is not None and m_det is not None:
            gt_box = pol.gt.box_for(target.gt_id, frame)
            det_confirms = gt_box is not None and iou(m_det.box, gt_box) > DECISION_IOU
            label = 1 if (gt_box is not None and (summary.measured_success or det_confirms)) else -1
            feats = lost_features(summary, predicted, m_det, self.img)
            self.sample_hook(
                "tracked", frame, target.id, feats, label,
                action == PolicyAction.KEEP_TRACKING,
            )

        if action == PolicyAction.KEEP_TRACKING:
            if summary.success and summary.box_in_image is not None:
                new_box = summary.box_in_image
            elif m_det is not None:
                new_box = m_det.box
            else:
                new_box = predicted
            if pol.tracked.kind == PolicyKind.ABSOLUTE_ORACLE and pol.gt is not None:
                gt_box = pol.gt.box_for(target.gt_id, frame)
                if gt_box is not None:
                    new_box = gt_box
            if inside_fraction(new_box, self.img) < pol.config.exit_inside_min:
                target.transition(PolicyAction.FORCE_RETIRE)
                self._log(frame, target.id, "tracked", PolicyAction.FORCE_RETIRE, 0.0)
                return
            target.transition(PolicyAction.KEEP_TRACKING)
            target.tracked_streak += 1
            target.lost_duration = 0
            target.record(frame, new_box, TrackState.TRACKED)
            self.tracker.confirm(target, frame, new_box, confidence=1.0)
        else:
            target.transition(PolicyAction.MARK_LOST)
            target.lost_duration = 1
            if cfg.reconnect_lost:
                self._process_lost(
                    target, frame, frame_dets, processed, pending,
                    just_lost=True, tracked_summary=summary, tracked_predicted=predicted,
                )

    def _process_lost(
        self, target: Target, frame: int, frame_dets, processed, pending,
        just_lost: bool = False, tracked_summary=None, tracked_predicted=None,
    ):
        cfg = self.config
        pol = self.policies
        predicted = tracked_predicted if tracked_predicted is not None else predict_location(target, frame)
        candidates = _filtered_candidates(frame_dets, processed, cfg)

        want_feats = self._need_lost_features()
        cand_with_feats = []
        for _, det in candidates:
            feats = self._candidate_features(target, frame, det, predicted) if want_feats else None
            cand_with_feats.append((det, feats))

        pseudo_box = None
        pseudo_score = 0.0
        if just_lost and cfg.pseudo_detection_reconnect:
            if tracked_summary is not None and tracked_summary.box_in_image is not None:
                pseudo_box = tracked_summary.box_in_image
            else:
                pseudo_box = predicted
            pseudo_det = Detection(frame=frame, box=pseudo_box, confidence=_PSEUDO_CONFIDENCE)
            feats = (
                self._candidate_features(target, frame, pseudo_det, predicted)
                if want_feats
                else None
            )
            cand_with_feats.append((pseudo_det, feats))

        decision = decide_lost(
            pol.lost, cand_with_feats, target, frame, predicted, self.img,
            gt=pol.gt, config=pol.config,
        )
        if decision.action == PolicyAction.RETIRE:
            target.transition(PolicyAction.RETIRE)
            self._log(frame, target.id, "lost", PolicyAction.RETIRE, 0.0)
            return

        scores: dict[int, float] = {}
        n_real = len(candidates)
        for pos, prob in decision.scores.items():
            if pos < n_real:
                scores[candidates[pos][0]] = prob
            else:
                pseudo_score = prob

        if self.sample_hook is not None and pol.gt is not None:
            gt_box = pol.gt.box_for(target.gt_id, frame)
            for pos, (det, feats) in enumerate(cand_with_feats[:n_real]):
                if feats is None:
                    continue
                label = 1 if (gt_box is not None and iou(det.box, gt_box) > DECISION_IOU) else -1
                self.sample_hook(
                    "lost", frame, target.id, feats, label,
                    decision.scores.get(pos, 0.0) >= 0.5,
                )

        pending.append(
            _PendingLost(
                target=target,
                predicted=predicted,
                scores=scores,
                pseudo_box=pseudo_box,
                pseudo_score=pseudo_score,
                was_lost_at_frame_start=not just_lost,
            )
        )

    # -- association ---------------------------------------------------------

    def _associate(self, pending: list[_PendingLost], frame: int, frame_dets):
        if not pending:
            return set()
        n_dets = len(frame_dets)
        n_pseudo = sum(1 for p in pending if p.pseudo_box is not None)
        n_cols = n_dets + n_pseudo
        claimed: set[int] = set()
        if n_cols == 0:
            for p in pending:
                self._stay_lost(p, frame)
            return claimed

        costs = np.ones((len(pending), n_cols))
        pseudo_col_of: dict[int, int] = {}
        next_pseudo = n_dets
        for r, p in enumerate(pending):
            for local, prob in p.scores.items():
                costs[r, local] = 1.0 - prob
            if p.pseudo_box is not None:
                pseudo_col_of[r] = next_pseudo
                costs[r, next_pseudo] = 1.0 - p.pseudo_score
                next_pseudo += 1

        if self.config.hungarian:
            raw = hungarian(costs)
            assign = {r: c for r, c in raw.items() if costs[r, c] <= 0.5}
        else:
            assign = greedy_associate(costs, threshold=0.5)

        for r, p in enumerate(pending):
            col = assign.get(r)
            if col is None:
                self._stay_lost(p, frame)
                continue
            if col < n_dets:
                det = frame_dets[col][1]
                new_box = det.box
                claimed.add(col)
                prob = 1.0 - costs[r, col]
            elif col == pseudo_col_of.get(r):
                new_box = p.pseudo_box
                prob = p.pseudo_score
            else:  # another target's pseudo column: never a real match
                self._stay_lost(p, frame)
                continue
            target = p.target
            if self.policies.lost.kind == PolicyKind.ABSOLUTE_ORACLE and self.policies.gt is not None:
                gt_box = self.policies.gt.box_for(target.gt_id, frame)
                if gt_box is not None:
                    new_box = gt_box
            target.transition(PolicyAction.RECONNECT)
            target.tracked_streak = 1
            target.lost_duration = 0
            target.record(frame, new_box, TrackState.TRACKED)
            self.tracker.confirm(target, frame, new_box, confidence=prob, reconnected=True)
            self._log(frame, target.id, "lost", PolicyAction.RECONNECT, prob)
        return claimed

    def _stay_lost(self, p: _PendingLost, frame: int) -> None:
        target = p.target
        if p.was_lost_at_frame_start:
            target.transition(PolicyAction.STAY_LOST)
            target.lost_duration += 1
        self._log(frame, target.id, "lost", PolicyAction.STAY_LOST, 0.0)

    # -- active --------------------------------------------------------------

    def _spawn_targets(self, frame: int, frame_dets, claimed: set[int]):
        pol = self.policies
        tracked_boxes = [t.last_box for t in self.targets if t.state == TrackState.TRACKED]
        for local, (global_idx, det) in enumerate(frame_dets):
            if local in claimed:
                continue
            if any(iou(det.box, tb) > self.config.filter_iou for tb in tracked_boxes):
                continue
            action = decide_active(pol.active, det, self.img, gt=pol.gt)

            if self.sample_hook is not None and pol.gt is not None:
                best_iou = pol.gt.max_iou(det)
                if best_iou >= ACTIVE_TP_IOU:
                    label = 1
                elif best_iou < ACTIVE_FP_IOU:
                    label = -1
                else:
                    label = 0  # ignore band
                if label != 0:
                    from .features import active_features

                    self.sample_hook(
                        "active", frame, 0, active_features(det, self.img), label,
                        action == PolicyAction.ACTIVATE,
                    )

            if action != PolicyAction.ACTIVATE:
                self._log(frame, -1, "active", action, 0.0)
                continue
            gt_id = None
            if pol.gt is not None:
                gt_id, match_iou = pol.gt.best_match(det, global_idx)
                if match_iou <= 0.0:
                    gt_id = None
            target = Target(
                id=self._next_id,
                state=TrackState.ACTIVE,
                prev_state=TrackState.ACTIVE,
                gt_id=gt_id,
            )
            self._next_id += 1
            target.transition(PolicyAction.ACTIVATE)
            target.tracked_streak = 1
            target.record(frame, det.box, TrackState.TRACKED)
            self.tracker.init_target(target, frame, det.box)
            self.targets.append(target)
            self._log(frame, target.id, "active", action, 1.0)

    # -- main loop -----------------------------------------------------------

    def run(self, frame_count: int) -> list[Trajectory]:
        cfg = self.config
        for frame in range(1, frame_count + 1):
            frame_dets = self._by_frame.get(frame, [])
            det_list = [(local, det) for local, (_, det) in enumerate(frame_dets)]

            order = (
                sort_targets(self.targets, cfg.streak_split)
                if cfg.sort_targets
                else sorted(self.targets, key=lambda t: t.id)
            )
            processed: list[Target] = []
            pending: list[_PendingLost] = []
            for target in order:
                if target.state == TrackState.TRACKED:
                    self._process_tracked(target, frame, det_list, processed, pending)
                elif target.state == TrackState.LOST:
                    self._process_lost(target, frame, det_list, processed, pending)
                processed.append(target)

            claimed = self._associate(pending, frame, det_list)
            self._spawn_targets(frame, frame_dets, claimed)

            if cfg.resolve_conflicts:
                resolve_conflicts(self.targets, [d for _, d in det_list], cfg)
            if cfg.lost_ratio_prune:
                prune_lost_by_ratio(self.targets, cfg)
            self._cleanup()

        for target in self.targets:
            self._emit(target)
        self.targets = []

        out = self.finished
        if cfg.prune_min_len:
            out = [t for t in out if len(t) >= cfg.min_traj_len]
        return sorted(out, key=lambda t: t.target_id)


def run_sequence(
    detections: DetectionSet,
    policies: PolicySet,
    tracker,
    config: TesterConfig,
    img: ImageExtent,
    frame_count: int | None = None,
    decision_log: DecisionLog | None = None,
    sample_hook=None,
) -> list[Trajectory]:
    """Track one sequence and return its trajectories.

    ``frame_count`` defaults to the last frame that carries a detection.
    Detection-only runs (null tracker) need no pixel data.
    """
    if frame_count is None:
        frame_count = max((d.frame for d in detections.detections), default=0)
    if getattr(tracker, "needs_frames", False) and getattr(tracker, "frames", None) is None:
        raise ContractViolation("tracker requires frames but none were provided")
    runner = SequenceRunner(
        detections, policies, tracker, config, img,
        decision_log=decision_log, sample_hook=sample_hook,
    )
    return runner.run(frame_count)
