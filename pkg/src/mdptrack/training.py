"""Trainer machinery: trajectory-incremental training, iterative batch
training, and class-imbalance samplers.

Incremental training tracks one ground-truth trajectory at a time with the
state sequence teacher-forced to the oracle; every wrong lost-state decision
contributes a sample and triggers a retrain.  Iterative batch training (IBT)
alternates data generation (oracle-driven first, then the previous iteration's
models, keeping only their mistakes) with batch retraining, a decision-level
evaluation, and a full tracking test.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import BoundingBox, Detection, PolicyAction, Target, TrackState
from .errors import ContractViolation
from .features import ACTIVE_FEATURE_DIM, LOST_FEATURE_DIM, active_features, lost_features
from .formats import DetectionSet, GtEntry, GtTrackSet
from .geometry import ImageExtent, inside_fraction, iou, synthesize_boxes
from .inference import DecisionLog, TesterConfig, run_sequence
from .metrics import clear_mot, hota, results_from_trajectories
from .patch_tracking.trackers import NullTracker
from .policies import (
    ACTIVE_FP_IOU,
    ACTIVE_TP_IOU,
    DECISION_IOU,
    GroundTruthContext,
    LinearModel,
    PolicyConfig,
    PolicyKind,
    PolicyRuntime,
    PolicySet,
    TrainConfig,
    TrainingSample,
    decide_lost,
    decide_tracked,
    predict,
    save_model,
    train,
    zero_model,
)
from .sequences import Dataset, SequenceBundle

logger = logging.getLogger(__name__)

STATES = ("active", "tracked", "lost")


@dataclass(frozen=True)
class TrainerConfig:
    max_passes: int = 3
    max_trials: int = 3
    max_iters: int = 1000
    data_from_tester: bool = False
    accumulative_data: bool = True
    train_from_scratch: bool = True

    def __post_init__(self):
        if min(self.max_passes, self.max_trials, self.max_iters) < 1:
            raise ContractViolation("trainer counts must be >= 1")


class SampleStore:
    """Labeled samples grouped by state, tagged with their provenance."""

    def __init__(self, iteration: int = 0):
        self.samples: list[TrainingSample] = []
        self.iteration = iteration

    def add(self, sample: TrainingSample) -> None:
        self.samples.append(sample)

    def extend(self, other: "SampleStore") -> None:
        self.samples.extend(other.samples)

    def for_state(self, state: str) -> list[TrainingSample]:
        return [s for s in self.samples if s.state == state]

    def counts(self, state: str) -> tuple[int, int]:
        pos = sum(1 for s in self.for_state(state) if s.label == 1)
        neg = sum(1 for s in self.for_state(state) if s.label == -1)
        return pos, neg

    def __len__(self) -> int:
        return len(self.samples)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for s in self.samples:
                writer.writerow(
                    [s.state, s.frame, s.target_id, s.label]
                    + [repr(float(v)) for v in s.features]
                )

    @classmethod
    def read_csv(cls, path) -> "SampleStore":
        store = cls()
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row:
                    continue
                state, frame, target_id, label = row[0], int(row[1]), int(row[2]), int(row[3])
                feats = np.array([float(v) for v in row[4:]])
                store.add(
                    TrainingSample(
                        features=feats, label=label, state=state,
                        frame=frame, target_id=target_id,
                    )
                )
        return store


# ---------------------------------------------------------------------------
# Trajectory filtering


def filter_trajectories(
    gt: GtTrackSet, detections: DetectionSet, img: ImageExtent
) -> dict[int, list[GtEntry]]:
    """Truncate each trajectory to its first frame that is cleanly trainable.

    The start frame must have a detection overlapping the box above 0.5, no
    overlap at all with any other annotation, and the box at least 95% inside
    the image.  Trajectories with no such frame are dropped.
    """
    by_frame = detections.by_frame()
    out: dict[int, list[GtEntry]] = {}
    for tid in gt.track_ids():
        entries = [e for e in gt.tracks[tid] if e.flag != 0]
        start = None
        for i, e in enumerate(entries):
            has_det = any(
                iou(det.box, e.box) > DECISION_IOU for _, det in by_frame.get(e.frame, [])
            )
            if not has_det:
                continue
            others = [
                box
                for gid, box in gt.boxes_in_frame(e.frame, include_ignored=True)
                if gid != tid
            ]
            if any(iou(e.box, box) > 0.0 for box in others):
                continue
            if inside_fraction(e.box, img) <= 0.95:
                continue
            start = i
            break
        if start is not None:
            out[tid] = entries[start:]
    return out


# ---------------------------------------------------------------------------
# The trajectory scheduling loop (status bookkeeping of the incremental trainer)


@dataclass
class ScheduleEvent:
    iteration: int
    trajectory: int
    failures: int
    marked_done: bool
    marked_untrainable: bool
    passes_completed: int


@dataclass
class ScheduleResult:
    events: list[ScheduleEvent]
    status: dict[int, str]  # done | untrainable | not_done
    passes_completed: int
    iterations: int


def run_schedule(traj_ids: list[int], attempt, config: TrainerConfig) -> ScheduleResult:
    """Drive trajectory attempts with done/untrainable/pass bookkeeping.

    ``attempt(traj_id, trial_index) -> failures`` performs one tracking pass
    over a trajectory.  A zero-failure pass marks it done; ``max_trials``
    consecutive failed passes mark it untrainable.  When every trajectory is
    done a pass completes; further passes reset the done marks and trial
    counters until ``max_passes`` or ``max_iters`` is reached, or everything
    is untrainable.
    """
    status = {tid: "not_done" for tid in traj_ids}
    trials = {tid: 0 for tid in traj_ids}
    passes = 0
    iters = 0
    events: list[ScheduleEvent] = []

    while iters < config.max_iters and traj_ids:
        if all(status[t] == "untrainable" for t in traj_ids):
            break
        pending = [t for t in traj_ids if status[t] == "not_done"]
        if not pending:  # new pass over everything still trainable
            for t in traj_ids:
                if status[t] != "untrainable":
                    status[t] = "not_done"
                    trials[t] = 0
            pending = [t for t in traj_ids if status[t] == "not_done"]
        tid = pending[0]
        iters += 1
        failures = attempt(tid, trials[tid])
        untrainable = False
        if failures == 0:
            status[tid] = "done"
        else:
            trials[tid] += 1
            if trials[tid] >= config.max_trials:
                status[tid] = "untrainable"
                untrainable = True
        all_settled = all(status[t] in ("done", "untrainable") for t in traj_ids)
        if all_settled and not all(status[t] == "untrainable" for t in traj_ids):
            passes += 1
        events.append(
            ScheduleEvent(
                iteration=iters,
                trajectory=tid,
                failures=failures,
                marked_done=status[tid] != "not_done",
                marked_untrainable=untrainable,
                passes_completed=passes,
            )
        )
        if all_settled and passes >= config.max_passes:
            break
    return ScheduleResult(
        events=events, status=status, passes_completed=passes, iterations=iters
    )


# ---------------------------------------------------------------------------
# One teacher-forced tracking pass over a single trajectory


@dataclass
class PassStats:
    failures: int = 0
    decisions: dict = field(default_factory=lambda: {"tracked": [0, 0], "lost": [0, 0]})

    def note(self, state: str, correct: bool) -> None:
        pair = self.decisions[state]
        pair[0] += int(correct)
        pair[1] += 1


def run_trajectory_pass(
    tid: int,
    entries: list[GtEntry],
    detections: DetectionSet,
    img: ImageExtent,
    policies: PolicySet,
    tracker=None,
    on_lost_error=None,
    sample_hook=None,
) -> PassStats:
    """Track one trajectory with the state sequence forced to the oracle.

    Policy decisions are compared against the oracle-correct ones.  Lost-state
    errors invoke ``on_lost_error(sample)``; ``sample_hook`` (same signature
    as the tester's) sees every decision for data collection.  Samples are
    only ever extracted in the lost state from frames where some detection
    matches the ground truth.
    """
    tracker = tracker or NullTracker()
    by_frame = detections.by_frame()
    stats = PassStats()
    want_feats = (
        policies.lost.kind == PolicyKind.LEARNED
        or sample_hook is not None
        or on_lost_error is not None
    )

    first = entries[0]
    seed_det = max(
        (det for _, det in by_frame.get(first.frame, [])),
        key=lambda d: iou(d.box, first.box),
        default=None,
    )
    seed_box = seed_det.box if seed_det is not None else first.box
    target = Target(
        id=tid, state=TrackState.ACTIVE, prev_state=TrackState.ACTIVE, gt_id=tid
    )
    target.transition(PolicyAction.ACTIVATE)
    target.tracked_streak = 1
    target.record(first.frame, seed_box, TrackState.TRACKED)
    tracker.init_target(target, first.frame, seed_box)

    from .core import predict_location

    for entry in entries[1:]:
        frame = entry.frame
        gt_box = entry.box
        frame_dets = [det for _, det in by_frame.get(frame, [])]
        predicted = predict_location(target, frame)

        if target.state == TrackState.TRACKED:
            summary = tracker.track_for_tracked(target, frame, predicted)
            loc_box = summary.box_in_image if (summary.success and summary.box_in_image) else predicted
            m_det = None
            best = 0.5
            for det in frame_dets:
                o = iou(loc_box, det.box)
                if o > best:
                    m_det, best = det, o
            action = decide_tracked(
                policies.tracked, summary, m_det, target, frame, predicted, img,
                gt=policies.gt, config=policies.config,
            )
            det_confirms = m_det is not None and iou(m_det.box, gt_box) > DECISION_IOU
            oracle_keep = bool(summary.measured_success or det_confirms)
            stats.note("tracked", (action == PolicyAction.KEEP_TRACKING) == oracle_keep)
            if sample_hook is not None and m_det is not None:
                feats = lost_features(summary, predicted, m_det, img)
                sample_hook(
                    "tracked", frame, tid, feats, 1 if oracle_keep else -1,
                    action == PolicyAction.KEEP_TRACKING,
                )
            if oracle_keep:
                if (
                    summary.success
                    and summary.box_in_image is not None
                    and iou(summary.box_in_image, gt_box) > DECISION_IOU
                ):
                    new_box = summary.box_in_image
                elif det_confirms:
                    new_box = m_det.box
                else:
                    new_box = gt_box
                target.transition(PolicyAction.KEEP_TRACKING)
                target.tracked_streak += 1
                target.lost_duration = 0
                target.record(frame, new_box, TrackState.TRACKED)
                tracker.confirm(target, frame, new_box, confidence=1.0)
            else:
                target.transition(PolicyAction.MARK_LOST)
                target.lost_duration = 1
            continue

        # Lost state: score candidates, compare against the oracle association.
        cands: list[tuple[Detection, np.ndarray | None]] = []
        for det in frame_dets:
            feats = None
            if want_feats:
                summary = tracker.track_candidate(target, frame, det.box)
                feats = lost_features(summary, predicted, det, img)
            cands.append((det, feats))
        decision = decide_lost(
            policies.lost, cands, target, frame, predicted, img,
            gt=policies.gt, config=policies.config,
        )
        chosen = decision.chosen if decision.action == PolicyAction.RECONNECT else None
        positive_set = {
            i for i, (det, _) in enumerate(cands) if iou(det.box, gt_box) > DECISION_IOU
        }
        correct = (chosen in positive_set) if positive_set else (chosen is None)
        stats.note("lost", correct)

        if sample_hook is not None:
            for i, (det, feats) in enumerate(cands):
                if feats is None:
                    continue
                sample_hook(
                    "lost", frame, tid, feats, 1 if i in positive_set else -1,
                    decision.scores.get(i, 0.0) >= 0.5,
                )

        if not correct:
            stats.failures += 1
            if on_lost_error is not None:
                sample = None
                if chosen is not None and chosen not in positive_set:
                    sample = TrainingSample(
                        features=cands[chosen][1], label=-1, state="lost",
                        frame=frame, target_id=tid,
                    )
                elif positive_set:
                    best_i = max(positive_set, key=lambda i: iou(cands[i][0].box, gt_box))
                    sample = TrainingSample(
                        features=cands[best_i][1], label=1, state="lost",
                        frame=frame, target_id=tid,
                    )
                if sample is not None:
                    on_lost_error(sample)

        # Teacher forcing: follow the oracle association.
        if positive_set:
            best_i = max(positive_set, key=lambda i: iou(cands[i][0].box, gt_box))
            new_box = cands[best_i][0].box
            target.transition(PolicyAction.RECONNECT)
            target.tracked_streak = 1
            target.lost_duration = 0
            target.record(frame, new_box, TrackState.TRACKED)
            tracker.confirm(target, frame, new_box, confidence=1.0, reconnected=True)
        else:
            target.transition(PolicyAction.STAY_LOST)
            target.lost_duration += 1

    tracker.drop(target)
    return stats


# ---------------------------------------------------------------------------
# Incremental (trajectory-at-a-time) lost training


def incremental_train(
    trajectories: dict[int, list[GtEntry]],
    detections: DetectionSet,
    config: TrainerConfig,
    img: ImageExtent,
    gt: GtTrackSet,
    initial_model: LinearModel | None = None,
    train_config: TrainConfig | None = None,
    tracker=None,
) -> tuple[LinearModel, SampleStore]:
    """Train the lost model by tracking trajectories until each passes cleanly.

    Every incorrect lost decision appends a sample and retrains on the
    accumulated set; trajectories that keep failing are marked untrainable.
    """
    train_config = train_config or TrainConfig(epochs=50)
    model_holder = [initial_model or zero_model(LOST_FEATURE_DIM)]
    store = SampleStore()
    ctx = GroundTruthContext(gt, detections)

    def on_error(sample: TrainingSample) -> None:
        store.add(sample)
        lost_samples = store.for_state("lost")
        labels = {s.label for s in lost_samples}
        model_holder[0] = train(
            model_holder[0], lost_samples, train_config, allow_single_class=len(labels) < 2
        )

    def attempt(tid: int, _trial: int) -> int:
        policies = PolicySet(
            active=PolicyRuntime(PolicyKind.RELATIVE_ORACLE),
            tracked=PolicyRuntime(PolicyKind.HEURISTIC),
            lost=PolicyRuntime(PolicyKind.LEARNED, model=model_holder[0]),
            gt=ctx,
            config=PolicyConfig(),
        )
        stats = run_trajectory_pass(
            tid, trajectories[tid], detections, img, policies,
            tracker=tracker, on_lost_error=on_error,
        )
        return stats.failures

    result = run_schedule(sorted(trajectories), attempt, config)
    untrainable = [t for t, s in result.status.items() if s == "untrainable"]
    if untrainable:
        logger.info("untrainable trajectories: %s", untrainable)
    return model_holder[0], store


# ---------------------------------------------------------------------------
# Class imbalance


def rebalance(
    samples: list[TrainingSample],
    strategy: str,
    rng: int | np.random.Generator,
    draws: int | None = None,
) -> list[TrainingSample]:
    """One epoch's worth of samples under an imbalance-correction strategy.

    undersample: the minority class plus an equally sized random majority
    subset.  oversample: the majority class plus the minority duplicated up to
    its size.  probabilistic: ``draws`` samples drawn with replacement, each
    sample weighted inversely to its class frequency (expected class ratio
    1:1).
    """
    gen = np.random.default_rng(rng)
    pos = [s for s in samples if s.label == 1]
    neg = [s for s in samples if s.label == -1]
    if not pos or not neg:
        missing = "+1" if not pos else "-1"
        raise ContractViolation(f"rebalance needs both classes: no {missing} samples")
    minority, majority = (pos, neg) if len(pos) <= len(neg) else (neg, pos)

    if strategy == "undersample":
        idx = gen.choice(len(majority), size=len(minority), replace=False)
        return minority + [majority[int(i)] for i in idx]
    if strategy == "oversample":
        extra = gen.choice(len(minority), size=len(majority) - len(minority), replace=True)
        return majority + minority + [minority[int(i)] for i in extra]
    if strategy == "probabilistic":
        n = draws if draws is not None else len(samples)
        weights = np.array(
            [1.0 / (len(pos) if s.label == 1 else len(neg)) for s in samples]
        )
        weights /= weights.sum()
        idx = gen.choice(len(samples), size=n, replace=True, p=weights)
        return [samples[int(i)] for i in idx]
    raise ContractViolation(f"unknown rebalance strategy {strategy!r}")


def rebalance_sampler(samples: list[TrainingSample], strategy: str | None):
    """Adapt a strategy into the trainer's per-epoch sampler."""
    if strategy is None:
        return None

    def sampler(_epoch: int, rng: np.random.Generator) -> list[TrainingSample]:
        return rebalance(samples, strategy, rng)

    return sampler


# ---------------------------------------------------------------------------
# Active-state batch training


def active_training_samples(
    detections: DetectionSet,
    gt: GtTrackSet,
    img: ImageExtent,
    synth_per_positive: int = 0,
    rng: int | np.random.Generator = 0,
) -> list[TrainingSample]:
    """Two-level IOU labeling of detections, optionally with synthetic positives.

    Detections overlapping ground truth above 0.5 are positives, below 0.2
    negatives, in between ignored.  Synthetic positives are jittered copies of
    each positive box and inherit its confidence.
    """
    ctx = GroundTruthContext(gt, detections)
    gen = np.random.default_rng(rng)
    samples: list[TrainingSample] = []
    for det in detections.detections:
        best = ctx.max_iou(det)
        if best >= ACTIVE_TP_IOU:
            label = 1
        elif best < ACTIVE_FP_IOU:
            label = -1
        else:
            continue
        samples.append(
            TrainingSample(
                features=active_features(det, img), label=label,
                state="active", frame=det.frame,
            )
        )
        if label == 1 and synth_per_positive > 0:
            others = [
                b for _, b in ctx.boxes_in_frame(det.frame) if iou(b, det.box) <= ACTIVE_TP_IOU
            ]
            for box in synthesize_boxes(det.box, others, [], "positive", synth_per_positive, gen):
                synth_det = Detection(frame=det.frame, box=box, confidence=det.confidence)
                samples.append(
                    TrainingSample(
                        features=active_features(synth_det, img), label=1,
                        state="active", frame=det.frame,
                    )
                )
    return samples


def _synthesize_active_class(
    detections: DetectionSet, gt: GtTrackSet, img: ImageExtent, label: int,
    per_anchor: int, rng,
) -> list[TrainingSample]:
    """Jittered-box samples of the missing class, anchored on true detections."""
    ctx = GroundTruthContext(gt, detections)
    out: list[TrainingSample] = []
    kind = "positive" if label == 1 else "negative"
    for d in detections.detections:
        if ctx.max_iou(d) < ACTIVE_TP_IOU:
            continue
        others = [b for _, b in ctx.boxes_in_frame(d.frame) if iou(b, d.box) <= ACTIVE_TP_IOU]
        for b in synthesize_boxes(d.box, others, [], kind, per_anchor, rng):
            synth = Detection(frame=d.frame, box=b, confidence=d.confidence)
            out.append(
                TrainingSample(
                    features=active_features(synth, img), label=label,
                    state="active", frame=d.frame,
                )
            )
    return out


def train_active(
    detections: DetectionSet,
    gt: GtTrackSet,
    img: ImageExtent,
    train_config: TrainConfig | None = None,
    rebalance_strategy: str | None = None,
    synth_per_positive: int = 0,
) -> tuple[LinearModel, list[TrainingSample]]:
    """Batch-train the active model; a missing class is filled synthetically."""
    cfg = train_config or TrainConfig()
    samples = active_training_samples(detections, gt, img, synth_per_positive)
    labels = {s.label for s in samples}
    if samples and labels != {1, -1}:
        missing = -1 if -1 not in labels else 1
        rng = np.random.default_rng(cfg.seed)
        extras = _synthesize_active_class(detections, gt, img, missing, 2, rng)
        logger.info(
            "active training lacks %+d samples: synthesized %d around true detections",
            missing, len(extras),
        )
        samples = samples + extras
    if not samples:
        return zero_model(ACTIVE_FEATURE_DIM), samples
    model = train(
        zero_model(ACTIVE_FEATURE_DIM), samples, cfg,
        allow_single_class=({s.label for s in samples} != {1, -1}),
        epoch_sampler=rebalance_sampler(samples, rebalance_strategy)
        if {s.label for s in samples} == {1, -1}
        else None,
    )
    return model, samples


# ---------------------------------------------------------------------------
# Iterative batch training


def _policies_for(
    models: dict[str, LinearModel | None],
    oracle: bool,
    ctx: GroundTruthContext | None,
    seed: int = 0,
) -> PolicySet:
    if oracle:
        return PolicySet(
            active=PolicyRuntime(PolicyKind.RELATIVE_ORACLE),
            tracked=PolicyRuntime(PolicyKind.RELATIVE_ORACLE),
            lost=PolicyRuntime(PolicyKind.RELATIVE_ORACLE),
            gt=ctx,
        )
    tracked_model = models.get("tracked") or models.get("lost")
    return PolicySet(
        active=(
            PolicyRuntime(PolicyKind.LEARNED, model=models["active"])
            if models.get("active")
            else PolicyRuntime(PolicyKind.ALWAYS_POSITIVE, seed=seed)
        ),
        tracked=(
            PolicyRuntime(PolicyKind.LEARNED, model=tracked_model)
            if tracked_model
            else PolicyRuntime(PolicyKind.HEURISTIC)
        ),
        lost=(
            PolicyRuntime(PolicyKind.LEARNED, model=models["lost"])
            if models.get("lost")
            else PolicyRuntime(PolicyKind.ALWAYS_POSITIVE, seed=seed)
        ),
        gt=ctx,
    )


def _collect_hook(store: SampleStore, save_all: bool, source: str, iteration: int):
    def hook(state, frame, target_id, features, label, predicted_positive):
        if not save_all and predicted_positive == (label == 1):
            return
        store.add(
            TrainingSample(
                features=features, label=label, state=state, frame=frame,
                target_id=target_id, source=source, iteration=iteration,
            )
        )

    return hook


def _tester_pass(seq: SequenceBundle, policies: PolicySet, sample_hook, tracker=None):
    tracker = tracker or NullTracker()
    cfg = TesterConfig()
    return run_sequence(
        seq.dets, policies, tracker, cfg, seq.img,
        frame_count=seq.frame_count, sample_hook=sample_hook,
    )


def _trainer_data_pass(
    seq: SequenceBundle, policies: PolicySet, sample_hook, state: str, tracker=None
) -> None:
    """DataFromTrainer: one teacher-forced pass per trajectory, samples saved
    for one state only, no incremental retraining."""
    trajs = filter_trajectories(seq.gt, seq.dets, seq.img)

    def filtered_hook(s, frame, target_id, features, label, predicted_positive):
        if s == state:
            sample_hook(s, frame, target_id, features, label, predicted_positive)

    for tid in sorted(trajs):
        run_trajectory_pass(
            tid, trajs[tid], seq.dets, seq.img, policies,
            tracker=tracker, sample_hook=filtered_hook,
        )


def _active_data_pass(seq: SequenceBundle, models, oracle: bool, sample_hook) -> None:
    ctx = GroundTruthContext(seq.gt, seq.dets)
    model = models.get("active")
    for det in seq.dets.detections:
        best = ctx.max_iou(det)
        if best >= ACTIVE_TP_IOU:
            label = 1
        elif best < ACTIVE_FP_IOU:
            label = -1
        else:
            continue
        feats = active_features(det, seq.img)
        if oracle or model is None:
            predicted_positive = best > DECISION_IOU
        else:
            predicted_positive = predict(model, feats) >= 0.5
        sample_hook("active", det.frame, 0, feats, label, predicted_positive)


def _eval_policies(test_seqs: list[SequenceBundle], models, tracker=None) -> dict[str, float]:
    """Decision accuracy against the oracle on the held-out sequences."""
    totals = {s: [0, 0] for s in STATES}
    for seq in test_seqs:
        if seq.gt is None:
            continue
        ctx = GroundTruthContext(seq.gt, seq.dets)
        policies = _policies_for(models, oracle=False, ctx=ctx)
        trajs = filter_trajectories(seq.gt, seq.dets, seq.img)
        for tid in sorted(trajs):
            stats = run_trajectory_pass(
                tid, trajs[tid], seq.dets, seq.img, policies, tracker=tracker
            )
            for state in ("tracked", "lost"):
                c, t = stats.decisions[state]
                totals[state][0] += c
                totals[state][1] += t
        model = models.get("active")
        for det in seq.dets.detections:
            best = ctx.max_iou(det)
            if ACTIVE_FP_IOU <= best < ACTIVE_TP_IOU:
                continue
            label_pos = best >= ACTIVE_TP_IOU
            pred_pos = (
                predict(model, active_features(det, seq.img)) >= 0.5
                if model is not None
                else True
            )
            totals["active"][0] += int(pred_pos == label_pos)
            totals["active"][1] += 1
    return {s: (c / t if t else 0.0) for s, (c, t) in totals.items()}


def _feature_dim(state: str) -> int:
    return ACTIVE_FEATURE_DIM if state == "active" else LOST_FEATURE_DIM


def ibt_run(
    dataset: Dataset,
    config: TrainerConfig,
    model_dir: str | Path,
    train_config: TrainConfig | None = None,
    rebalance_strategy: str | None = None,
    tracker=None,
    seed: int = 0,
) -> list[dict]:
    """Iterative batch training: data generation, batch training, eval, test.

    Iteration 1 generates data with the relative oracle and saves every
    sample; later iterations use the previous models and save only their
    mistakes.  Models and a JSON report are persisted per iteration.
    """
    train_config = train_config or TrainConfig()
    model_dir = Path(model_dir)
    model_dir.mkdir(parents=True, exist_ok=True)

    models: dict[str, LinearModel | None] = {s: None for s in STATES}
    accumulated = SampleStore()
    reports: list[dict] = []

    for iteration in range(1, config.max_iters + 1):
        oracle = iteration == 1
        save_all = iteration == 1
        new_data = SampleStore(iteration)
        source = "tester" if config.data_from_tester else "trainer"
        hook = _collect_hook(new_data, save_all, source, iteration)

        if config.data_from_tester:
            for seq in dataset.train:
                if seq.gt is None:
                    raise ContractViolation(f"sequence {seq.name} has no ground truth")
                ctx = GroundTruthContext(seq.gt, seq.dets)
                policies = _policies_for(models, oracle, ctx, seed=seed)
                _tester_pass(seq, policies, hook, tracker=tracker)
            train_order_data = {s: new_data.for_state(s) for s in STATES}
        else:
            train_order_data = {}

        for state in STATES:
            if not config.data_from_tester:
                # Models of earlier states already carry this iteration's update.
                for seq in dataset.train:
                    if seq.gt is None:
                        raise ContractViolation(f"sequence {seq.name} has no ground truth")
                    ctx = GroundTruthContext(seq.gt, seq.dets)
                    policies = _policies_for(models, oracle, ctx, seed=seed)
                    if state == "active":
                        _active_data_pass(seq, models, oracle, hook)
                    else:
                        _trainer_data_pass(seq, policies, hook, state, tracker=tracker)
                state_new = new_data.for_state(state)
            else:
                state_new = train_order_data[state]

            if config.accumulative_data:
                data = accumulated.for_state(state) + state_new
            else:
                data = state_new
            labels = {s.label for s in data}
            if labels != {1, -1}:
                logger.warning(
                    "iteration %d: %s data lacks a class (labels=%s); model carried over",
                    iteration, state, sorted(labels),
                )
            else:
                if config.train_from_scratch or models[state] is None:
                    init = zero_model(_feature_dim(state))
                else:
                    init = models[state]
                models[state] = train(
                    init, data, train_config,
                    epoch_sampler=rebalance_sampler(data, rebalance_strategy),
                )

        if config.accumulative_data:
            accumulated.extend(new_data)
        else:
            accumulated = new_data

        iter_dir = model_dir / f"iter_{iteration:03d}"
        iter_dir.mkdir(exist_ok=True)
        for state in STATES:
            if models[state] is not None:
                save_model(models[state], iter_dir / f"{state}.mdpm")
        new_data.write_csv(iter_dir / "samples.csv")

        accuracy = _eval_policies(dataset.test, models, tracker=tracker)

        mot: dict[str, float] = {}
        for seq in dataset.test:
            if seq.gt is None:
                continue
            ctx = GroundTruthContext(seq.gt, seq.dets)
            policies = _policies_for(models, oracle=False, ctx=ctx, seed=seed)
            trajectories = _tester_pass(seq, policies, sample_hook=None, tracker=tracker)
            results = results_from_trajectories(trajectories)
            clear = clear_mot(seq.gt, results)
            h = hota(seq.gt, results)
            mot[seq.name] = {"mota": clear.mota, "ids": clear.ids, "hota": h.hota}

        report = {
            "iteration": iteration,
            "samples": {
                s: {"pos": new_data.counts(s)[0], "neg": new_data.counts(s)[1]}
                for s in STATES
            },
            "accuracy": accuracy,
            "mot": mot,
        }
        with open(iter_dir / "report.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        reports.append(report)
    return reports
