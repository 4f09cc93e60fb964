"""State policies: linear classifiers, heuristics, oracles and dummies.

The active and lost policies are binary linear models (hinge or logistic
loss, optional focal weighting and hard-example mining).  The tracked policy
defaults to a heuristic on tracking success and detection presence, but can
share the lost model.  Oracle and dummy policy kinds exist to bound what a
learnable policy can achieve.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import BoundingBox, Detection, PolicyAction, Target
from .errors import ContractViolation
from .features import active_features, lost_features
from .formats import DetectionSet, GtTrackSet
from .geometry import ImageExtent, inside_fraction, iou
from .patch_tracking.lk import TrackResult

_MAGIC = b"MDPM"
_VERSION = 1
_LOSS_CODES = {"hinge": 0, "logistic": 1}
_LOSS_NAMES = {v: k for k, v in _LOSS_CODES.items()}

# Two-level IOU thresholding for active training labels.
ACTIVE_TP_IOU = 0.5
ACTIVE_FP_IOU = 0.2
# Decision threshold shared by all policies.
DECISION_IOU = 0.5


class PolicyKind(Enum):
    LEARNED = "learned"
    HEURISTIC = "heuristic"  # tracked-state default: no classifier involved
    RELATIVE_ORACLE = "relative-oracle"
    ABSOLUTE_ORACLE = "absolute-oracle"
    ALWAYS_POSITIVE = "always-positive"
    RANDOM = "random"


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float = 0.0
    loss: str = "logistic"  # hinge | logistic
    gamma: float = 0.0  # focal weighting exponent; 0 disables

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.loss not in _LOSS_CODES:
            raise ContractViolation(f"unknown loss kind {self.loss!r}")
        if self.gamma < 0:
            raise ContractViolation(f"gamma must be >= 0, got {self.gamma}")
        if not (np.all(np.isfinite(self.weights)) and np.isfinite(self.bias)):
            raise ContractViolation("model parameters must be finite")

    @property
    def dim(self) -> int:
        return len(self.weights)


def zero_model(dim: int, loss: str = "logistic", gamma: float = 0.0) -> LinearModel:
    return LinearModel(weights=np.zeros(dim), bias=0.0, loss=loss, gamma=gamma)


@dataclass
class TrainingSample:
    features: np.ndarray
    label: int  # +1 or -1
    state: str  # active | tracked | lost
    frame: int = 0
    target_id: int = 0
    source: str = "trainer"  # trainer | tester
    iteration: int = 0

    def __post_init__(self):
        if self.label not in (1, -1):
            raise ContractViolation(f"label must be +1 or -1, got {self.label}")
        self.features = np.asarray(self.features, dtype=np.float64)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.05
    batch_size: int = 32
    l2: float = 1e-4
    ohem_ratio: float = 1.0  # fraction of highest-loss samples kept per batch
    seed: int = 0


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -50.0, 50.0)))


def predict(model: LinearModel, features: np.ndarray) -> float:
    """Match probability in [0, 1]; the decision is probability >= 0.5."""
    f = np.asarray(features, dtype=np.float64)
    if f.shape != (model.dim,):
        raise ContractViolation(f"feature dim {f.shape} does not match model dim {model.dim}")
    z = float(model.weights @ f + model.bias)
    if model.loss == "hinge":
        return float(_sigmoid(2.0 * z))  # fixed-slope calibration
    return float(_sigmoid(z))


def predict_batch(model: LinearModel, features: np.ndarray) -> np.ndarray:
    f = np.atleast_2d(np.asarray(features, dtype=np.float64))
    z = f @ model.weights + model.bias
    return _sigmoid(2.0 * z if model.loss == "hinge" else z)


def _batch_losses_grads(model_loss, gamma, w, b, x, y):
    """Per-sample losses and d(loss)/d(margin) for one batch."""
    m = y * (x @ w + b)
    if model_loss == "hinge":
        losses = np.maximum(0.0, 1.0 - m)
        dldm = np.where(m < 1.0, -1.0, 0.0)
    else:
        p = _sigmoid(m)
        p = np.clip(p, 1e-12, 1.0 - 1e-12)
        base = -np.log(p)
        if gamma > 0:
            losses = (1.0 - p) ** gamma * base
            dldm = gamma * p * (1.0 - p) ** gamma * np.log(p) - (1.0 - p) ** (gamma + 1.0)
        else:
            losses = base
            dldm = -(1.0 - p)
    return losses, dldm


def train(
    model: LinearModel,
    samples: list[TrainingSample],
    config: TrainConfig | None = None,
    allow_single_class: bool = False,
    epoch_sampler=None,
) -> LinearModel:
    """Stochastic subgradient descent on the model's loss; returns a new model.

    With ``ohem_ratio`` r < 1 each batch keeps only the fraction r with the
    highest loss.  ``epoch_sampler(epoch, rng) -> list[TrainingSample]`` can
    replace the raw sample list per epoch (used by the rebalancing
    strategies).  Deterministic for a given seed.
    """
    config = config or TrainConfig()
    if not samples and epoch_sampler is None:
        raise ContractViolation("no training samples")
    labels = {s.label for s in samples}
    if not allow_single_class and labels and labels != {1, -1}:
        missing = "+1" if 1 not in labels else "-1"
        raise ContractViolation(f"training data is single-class: no {missing} samples")

    rng = np.random.default_rng(config.seed)
    w = model.weights.copy()
    b = model.bias

    for epoch in range(config.epochs):
        epoch_samples = epoch_sampler(epoch, rng) if epoch_sampler else samples
        if not epoch_samples:
            continue
        x = np.stack([s.features for s in epoch_samples])
        y = np.array([s.label for s in epoch_samples], dtype=np.float64)
        order = rng.permutation(len(epoch_samples))
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            xb, yb = x[idx], y[idx]
            losses, dldm = _batch_losses_grads(model.loss, model.gamma, w, b, xb, yb)
            if config.ohem_ratio < 1.0:
                keep = max(1, int(np.ceil(config.ohem_ratio * len(idx))))
                hard = np.argsort(-losses, kind="stable")[:keep]
                xb, yb, dldm = xb[hard], yb[hard], dldm[hard]
            gm = dldm * yb
            grad_w = (gm[:, None] * xb).mean(axis=0) + config.l2 * w
            grad_b = gm.mean()
            w = w - config.learning_rate * grad_w
            b = b - config.learning_rate * grad_b

    return LinearModel(weights=w, bias=b, loss=model.loss, gamma=model.gamma)


def training_accuracy(model: LinearModel, samples: list[TrainingSample]) -> float:
    if not samples:
        return 0.0
    probs = predict_batch(model, np.stack([s.features for s in samples]))
    decisions = np.where(probs >= 0.5, 1, -1)
    labels = np.array([s.label for s in samples])
    return float((decisions == labels).mean())


def save_model(model: LinearModel, path) -> None:
    """Little-endian binary: magic, version u32, loss u8, gamma f64, dim u32,
    bias f64, then the weights as f64."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<B", _LOSS_CODES[model.loss]))
        fh.write(struct.pack("<d", model.gamma))
        fh.write(struct.pack("<I", model.dim))
        fh.write(struct.pack("<d", model.bias))
        fh.write(struct.pack(f"<{model.dim}d", *model.weights.tolist()))


def load_model(path) -> LinearModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise ContractViolation(f"{path}: bad model magic {data[:4]!r}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != _VERSION:
        raise ContractViolation(f"{path}: unsupported model version {version}")
    (loss_code,) = struct.unpack_from("<B", data, 8)
    (gamma,) = struct.unpack_from("<d", data, 9)
    (dim,) = struct.unpack_from("<I", data, 17)
    (bias,) = struct.unpack_from("<d", data, 21)
    weights = np.array(struct.unpack_from(f"<{dim}d", data, 29))
    return LinearModel(weights=weights, bias=bias, loss=_LOSS_NAMES[loss_code], gamma=gamma)


# ---------------------------------------------------------------------------
# Ground-truth context for oracle policies and training labels


class GroundTruthContext:
    """GT lookup used by oracles: maps detections to the tracks they came from.

    Exact when the detection set carries a provenance sidecar; otherwise the
    highest-IOU ground-truth box in the frame is used.
    """

    def __init__(self, gt: GtTrackSet, detections: DetectionSet | None = None):
        self.gt = gt
        self.detections = detections
        self._frame_cache: dict[int, list[tuple[int, BoundingBox]]] = {}

    def boxes_in_frame(self, frame: int) -> list[tuple[int, BoundingBox]]:
        if frame not in self._frame_cache:
            self._frame_cache[frame] = self.gt.boxes_in_frame(frame)
        return self._frame_cache[frame]

    def box_for(self, track_id: int | None, frame: int) -> BoundingBox | None:
        if track_id is None:
            return None
        entry = self.gt.entry(track_id, frame)
        if entry is None or entry.flag == 0:
            return None
        return entry.box

    def best_match(self, det: Detection, det_index: int | None = None) -> tuple[int | None, float]:
        """(gt_id, iou) for a detection; (None, best_iou) for false positives."""
        if (
            det_index is not None
            and self.detections is not None
            and self.detections.provenance is not None
        ):
            gid = self.detections.provenance[det_index]
            if gid is None:
                return None, 0.0
            box = self.box_for(gid, det.frame)
            return gid, (iou(det.box, box) if box else 0.0)
        best_id, best_iou = None, 0.0
        for gid, box in self.boxes_in_frame(det.frame):
            o = iou(det.box, box)
            if o > best_iou:
                best_id, best_iou = gid, o
        return best_id, best_iou

    def max_iou(self, det: Detection) -> float:
        return max((iou(det.box, b) for _, b in self.boxes_in_frame(det.frame)), default=0.0)


# ---------------------------------------------------------------------------
# Policy configuration and decisions


@dataclass
class PolicyRuntime:
    """One state's policy: its kind, optional model, and a seeded RNG."""

    kind: PolicyKind
    model: LinearModel | None = None
    seed: int = 0
    _rng: np.random.Generator = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        self._rng = np.random.default_rng(self.seed)

    def coin(self) -> bool:
        return bool(self._rng.random() < 0.5)


@dataclass
class PolicyConfig:
    exit_inside_min: float = 0.5  # scene-exit containment threshold
    max_lost: int = 50  # frames a target may stay lost
    ignore_detections: bool = False  # tracked policy: drop the detection clause


@dataclass
class PolicySet:
    active: PolicyRuntime
    tracked: PolicyRuntime
    lost: PolicyRuntime
    gt: GroundTruthContext | None = None
    config: PolicyConfig = field(default_factory=PolicyConfig)

    def require_gt(self, state: str) -> GroundTruthContext:
        if self.gt is None:
            raise ContractViolation(f"{state} oracle policy needs ground truth")
        return self.gt


def _is_oracle(kind: PolicyKind) -> bool:
    return kind in (PolicyKind.RELATIVE_ORACLE, PolicyKind.ABSOLUTE_ORACLE)


def decide_active(
    policy: PolicyRuntime,
    det: Detection,
    img: ImageExtent,
    gt: GroundTruthContext | None = None,
) -> PolicyAction:
    """ACTIVATE (new target) or DISCARD for an unassociated detection."""
    kind = policy.kind
    if kind == PolicyKind.ALWAYS_POSITIVE:
        return PolicyAction.ACTIVATE
    if kind == PolicyKind.RANDOM:
        return PolicyAction.ACTIVATE if policy.coin() else PolicyAction.DISCARD
    if _is_oracle(kind):
        if gt is None:
            raise ContractViolation("active oracle policy needs ground truth")
        positive = gt.max_iou(det) > DECISION_IOU
        return PolicyAction.ACTIVATE if positive else PolicyAction.DISCARD
    if kind == PolicyKind.LEARNED:
        if policy.model is None:
            raise ContractViolation("learned active policy has no model")
        prob = predict(policy.model, active_features(det, img))
        return PolicyAction.ACTIVATE if prob >= 0.5 else PolicyAction.DISCARD
    raise ContractViolation(f"active policy cannot use kind {kind.value}")


def decide_tracked(
    policy: PolicyRuntime,
    summary: TrackResult,
    matching_det: Detection | None,
    target: Target,
    frame: int,
    predicted: BoundingBox,
    img: ImageExtent,
    gt: GroundTruthContext | None = None,
    config: PolicyConfig | None = None,
) -> PolicyAction:
    """KEEP_TRACKING or MARK_LOST for a currently tracked target.

    Unless ``ignore_detections`` is set, a missing matching detection forces
    MARK_LOST for every non-oracle kind, whatever the classifier says.
    """
    config = config or PolicyConfig()
    kind = policy.kind
    if kind == PolicyKind.ABSOLUTE_ORACLE:
        if gt is None:
            raise ContractViolation("tracked oracle policy needs ground truth")
        keep = gt.box_for(target.gt_id, frame) is not None
        return PolicyAction.KEEP_TRACKING if keep else PolicyAction.MARK_LOST
    if kind == PolicyKind.RELATIVE_ORACLE:
        if gt is None:
            raise ContractViolation("tracked oracle policy needs ground truth")
        gt_box = gt.box_for(target.gt_id, frame)
        if gt_box is None:
            return PolicyAction.MARK_LOST
        det_confirms = matching_det is not None and iou(matching_det.box, gt_box) > DECISION_IOU
        keep = summary.measured_success or det_confirms
        return PolicyAction.KEEP_TRACKING if keep else PolicyAction.MARK_LOST

    has_det = matching_det is not None
    if not config.ignore_detections and not has_det:
        return PolicyAction.MARK_LOST  # a missing detection always decides negatively

    if kind == PolicyKind.ALWAYS_POSITIVE:
        return PolicyAction.KEEP_TRACKING
    if kind == PolicyKind.RANDOM:
        return PolicyAction.KEEP_TRACKING if policy.coin() else PolicyAction.MARK_LOST
    if kind == PolicyKind.HEURISTIC:
        return PolicyAction.KEEP_TRACKING if summary.success else PolicyAction.MARK_LOST
    if kind == PolicyKind.LEARNED:
        if policy.model is None:
            raise ContractViolation("learned tracked policy has no model (share the lost model)")
        det = matching_det
        if det is None:  # ignore_detections mode: stand in the prediction
            det = Detection(frame=frame, box=predicted, confidence=0.5)
        prob = predict(policy.model, lost_features(summary, predicted, det, img))
        return PolicyAction.KEEP_TRACKING if prob >= 0.5 else PolicyAction.MARK_LOST
    raise ContractViolation(f"tracked policy cannot use kind {kind.value}")


@dataclass
class LostDecision:
    """Outcome of the lost policy for one target.

    ``action`` is the standalone resolution (RETIRE, STAY_LOST, or RECONNECT
    with ``chosen``); ``scores`` maps candidate indices to match
    probabilities so the tester can resolve contention globally.
    """

    action: PolicyAction
    scores: dict[int, float] = field(default_factory=dict)
    chosen: int | None = None


def decide_lost(
    policy: PolicyRuntime,
    candidates: list[tuple[Detection, np.ndarray | None]],
    target: Target,
    frame: int,
    predicted: BoundingBox,
    img: ImageExtent,
    gt: GroundTruthContext | None = None,
    config: PolicyConfig | None = None,
) -> LostDecision:
    """RETIRE, STAY_LOST, or RECONNECT for a lost target.

    Retirement triggers when the predicted box has mostly left the image or
    the target has been lost too long.  Otherwise each candidate detection is
    scored; standalone resolution takes the best candidate at probability
    >= 0.5.
    """
    config = config or PolicyConfig()
    if (
        inside_fraction(predicted, img) < config.exit_inside_min
        or target.lost_duration > config.max_lost
    ):
        return LostDecision(action=PolicyAction.RETIRE)

    kind = policy.kind
    scores: dict[int, float] = {}
    if _is_oracle(kind):
        if gt is None:
            raise ContractViolation("lost oracle policy needs ground truth")
        gt_box = gt.box_for(target.gt_id, frame)
        for i, (det, _) in enumerate(candidates):
            o = iou(det.box, gt_box) if gt_box is not None else 0.0
            scores[i] = o if o > DECISION_IOU else 0.0
    elif kind == PolicyKind.ALWAYS_POSITIVE:
        scores = {i: 1.0 for i in range(len(candidates))}
    elif kind == PolicyKind.RANDOM:
        scores = {i: (1.0 if policy.coin() else 0.0) for i in range(len(candidates))}
    elif kind == PolicyKind.LEARNED:
        if policy.model is None:
            raise ContractViolation("learned lost policy has no model")
        for i, (_, feats) in enumerate(candidates):
            if feats is None:
                raise ContractViolation("learned lost policy needs candidate features")
            scores[i] = predict(policy.model, feats)
    else:
        raise ContractViolation(f"lost policy cannot use kind {kind.value}")

    best = max(scores, key=lambda i: (scores[i], -i), default=None)
    if best is not None and scores[best] >= 0.5:
        return LostDecision(action=PolicyAction.RECONNECT, scores=scores, chosen=best)
    return LostDecision(action=PolicyAction.STAY_LOST, scores=scores)


def share_tracked_model(policies: PolicySet) -> PolicySet:
    """Model sharing: let the tracked policy reuse the lost policy's model."""
    shared = PolicyRuntime(
        kind=PolicyKind.LEARNED, model=policies.lost.model, seed=policies.tracked.seed
    )
    return PolicySet(
        active=policies.active,
        tracked=shared,
        lost=policies.lost,
        gt=policies.gt,
        config=policies.config,
    )
