"""Synthetic scenarios: ground-truth tracks, detector corruption, rendering.

Replaces real benchmark data at desk scale.  Targets move at constant speed
with optional per-frame heading noise and are aimed through the central part
of the image so that multi-target configurations naturally produce crossings.
Rendering attaches a fixed per-target texture rigidly to each box so that
pixel-level tracking sees consistent appearance.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import BoundingBox, Detection
from .errors import ContractViolation
from .formats import (
    DetectionSet,
    GtEntry,
    GtTrackSet,
    write_detections,
    write_gt,
    write_pgm,
    write_provenance,
)
from .geometry import ImageExtent, iou


@dataclass(frozen=True)
class OcclusionEvent:
    occluded_id: int
    occluder_id: int
    first_frame: int
    last_frame: int


@dataclass
class ScenarioConfig:
    width: int = 480
    height: int = 360
    frame_count: int = 80
    target_count: int = 5
    spawn_frame_range: tuple[int, int] = (1, 1)
    exit_frame_range: tuple[int, int] = (80, 80)
    speed_range: tuple[float, float] = (1.0, 3.0)
    size_range: tuple[float, float] = (28.0, 48.0)
    turn_rate_noise: float = 0.0  # std-dev of per-frame heading change, radians
    occlusions: list[OcclusionEvent] = field(default_factory=list)

    def __post_init__(self):
        if self.frame_count < 1:
            raise ContractViolation("frame_count must be >= 1")
        for name, rng in (
            ("spawn_frame_range", self.spawn_frame_range),
            ("exit_frame_range", self.exit_frame_range),
            ("speed_range", self.speed_range),
            ("size_range", self.size_range),
        ):
            if rng[1] < rng[0]:
                raise ContractViolation(f"{name} is degenerate: {rng}")

    @property
    def extent(self) -> ImageExtent:
        return ImageExtent(self.width, self.height)


@dataclass
class CorruptionConfig:
    fn_rate: float = 0.0  # per-box drop probability (doubled while occluded)
    fp_per_frame: float = 0.0  # Poisson mean of false positives per frame
    position_sigma: float = 0.0  # px
    scale_sigma: float = 0.0  # relative
    tp_confidence: tuple[float, float] = (0.8, 0.1)  # clipped normal
    fp_confidence: tuple[float, float] = (0.3, 0.15)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.fn_rate <= 1.0:
            raise ContractViolation(f"fn_rate must be in [0,1], got {self.fn_rate}")
        if self.fp_per_frame < 0:
            raise ContractViolation(f"fp_per_frame must be >= 0, got {self.fp_per_frame}")


def generate_gt(config: ScenarioConfig, seed: int) -> GtTrackSet:
    """Deterministic constant-velocity tracks aimed through the image center.

    A target spawns inside the image, heads toward a random point in the
    central third (so paths cross), optionally wanders by heading noise, and
    ends at its exit frame or once its box is fully outside the image.
    """
    needs_exit = config.exit_frame_range[1] < config.frame_count
    if needs_exit and config.speed_range[1] <= 0.0:
        raise ContractViolation(
            "infeasible scenario: targets must exit but the speed range is zero"
        )
    rng = np.random.default_rng(seed)
    gt = GtTrackSet()
    occluded_frames: dict[int, set[int]] = {}
    for ev in config.occlusions:
        occluded_frames.setdefault(ev.occluded_id, set()).update(
            range(ev.first_frame, ev.last_frame + 1)
        )

    w, h = config.width, config.height
    for tid in range(1, config.target_count + 1):
        spawn = int(rng.integers(config.spawn_frame_range[0], config.spawn_frame_range[1] + 1))
        exit_frame = int(rng.integers(config.exit_frame_range[0], config.exit_frame_range[1] + 1))
        exit_frame = min(max(exit_frame, spawn), config.frame_count)
        bw = float(rng.uniform(*config.size_range))
        bh = float(rng.uniform(*config.size_range))
        speed = float(rng.uniform(*config.speed_range))
        cx = float(rng.uniform(0.15 * w, 0.85 * w))
        cy = float(rng.uniform(0.15 * h, 0.85 * h))
        aim_x = float(rng.uniform(w / 3.0, 2.0 * w / 3.0))
        aim_y = float(rng.uniform(h / 3.0, 2.0 * h / 3.0))
        heading = float(np.arctan2(aim_y - cy, aim_x - cx))
        if speed == 0.0:
            heading = 0.0

        marked = occluded_frames.get(tid, set())
        for frame in range(spawn, exit_frame + 1):
            box = BoundingBox(cx - bw / 2.0, cy - bh / 2.0, bw, bh)
            fully_outside = (
                box.x + box.w <= 0 or box.x >= w or box.y + box.h <= 0 or box.y >= h
            )
            if fully_outside:
                break
            occ = frame in marked
            gt.add(
                tid,
                GtEntry(
                    frame=frame,
                    box=box,
                    flag=1,
                    visibility=0.0 if occ else 1.0,
                    occluded=occ,
                ),
            )
            if config.turn_rate_noise > 0.0:
                heading += float(rng.normal(0.0, config.turn_rate_noise))
            cx += speed * float(np.cos(heading))
            cy += speed * float(np.sin(heading))
    return gt


def corrupt(gt: GtTrackSet, config: CorruptionConfig) -> DetectionSet:
    """Detector simulation: drops, jitter, confidences, and Poisson clutter.

    True detections keep their source track id in the provenance sidecar;
    false positives carry None.  Occluded boxes are dropped at twice the
    configured miss rate.
    """
    rng = np.random.default_rng(config.seed)
    dets: list[Detection] = []
    provenance: list[int | None] = []

    sizes = [
        (e.box.w, e.box.h) for entries in gt.tracks.values() for e in entries
    ]
    mean_w = float(np.mean([s[0] for s in sizes])) if sizes else 32.0
    mean_h = float(np.mean([s[1] for s in sizes])) if sizes else 32.0

    frames = gt.frames()
    extent_w = max((e.box.x + e.box.w) for en in gt.tracks.values() for e in en)
    extent_h = max((e.box.y + e.box.h) for en in gt.tracks.values() for e in en)

    for frame in frames:
        for tid, box in gt.boxes_in_frame(frame):
            entry = gt.entry(tid, frame)
            drop_p = min(1.0, config.fn_rate * (2.0 if entry and entry.occluded else 1.0))
            if rng.random() < drop_p:
                continue
            x = box.x + float(rng.normal(0.0, config.position_sigma)) if config.position_sigma else box.x
            y = box.y + float(rng.normal(0.0, config.position_sigma)) if config.position_sigma else box.y
            w_ = box.w * max(0.2, 1.0 + float(rng.normal(0.0, config.scale_sigma))) if config.scale_sigma else box.w
            h_ = box.h * max(0.2, 1.0 + float(rng.normal(0.0, config.scale_sigma))) if config.scale_sigma else box.h
            conf = float(np.clip(rng.normal(*config.tp_confidence), 0.0, 1.0))
            dets.append(Detection(frame=frame, box=BoundingBox(x, y, w_, h_), confidence=conf))
            provenance.append(tid)
        n_fp = int(rng.poisson(config.fp_per_frame)) if config.fp_per_frame > 0 else 0
        for _ in range(n_fp):
            w_ = max(4.0, mean_w * float(np.exp(rng.normal(0.0, 0.3))))
            h_ = max(4.0, mean_h * float(np.exp(rng.normal(0.0, 0.3))))
            x = float(rng.uniform(0, max(1.0, extent_w - w_)))
            y = float(rng.uniform(0, max(1.0, extent_h - h_)))
            conf = float(np.clip(rng.normal(*config.fp_confidence), 0.0, 1.0))
            dets.append(Detection(frame=frame, box=BoundingBox(x, y, w_, h_), confidence=conf))
            provenance.append(None)

    order = sorted(range(len(dets)), key=lambda i: dets[i].frame)
    return DetectionSet(
        detections=[dets[i] for i in order], provenance=[provenance[i] for i in order]
    )


def _target_texture(seed: int, tid: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-id texture: a coarse high-contrast grid plus fine detail, both
    sampled in box-normalized coordinates so the pattern rides with the box."""
    rng = np.random.default_rng((seed + 1) * 7919 + tid)
    coarse = rng.uniform(0.15, 0.95, size=(6, 5))
    fine = rng.uniform(-0.12, 0.12, size=(24, 18))
    return coarse, fine


def _sample_norm_texture(tex: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear lookup of a texture grid at normalized (u, v) in [0, 1]."""
    th, tw = tex.shape
    x = np.clip(u, 0.0, 1.0) * (tw - 1)
    y = np.clip(v, 0.0, 1.0) * (th - 1)
    x0 = np.minimum(x.astype(np.int64), tw - 2)
    y0 = np.minimum(y.astype(np.int64), th - 2)
    fx, fy = x - x0, y - y0
    return (
        tex[y0, x0] * (1 - fx) * (1 - fy)
        + tex[y0, x0 + 1] * fx * (1 - fy)
        + tex[y0 + 1, x0] * (1 - fx) * fy
        + tex[y0 + 1, x0 + 1] * fx * fy
    )


def render(gt: GtTrackSet, extent: ImageExtent, seed: int, frame_count: int | None = None) -> list[np.ndarray]:
    """8-bit grayscale frames: static noise background, textured targets.

    Draw order is ascending id except that an active occluder is drawn after
    the target it occludes.
    """
    rng = np.random.default_rng(seed)
    background = np.clip(
        rng.normal(0.42, 0.035, size=(extent.height, extent.width)), 0.0, 1.0
    )
    textures = {tid: _target_texture(seed, tid) for tid in gt.track_ids()}

    # Occluded targets go first within their frame so anything else paints over them.
    frames = frame_count or (max(gt.frames()) if gt.frames() else 0)
    out = []
    for frame in range(1, frames + 1):
        img = background.copy()
        items = gt.boxes_in_frame(frame, include_ignored=True)
        entries = {tid: gt.entry(tid, frame) for tid, _ in items}
        order = sorted(items, key=lambda it: (0 if entries[it[0]].occluded else 1, it[0]))
        for tid, box in order:
            coarse, fine = textures[tid]
            x0 = max(0, int(np.floor(box.x)))
            x1 = min(extent.width, int(np.ceil(box.x + box.w)))
            y0 = max(0, int(np.floor(box.y)))
            y1 = min(extent.height, int(np.ceil(box.y + box.h)))
            if x1 <= x0 or y1 <= y0:
                continue
            xs = np.arange(x0, x1) + 0.5
            ys = np.arange(y0, y1) + 0.5
            u = (xs - box.x) / box.w
            v = (ys - box.y) / box.h
            uu, vv = np.meshgrid(u, v)
            inside = (uu >= 0) & (uu < 1) & (vv >= 0) & (vv < 1)
            patch = _sample_norm_texture(coarse, uu, vv) + _sample_norm_texture(fine, uu, vv)
            region = img[y0:y1, x0:x1]
            region[inside] = np.clip(patch[inside], 0.0, 1.0)
        out.append((img * 255.0).round().astype(np.uint8))
    return out


def detection_recall_precision(
    dets: DetectionSet, gt: GtTrackSet, iou_min: float = 0.5
) -> tuple[float, float]:
    """Frame-wise greedy matching at the given overlap threshold."""
    by_frame = dets.by_frame()
    tp = 0
    total_dets = len(dets.detections)
    gt_total = gt.box_count()
    for frame in gt.frames():
        gt_boxes = [b for _, b in gt.boxes_in_frame(frame)]
        frame_dets = sorted(
            by_frame.get(frame, []), key=lambda it: -it[1].confidence
        )
        unused = list(range(len(gt_boxes)))
        for _, det in frame_dets:
            best, best_iou = -1, iou_min
            for gi in unused:
                o = iou(det.box, gt_boxes[gi])
                if o >= best_iou:
                    best, best_iou = gi, o
            if best >= 0:
                unused.remove(best)
                tp += 1
    recall = tp / gt_total if gt_total else 0.0
    precision = tp / total_dets if total_dets else 0.0
    return recall, precision


@dataclass
class SweepRow:
    threshold: float
    kept: int
    recall: float
    precision: float


def threshold_sweep(
    dets: DetectionSet, gt: GtTrackSet, thresholds: list[float]
) -> tuple[dict[float, DetectionSet], list[SweepRow], float | None]:
    """Confidence-threshold sweep: per-threshold detection sets plus the
    recall/precision table, and the crossover threshold where the curves meet."""
    subsets: dict[float, DetectionSet] = {}
    rows: list[SweepRow] = []
    for thr in sorted(thresholds):
        keep_idx = [i for i, d in enumerate(dets.detections) if d.confidence >= thr]
        sub = DetectionSet(
            detections=[dets.detections[i] for i in keep_idx],
            provenance=(
                [dets.provenance[i] for i in keep_idx] if dets.provenance is not None else None
            ),
        )
        recall, precision = detection_recall_precision(sub, gt)
        subsets[thr] = sub
        rows.append(SweepRow(threshold=thr, kept=len(sub), recall=recall, precision=precision))
    crossover = None
    if rows:
        crossover = min(rows, key=lambda r: (abs(r.recall - r.precision), r.threshold)).threshold
    return subsets, rows, crossover


def emit_scenario(
    out_dir: str | Path,
    scenario: ScenarioConfig,
    corruption: CorruptionConfig,
    seed: int,
    render_frames: bool = True,
) -> tuple[GtTrackSet, DetectionSet]:
    """Write gt.txt, det.txt, provenance.csv, scenario.json and frame PGMs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gt = generate_gt(scenario, seed)
    dets = corrupt(gt, corruption)
    write_gt(gt, out / "gt.txt")
    write_detections(dets, out / "det.txt")
    write_provenance(dets, out / "provenance.csv")
    echo = {
        "seed": seed,
        "scenario": {
            **{k: v for k, v in asdict(scenario).items() if k != "occlusions"},
            "occlusions": [asdict(ev) for ev in scenario.occlusions],
        },
        "corruption": asdict(corruption),
    }
    with open(out / "scenario.json", "w") as fh:
        json.dump(echo, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if render_frames:
        frames_dir = out / "frames"
        frames_dir.mkdir(exist_ok=True)
        for i, img in enumerate(render(gt, scenario.extent, seed, scenario.frame_count), start=1):
            write_pgm(frames_dir / f"frame{i:06d}.pgm", img)
    return gt, dets
