"""CLEAR MOT and HOTA evaluation.

CLEAR matching carries the previous frame's ground-truth/prediction
correspondences forward while they still overlap, then matches the remainder
optimally; identity switches are counted per ground-truth track against its
last known match.  HOTA is computed per overlap threshold alpha with plain
per-frame IOU matching (the association-aware matching of the original metric
is deliberately not used; see README).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import BoundingBox, Trajectory
from .errors import ContractViolation
from .formats import GtTrackSet, ResultSet
from .geometry import iou

DEFAULT_ALPHAS = tuple(round(0.05 * i, 2) for i in range(1, 20))  # 0.05 .. 0.95
_BIG = 1e6  # match-count priority in the assignment cost


@dataclass
class ClearReport:
    mota: float
    motp: float  # mean overlap of matched pairs, in percent
    mt: float
    ml: float
    ids: int
    fp: int
    fn: int
    gt_count: int

    def as_dict(self) -> dict:
        return {
            "mota": self.mota,
            "motp": self.motp,
            "mt": self.mt,
            "ml": self.ml,
            "ids": self.ids,
            "fp": self.fp,
            "fn": self.fn,
            "gt_count": self.gt_count,
        }


@dataclass
class HotaReport:
    alphas: list[float]
    hota_per_alpha: list[float]
    deta_per_alpha: list[float]
    assa_per_alpha: list[float]
    hota: float = field(init=False)
    deta: float = field(init=False)
    assa: float = field(init=False)

    def __post_init__(self):
        self.hota = float(np.mean(self.hota_per_alpha))
        self.deta = float(np.mean(self.deta_per_alpha))
        self.assa = float(np.mean(self.assa_per_alpha))

    def as_dict(self) -> dict:
        return {
            "hota": self.hota,
            "deta": self.deta,
            "assa": self.assa,
            "alphas": list(self.alphas),
            "hota_per_alpha": list(self.hota_per_alpha),
            "deta_per_alpha": list(self.deta_per_alpha),
            "assa_per_alpha": list(self.assa_per_alpha),
        }


def results_from_trajectories(trajectories: list[Trajectory]) -> ResultSet:
    out: ResultSet = {}
    for t in trajectories:
        out.setdefault(t.target_id, []).extend(t.points)
    for pts in out.values():
        pts.sort(key=lambda p: p[0])
    return out


def _frames_union(gt: GtTrackSet, results: ResultSet) -> list[int]:
    frames = set(gt.frames())
    for pts in results.values():
        frames.update(f for f, _ in pts)
    return sorted(frames)


def _results_by_frame(results: ResultSet) -> dict[int, list[tuple[int, BoundingBox]]]:
    out: dict[int, list[tuple[int, BoundingBox]]] = {}
    for tid in sorted(results):
        for frame, box in results[tid]:
            out.setdefault(frame, []).append((tid, box))
    return out


def _match_frame(
    gt_items: list[tuple[int, BoundingBox]],
    pred_items: list[tuple[int, BoundingBox]],
    iou_min: float,
) -> list[tuple[int, int, float]]:
    """Optimal one-to-one matching; returns (gt_idx, pred_idx, iou) triples.

    Maximizes the number of matches first, total overlap second; only pairs
    with IOU >= iou_min are eligible.
    """
    if not gt_items or not pred_items:
        return []
    cost = np.full((len(gt_items), len(pred_items)), 0.0)
    eligible = np.zeros_like(cost, dtype=bool)
    for i, (_, gbox) in enumerate(gt_items):
        for j, (_, pbox) in enumerate(pred_items):
            o = iou(gbox, pbox)
            if o >= iou_min:
                cost[i, j] = -(_BIG + o)
                eligible[i, j] = True
    rows, cols = linear_sum_assignment(cost)
    return [
        (int(i), int(j), -cost[i, j] - _BIG)
        for i, j in zip(rows, cols)
        if eligible[i, j]
    ]


def clear_mot(gt: GtTrackSet, results: ResultSet, iou_min: float = 0.5) -> ClearReport:
    """CLEAR MOT metrics with correspondence carry-over.

    MOTA = 1 - (FN + FP + IDS) / GT as a fraction; MOTP is the mean IOU of
    matched pairs as a percentage; MT and ML are the fractions of ground-truth
    tracks with more than 80% / less than 20% of their boxes matched.
    """
    gt_total = gt.box_count()
    if gt_total == 0:
        raise ContractViolation("CLEAR MOT is undefined for empty ground truth")

    preds_by_frame = _results_by_frame(results)
    last_match: dict[int, int] = {}  # gt id -> last matched prediction id
    fp = fn = ids = 0
    iou_sum = 0.0
    n_matches = 0
    gt_matched_frames: dict[int, int] = {tid: 0 for tid in gt.track_ids()}
    gt_total_frames: dict[int, int] = {tid: 0 for tid in gt.track_ids()}

    for frame in _frames_union(gt, results):
        gt_items = gt.boxes_in_frame(frame)
        pred_items = preds_by_frame.get(frame, [])
        for tid, _ in gt_items:
            gt_total_frames[tid] += 1

        matches: dict[int, tuple[int, float]] = {}  # gt id -> (pred id, iou)
        used_preds: set[int] = set()
        # Carry over still-valid correspondences before optimal matching.
        pred_lookup = {pid: box for pid, box in pred_items}
        for gid, gbox in gt_items:
            pid = last_match.get(gid)
            if pid is not None and pid in pred_lookup and pid not in used_preds:
                o = iou(gbox, pred_lookup[pid])
                if o >= iou_min:
                    matches[gid] = (pid, o)
                    used_preds.add(pid)
        rest_gt = [(gid, box) for gid, box in gt_items if gid not in matches]
        rest_pred = [(pid, box) for pid, box in pred_items if pid not in used_preds]
        for gi, pj, o in _match_frame(rest_gt, rest_pred, iou_min):
            gid = rest_gt[gi][0]
            pid = rest_pred[pj][0]
            matches[gid] = (pid, o)
            used_preds.add(pid)

        for gid, (pid, o) in matches.items():
            prev = last_match.get(gid)
            if prev is not None and prev != pid:
                ids += 1
            last_match[gid] = pid
            iou_sum += o
            n_matches += 1
            gt_matched_frames[gid] += 1
        fn += len(gt_items) - len(matches)
        fp += len(pred_items) - len(used_preds)

    mota = 1.0 - (fn + fp + ids) / gt_total
    motp = 100.0 * iou_sum / n_matches if n_matches else 0.0
    ratios = [
        gt_matched_frames[tid] / gt_total_frames[tid]
        for tid in gt.track_ids()
        if gt_total_frames[tid] > 0
    ]
    mt = sum(1 for r in ratios if r > 0.8) / len(ratios) if ratios else 0.0
    ml = sum(1 for r in ratios if r < 0.2) / len(ratios) if ratios else 0.0
    return ClearReport(
        mota=mota, motp=motp, mt=mt, ml=ml, ids=ids, fp=fp, fn=fn, gt_count=gt_total
    )


def hota(
    gt: GtTrackSet, results: ResultSet, alphas: tuple[float, ...] = DEFAULT_ALPHAS
) -> HotaReport:
    """HOTA with per-alpha frame-level IOU matching.

    For each true positive with ids (g, p): TPA counts the (g, p) matches
    across the sequence, FNA the remaining boxes of g, FPA the remaining boxes
    of p.  HOTA(alpha) = sqrt(DetA * AssA); the headline value averages over
    alphas.
    """
    if gt.box_count() == 0:
        raise ContractViolation("HOTA is undefined for empty ground truth")

    preds_by_frame = _results_by_frame(results)
    frames = _frames_union(gt, results)
    gt_sizes = {tid: 0 for tid in gt.track_ids()}
    pred_sizes: dict[int, int] = {}
    per_frame: list[tuple[list, list, np.ndarray]] = []
    for frame in frames:
        gt_items = gt.boxes_in_frame(frame)
        pred_items = preds_by_frame.get(frame, [])
        for gid, _ in gt_items:
            gt_sizes[gid] += 1
        for pid, _ in pred_items:
            pred_sizes[pid] = pred_sizes.get(pid, 0) + 1
        overlap = np.zeros((len(gt_items), len(pred_items)))
        for i, (_, gbox) in enumerate(gt_items):
            for j, (_, pbox) in enumerate(pred_items):
                overlap[i, j] = iou(gbox, pbox)
        per_frame.append((gt_items, pred_items, overlap))

    n_gt = sum(gt_sizes.values())
    n_pred = sum(pred_sizes.values())

    hota_a, deta_a, assa_a = [], [], []
    for alpha in alphas:
        pair_counts: dict[tuple[int, int], int] = {}
        tp = 0
        for gt_items, pred_items, overlap in per_frame:
            if not gt_items or not pred_items:
                continue
            eligible = overlap >= alpha
            cost = np.where(eligible, -(_BIG + overlap), 0.0)
            rows, cols = linear_sum_assignment(cost)
            for i, j in zip(rows, cols):
                if eligible[i, j]:
                    pair = (gt_items[i][0], pred_items[j][0])
                    pair_counts[pair] = pair_counts.get(pair, 0) + 1
                    tp += 1
        fn = n_gt - tp
        fp = n_pred - tp
        deta = tp / (tp + fp + fn) if (tp + fp + fn) else 0.0
        if tp:
            acc = 0.0
            for (gid, pid), tpa in pair_counts.items():
                fna = gt_sizes.get(gid, 0) - tpa
                fpa = pred_sizes.get(pid, 0) - tpa
                acc += tpa * (tpa / (tpa + fpa + fna))
            assa = acc / tp
        else:
            assa = 0.0
        deta_a.append(deta)
        assa_a.append(assa)
        hota_a.append(float(np.sqrt(deta * assa)))
    return HotaReport(
        alphas=list(alphas),
        hota_per_alpha=hota_a,
        deta_per_alpha=deta_a,
        assa_per_alpha=assa_a,
    )


def write_report_json(path, clear: ClearReport | None, hota_report: HotaReport | None) -> None:
    payload: dict = {}
    if clear is not None:
        payload["clearmot"] = clear.as_dict()
    if hota_report is not None:
        payload["hota"] = hota_report.as_dict()
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_report_csv(path, rows: list[dict]) -> None:
    """One row per sequence plus any aggregate rows the caller includes."""
    if not rows:
        with open(path, "w") as fh:
            fh.write("")
        return
    keys: list[str] = []
    for row in rows:
        for k in row:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
