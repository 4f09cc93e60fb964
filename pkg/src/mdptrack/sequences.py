"""Sequence bundles: one directory of gt/detections/frames plus metadata."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ContractViolation
from .formats import (
    DetectionSet,
    GtTrackSet,
    parse_detections,
    parse_gt,
    read_provenance,
)
from .geometry import ImageExtent
from .patch_tracking.frames import PgmDirFrames


@dataclass
class SequenceBundle:
    name: str
    img: ImageExtent
    frame_count: int
    dets: DetectionSet
    gt: GtTrackSet | None = None
    frames_dir: Path | None = None

    def frames_source(self):
        if self.frames_dir is not None and self.frames_dir.is_dir():
            return PgmDirFrames(self.frames_dir)
        return None


def load_sequence(directory: str | Path, name: str | None = None) -> SequenceBundle:
    """Load a sequence directory (gt.txt, det.txt, scenario.json, frames/).

    The provenance sidecar is attached when present so oracle policies stay
    exact.  Image extent and frame count come from scenario.json when
    available, otherwise from the data itself.
    """
    d = Path(directory)
    det_path = d / "det.txt"
    if not det_path.exists():
        raise ContractViolation(f"{d}: no det.txt found")
    dets = parse_detections(det_path)
    prov = d / "provenance.csv"
    if prov.exists():
        read_provenance(dets, prov)

    gt = None
    gt_path = d / "gt.txt"
    if gt_path.exists():
        gt = parse_gt(gt_path)

    width = height = None
    frame_count = None
    meta = d / "scenario.json"
    if meta.exists():
        with open(meta) as fh:
            echo = json.load(fh)
        sc = echo.get("scenario", {})
        width, height = sc.get("width"), sc.get("height")
        frame_count = sc.get("frame_count")
    if width is None or height is None:
        boxes = [dd.box for dd in dets.detections]
        if gt is not None:
            boxes += [e.box for en in gt.tracks.values() for e in en]
        width = int(max((b.x + b.w for b in boxes), default=640)) + 1
        height = int(max((b.y + b.h for b in boxes), default=480)) + 1
    if frame_count is None:
        frame_count = max(
            max((dd.frame for dd in dets.detections), default=0),
            max(gt.frames(), default=0) if gt is not None else 0,
        )
    frames_dir = d / "frames"
    return SequenceBundle(
        name=name or d.name,
        img=ImageExtent(int(width), int(height)),
        frame_count=int(frame_count),
        dets=dets,
        gt=gt,
        frames_dir=frames_dir if frames_dir.is_dir() else None,
    )


@dataclass
class Dataset:
    train: list[SequenceBundle]
    test: list[SequenceBundle]


def load_dataset(root: str | Path) -> Dataset:
    """train/ and test/ subdirectories of sequences; with neither present a
    single sequence (or flat set of sequences) serves both roles."""
    root = Path(root)
    train_dir, test_dir = root / "train", root / "test"

    def load_all(d: Path) -> list[SequenceBundle]:
        if (d / "det.txt").exists():
            return [load_sequence(d)]
        seqs = [load_sequence(s) for s in sorted(d.iterdir()) if (s / "det.txt").exists()]
        if not seqs:
            raise ContractViolation(f"{d}: no sequences found")
        return seqs

    if train_dir.is_dir() or test_dir.is_dir():
        train = load_all(train_dir) if train_dir.is_dir() else []
        test = load_all(test_dir) if test_dir.is_dir() else train
        if not train:
            train = test
        return Dataset(train=train, test=test)
    seqs = load_all(root)
    return Dataset(train=seqs, test=seqs)
