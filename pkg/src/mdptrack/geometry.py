"""Box arithmetic: overlap, image containment, and synthetic box jittering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BoundingBox
from .errors import ContractViolation

# Rejection-sampler proposal distribution for synthesize_boxes.
_SHIFT_FRAC = 0.6
_SCALE_LO, _SCALE_HI = 0.6, 1.6
_MAX_ATTEMPTS = 100


@dataclass(frozen=True)
class ImageExtent:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ContractViolation(f"image extent must be >= 1x1, got {self}")

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.width, self.height))


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes; 0 when disjoint."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def inside_fraction(box: BoundingBox, img: ImageExtent) -> float:
    """Fraction of the box area lying inside the image rectangle."""
    ix = min(box.x + box.w, img.width) - max(box.x, 0.0)
    iy = min(box.y + box.h, img.height) - max(box.y, 0.0)
    if ix <= 0 or iy <= 0:
        return 0.0
    return (ix * iy) / box.area


def center_distance(a: BoundingBox, b: BoundingBox) -> float:
    return float(np.hypot(a.cx - b.cx, a.cy - b.cy))


def synthesize_boxes(
    anchor: BoundingBox,
    others: list[BoundingBox],
    existing_synth: list[BoundingBox],
    label: str,
    count: int,
    rng: int | np.random.Generator,
) -> list[BoundingBox]:
    """Jittered copies of ``anchor`` for class-imbalance correction.

    Rejection sampling against IOU windows: a negative box must overlap the
    anchor loosely (0.1..0.3) and stay clear of other real boxes (< 0.3); a
    positive box must overlap the anchor well (0.5..0.8) without exceeding 0.8
    against other real boxes.  Either kind must overlap previously accepted
    synthetic boxes by < 0.5.  May return fewer than ``count`` in crowded
    neighbourhoods.
    """
    if label not in ("positive", "negative"):
        raise ContractViolation(f"label must be positive|negative, got {label!r}")
    if count < 0:
        raise ContractViolation(f"count must be >= 0, got {count}")
    gen = np.random.default_rng(rng)
    if label == "positive":
        anchor_lo, anchor_hi, other_max = 0.5, 0.8, 0.8
    else:
        anchor_lo, anchor_hi, other_max = 0.1, 0.3, 0.3

    accepted: list[BoundingBox] = []
    synth_pool = list(existing_synth)
    for _ in range(count):
        for _ in range(_MAX_ATTEMPTS):
            dx = gen.uniform(-_SHIFT_FRAC, _SHIFT_FRAC) * anchor.w
            dy = gen.uniform(-_SHIFT_FRAC, _SHIFT_FRAC) * anchor.h
            sx = float(np.exp(gen.uniform(np.log(_SCALE_LO), np.log(_SCALE_HI))))
            sy = float(np.exp(gen.uniform(np.log(_SCALE_LO), np.log(_SCALE_HI))))
            cand = BoundingBox(
                anchor.cx + dx - anchor.w * sx / 2.0,
                anchor.cy + dy - anchor.h * sy / 2.0,
                anchor.w * sx,
                anchor.h * sy,
            )
            a_iou = iou(cand, anchor)
            if not anchor_lo < a_iou < anchor_hi:
                continue
            if any(iou(cand, o) >= other_max for o in others):
                continue
            if any(iou(cand, s) >= 0.5 for s in synth_pool):
                continue
            accepted.append(cand)
            synth_pool.append(cand)
            break
    return accepted
