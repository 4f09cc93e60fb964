"""Shared helpers for the test suite."""

import numpy as np
import pytest

from mdptrack.core import BoundingBox, Detection, Target, TrackState
from mdptrack.simulate import _sample_norm_texture, _target_texture


def box(x, y, w, h):
    return BoundingBox(x, y, w, h)


def det(frame, x, y, w, h, conf=0.9):
    return Detection(frame=frame, box=BoundingBox(x, y, w, h), confidence=conf)


def make_target(tid=1, state=TrackState.TRACKED, points=(), streak=0, lost=0, gt_id=None):
    t = Target(id=tid, state=state, prev_state=state, gt_id=gt_id)
    t.tracked_streak = streak
    t.lost_duration = lost
    for frame, b in points:
        t.trajectory.append(
            __import__("mdptrack.core", fromlist=["TrajectoryPoint"]).TrajectoryPoint(
                frame, b, TrackState.TRACKED
            )
        )
    return t


def draw_textured_box(img, b, tid=3, seed=5):
    """Paint a rigid per-id texture into ``img`` at box ``b`` (in place)."""
    h, w = img.shape
    coarse, fine = _target_texture(seed, tid)
    x0, x1 = max(0, int(np.floor(b.x))), min(w, int(np.ceil(b.x + b.w)))
    y0, y1 = max(0, int(np.floor(b.y))), min(h, int(np.ceil(b.y + b.h)))
    if x1 <= x0 or y1 <= y0:
        return
    xs = np.arange(x0, x1) + 0.5
    ys = np.arange(y0, y1) + 0.5
    u = (xs - b.x) / b.w
    v = (ys - b.y) / b.h
    uu, vv = np.meshgrid(u, v)
    inside = (uu >= 0) & (uu < 1) & (vv >= 0) & (vv < 1)
    patch = _sample_norm_texture(coarse, uu, vv) + _sample_norm_texture(fine, uu, vv)
    region = img[y0:y1, x0:x1]
    region[inside] = np.clip(patch[inside], 0.0, 1.0)


def textured_frame_pair(b, dx, dy, size=(240, 240), seed=7, tid=3):
    """Two frames with one textured target, moved by (dx, dy) in the second."""
    rng = np.random.default_rng(seed)
    bg = np.clip(rng.normal(0.42, 0.035, size), 0.0, 1.0)
    img1 = bg.copy()
    img2 = bg.copy()
    draw_textured_box(img1, b, tid=tid, seed=seed)
    draw_textured_box(img2, b.translated(dx, dy), tid=tid, seed=seed)
    return img1, img2


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
