"""Score-map generation and the handcrafted feature extractors.

Score maps come from dense normalized cross-correlation of a template's
object region over a search patch; reliable tracking shows up as a single
concentrated peak, which the extractors below summarize into fixed-length
vectors.  The policy feature vectors (active: 6 entries, lost: 7 entries)
are also defined here so the linear models see stable dimensionality.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.signal import fftconvolve

from .core import BoundingBox, Detection
from .errors import ContractViolation
from .geometry import ImageExtent, center_distance, iou
from .patch_tracking.lk import TrackResult
from .patch_tracking.roi import Patch

logger = logging.getLogger(__name__)

ACTIVE_FEATURE_DIM = 6
LOST_FEATURE_DIM = 7

TOPK_DEFAULT_K = 10
TOPK_DEFAULT_RADIUS = 3


def ncc_dense(template: np.ndarray, search: np.ndarray) -> np.ndarray:
    """Dense NCC response of ``template`` slid over ``search``.

    Output shape is ``search - template + 1`` per axis, values in [-1, 1].
    A zero-variance template yields an all-zero map.
    """
    t = np.asarray(template, dtype=np.float64)
    s = np.asarray(search, dtype=np.float64)
    th, tw = t.shape
    sh, sw = s.shape
    if th > sh or tw > sw:
        raise ContractViolation(
            f"template {t.shape} must fit inside search {s.shape}"
        )
    out_shape = (sh - th + 1, sw - tw + 1)

    t = t - t.mean()
    t_energy = float((t * t).sum())
    if t_energy < 1e-12:
        logger.warning("zero-variance template: returning all-zero score map")
        return np.zeros(out_shape)

    ones = np.ones_like(t)
    cross = fftconvolve(s, t[::-1, ::-1], mode="valid")
    win_sum = fftconvolve(s, ones, mode="valid")
    win_sq = fftconvolve(s * s, ones, mode="valid")
    win_var = np.maximum(win_sq - win_sum * win_sum / t.size, 0.0)

    denom = np.sqrt(win_var * t_energy)
    out = np.zeros(out_shape)
    ok = denom > 1e-10
    out[ok] = cross[ok] / denom[ok]
    return np.clip(out, -1.0, 1.0)


def ncc_response(template: Patch, search: Patch) -> np.ndarray:
    """Score map of the template's central object region over the search ROI."""
    return ncc_dense(template.object_region(), search.pixels)


def rowcol_max(score_map: np.ndarray) -> np.ndarray:
    """Row maxima followed by column maxima; length = height + width."""
    m = np.asarray(score_map, dtype=np.float64)
    if m.size == 0:
        raise ContractViolation("score map is empty")
    return np.concatenate([m.max(axis=1), m.max(axis=0)])


def topk_nms(score_map: np.ndarray, k: int = TOPK_DEFAULT_K, radius: int = TOPK_DEFAULT_RADIUS) -> np.ndarray:
    """The k largest map values in descending order, with optional suppression.

    After accepting a value, all entries within Chebyshev distance ``radius``
    of it are suppressed.  The output is zero-padded when fewer values survive.
    """
    if k < 1:
        raise ContractViolation(f"k must be >= 1, got {k}")
    m = np.array(score_map, dtype=np.float64)
    if m.size == 0:
        raise ContractViolation("score map is empty")
    h, w = m.shape
    alive = np.ones_like(m, dtype=bool)
    out = np.zeros(k)
    for i in range(k):
        if not alive.any():
            break
        masked = np.where(alive, m, -np.inf)
        flat = int(np.argmax(masked))
        r, c = divmod(flat, w)
        out[i] = m[r, c]
        if radius > 0:
            alive[max(0, r - radius) : r + radius + 1, max(0, c - radius) : c + radius + 1] = False
        else:
            alive[r, c] = False
    return out


def ring_stats(score_map: np.ndarray, radii: list[float]) -> np.ndarray:
    """[mean, median, min, max] over concentric annuli around the map argmax.

    The first ring is the closed disc of radius ``radii[0]`` (it contains the
    peak itself); ring i covers distances in (radii[i-1], radii[i]].  Empty
    annuli emit zeros.  Radii must be strictly increasing.
    """
    if any(b <= a for a, b in zip(radii, radii[1:])) or not radii:
        raise ContractViolation(f"radii must be non-empty and strictly increasing, got {radii}")
    m = np.asarray(score_map, dtype=np.float64)
    if m.size == 0:
        raise ContractViolation("score map is empty")
    h, w = m.shape
    r0, c0 = divmod(int(np.argmax(m)), w)
    yy, xx = np.mgrid[0:h, 0:w]
    dist = np.hypot(xx - c0, yy - r0)

    out = []
    prev = 0.0
    for i, r in enumerate(radii):
        if i == 0:
            mask = dist <= r
        else:
            mask = (dist > prev) & (dist <= r)
        vals = m[mask]
        if vals.size:
            out.extend([vals.mean(), float(np.median(vals)), vals.min(), vals.max()])
        else:
            out.extend([0.0, 0.0, 0.0, 0.0])
        prev = r
    return np.asarray(out)


def active_features(det: Detection, img: ImageExtent) -> np.ndarray:
    """Shape/size/position features of a raw detection: length 6."""
    b = det.box
    return np.array(
        [
            b.x / img.width,
            b.y / img.height,
            b.w / img.width,
            b.h / img.height,
            b.w / b.h,
            det.confidence,
        ]
    )


def lost_features(
    summary: TrackResult,
    predicted: BoundingBox,
    det: Detection,
    img: ImageExtent,
) -> np.ndarray:
    """Appearance and geometry similarity between a lost target and a detection.

    Entries: tracking round-trip quality, window correlation, height and width
    ratios, overlap of the predicted box with the detection, center proximity,
    and the detection confidence.  Failed tracking zeroes the first two.
    """
    b = det.box
    if summary.success and summary.median_fb is not None:
        fb_term = float(np.exp(-summary.median_fb))
        ncc_term = summary.median_ncc if summary.median_ncc is not None else 0.0
    else:
        fb_term = 0.0
        ncc_term = 0.0
    return np.array(
        [
            fb_term,
            ncc_term,
            min(predicted.h, b.h) / max(predicted.h, b.h),
            min(predicted.w, b.w) / max(predicted.w, b.w),
            iou(predicted, b),
            float(np.exp(-center_distance(predicted, b) / img.diagonal)),
            det.confidence,
        ]
    )
