"""Pyramidal forward-backward point tracking between two ROI patches."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import BoundingBox
from . import _backend
from .roi import Patch


@dataclass(frozen=True)
class LkParams:
    levels: int = 3
    grid_size: int = 10
    window: int = 7
    max_iters: int = 20
    eps: float = 0.01  # convergence threshold on the per-iteration update, px
    fb_threshold: float = 2.0  # ROI px
    min_valid_fraction: float = 0.5


@dataclass
class TrackResult:
    """Outcome of tracking one template against one candidate patch."""

    success: bool
    flows: np.ndarray | None = None  # (N, 2) forward flow per grid point
    fb_errors: np.ndarray | None = None  # (N,) round-trip error, inf where lost
    ncc: np.ndarray | None = None  # (N,) per-point window correlation
    valid: np.ndarray | None = field(default=None, repr=False)
    box: BoundingBox | None = None  # predicted box in destination ROI coords
    median_fb: float | None = None
    median_ncc: float | None = None
    box_in_image: BoundingBox | None = None  # filled in by the tracker layer

    @property
    def measured_success(self) -> bool:
        """Success backed by actual flow evidence.

        The detection-only tracker reports vacuous success with no error
        measurements; oracle decisions and training labels must not count
        that as tracking evidence.
        """
        return self.success and self.median_fb is not None


def failed_result() -> TrackResult:
    return TrackResult(success=False)


def default_grid(patch_params, lk_params: LkParams) -> np.ndarray:
    """Point lattice over the central object region, inset for the window."""
    margin = lk_params.window // 2 + 1
    p = patch_params
    xs = np.linspace(p.border_x + margin, p.border_x + p.object_w - 1 - margin, lk_params.grid_size)
    ys = np.linspace(p.border_y + margin, p.border_y + p.object_h - 1 - margin, lk_params.grid_size)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


_PYR_TAPS = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def _blur5(img: np.ndarray) -> np.ndarray:
    padded = np.pad(img, 2, mode="edge")
    h = np.zeros((padded.shape[0], img.shape[1]))
    for i, t in enumerate(_PYR_TAPS):
        h += t * padded[:, i : i + img.shape[1]]
    out = np.zeros(img.shape)
    for i, t in enumerate(_PYR_TAPS):
        out += t * h[i : i + img.shape[0], :]
    return out


def build_pyramid(img: np.ndarray, levels: int) -> list[np.ndarray]:
    """Gaussian-ish pyramid: 5-tap [1,4,6,4,1]/16 blur then decimation by 2."""
    out = [np.ascontiguousarray(img, dtype=np.float64)]
    for _ in range(1, levels):
        prev = out[-1]
        if min(prev.shape) < 8:
            break
        out.append(np.ascontiguousarray(_blur5(prev)[::2, ::2]))
    return out


def _gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gy, gx = np.gradient(img)
    return np.ascontiguousarray(gx), np.ascontiguousarray(gy)


def _pyramid_with_grads(img: np.ndarray, levels: int):
    pyr = build_pyramid(img, levels)
    return [(lvl, *_gradients(lvl)) for lvl in pyr]


def _patch_levels(patch: Patch, levels: int):
    """Pyramid + gradients for a patch, cached on the instance."""
    cache = getattr(patch, "_lk_cache", None)
    if cache is None or cache[0] != levels:
        cache = (levels, _pyramid_with_grads(patch.pixels, levels))
        patch._lk_cache = cache  # type: ignore[attr-defined]
    return cache[1]


def _track_points_pyr(src_levels, dst_levels, pts: np.ndarray, params: LkParams):
    levels = min(len(src_levels), len(dst_levels))
    scale = 2.0 ** (levels - 1)
    cur_src = np.ascontiguousarray(pts / scale)
    cur_dst = cur_src.copy()
    status = np.ones(len(pts), dtype=bool)
    for lvl in range(levels - 1, -1, -1):
        s, gx, gy = src_levels[lvl]
        d, _, _ = dst_levels[lvl]
        cur_dst, ok = _backend.lk_refine(
            s, gx, gy, d, cur_src, np.ascontiguousarray(cur_dst),
            params.window, params.max_iters, params.eps,
        )
        status &= np.asarray(ok, dtype=bool)
        if lvl > 0:
            cur_src = np.ascontiguousarray(cur_src * 2.0)
            cur_dst = np.ascontiguousarray(np.asarray(cur_dst) * 2.0)
    return np.asarray(cur_dst), status


def track_points(
    src: np.ndarray, dst: np.ndarray, pts: np.ndarray, params: LkParams
) -> tuple[np.ndarray, np.ndarray]:
    """Track points src -> dst through the pyramid; returns (endpoints, status)."""
    return _track_points_pyr(
        _pyramid_with_grads(src, params.levels),
        _pyramid_with_grads(dst, params.levels),
        pts,
        params,
    )


def _median_flow_box(
    object_box: BoundingBox, pts: np.ndarray, endpoints: np.ndarray, valid: np.ndarray
) -> BoundingBox | None:
    idx = np.flatnonzero(valid)
    if idx.size == 0:
        return None
    flow = endpoints[idx] - pts[idx]
    dx = float(np.median(flow[:, 0]))
    dy = float(np.median(flow[:, 1]))
    scale = 1.0
    if idx.size >= 2:
        a = pts[idx]
        b = endpoints[idx]
        ii, jj = np.triu_indices(idx.size, k=1)
        d0 = np.hypot(a[ii, 0] - a[jj, 0], a[ii, 1] - a[jj, 1])
        d1 = np.hypot(b[ii, 0] - b[jj, 0], b[ii, 1] - b[jj, 1])
        keep = d0 > 1e-9
        if keep.any():
            scale = float(np.median(d1[keep] / d0[keep]))
    scale = min(max(scale, 0.25), 4.0)
    return object_box.translated(dx, dy).scaled_about_center(scale)


def fb_lk_track(
    src: Patch, dst: Patch, grid: np.ndarray | None = None, params: LkParams | None = None
) -> TrackResult:
    """Forward-backward tracking of the object-region lattice between two ROIs.

    Success requires the median round-trip error to stay under
    ``fb_threshold`` with at least half the points surviving.  The predicted
    box is the object rectangle moved by the median flow and rescaled by the
    median pairwise-distance ratio of the surviving points.
    """
    params = params or LkParams()
    if src.pixels.shape != dst.pixels.shape:
        from ..errors import ContractViolation

        raise ContractViolation(
            f"patch shapes differ: {src.pixels.shape} vs {dst.pixels.shape}"
        )
    pts = default_grid(src.params, params) if grid is None else np.asarray(grid, dtype=np.float64)
    n = len(pts)

    src_levels = _patch_levels(src, params.levels)
    dst_levels = _patch_levels(dst, params.levels)
    fwd, st_f = _track_points_pyr(src_levels, dst_levels, pts, params)
    back, st_b = _track_points_pyr(dst_levels, src_levels, fwd, params)

    fb = np.full(n, np.inf)
    ok = st_f & st_b
    fb[ok] = np.hypot(back[ok, 0] - pts[ok, 0], back[ok, 1] - pts[ok, 1])

    ncc = np.zeros(n)
    if ok.any():
        ncc[ok] = _backend.point_ncc(
            np.ascontiguousarray(src.pixels),
            np.ascontiguousarray(dst.pixels),
            np.ascontiguousarray(pts[ok]),
            np.ascontiguousarray(fwd[ok]),
            params.window,
        )

    valid = ok & (fb < params.fb_threshold)
    median_fb = float(np.median(fb))
    n_valid = int(valid.sum())
    success = bool(
        np.isfinite(median_fb)
        and median_fb < params.fb_threshold
        and n_valid >= int(np.ceil(params.min_valid_fraction * n))
    )

    box = _median_flow_box(src.params.object_box, pts, fwd, valid) if success else None
    median_ncc = float(np.median(ncc[valid])) if n_valid else None
    return TrackResult(
        success=success,
        flows=fwd - pts,
        fb_errors=fb,
        ncc=ncc,
        valid=valid,
        box=box,
        median_fb=median_fb if np.isfinite(median_fb) else None,
        median_ncc=median_ncc,
    )
