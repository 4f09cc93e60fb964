"""Pure-numpy kernels for point tracking: the fallback backend.

The compiled twin in ``_kernels_cy`` implements the same functions with the
same math; ``_backend`` picks whichever is importable at package load.
Intensity images are float64 2-D arrays, points are (N, 2) float64 arrays of
(x, y) array-index coordinates.
"""

from __future__ import annotations

import numpy as np

_DET_EPS = 1e-12
_VAR_EPS = 1e-12


def _bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample ``img`` at fractional coordinates with edge replication."""
    h, w = img.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.minimum(xs.astype(np.int64), w - 2)
    y0 = np.minimum(ys.astype(np.int64), h - 2)
    fx = xs - x0
    fy = ys - y0
    i00 = img[y0, x0]
    i01 = img[y0, x0 + 1]
    i10 = img[y0 + 1, x0]
    i11 = img[y0 + 1, x0 + 1]
    return (
        i00 * (1 - fx) * (1 - fy)
        + i01 * fx * (1 - fy)
        + i10 * (1 - fx) * fy
        + i11 * fx * fy
    )


def _window_offsets(win: int) -> tuple[np.ndarray, np.ndarray]:
    half = win // 2
    r = np.arange(win, dtype=np.float64) - half
    ox, oy = np.meshgrid(r, r)
    return ox.ravel(), oy.ravel()


def lk_refine(
    src: np.ndarray,
    gx: np.ndarray,
    gy: np.ndarray,
    dst: np.ndarray,
    pts_src: np.ndarray,
    pts_dst: np.ndarray,
    win: int,
    max_iters: int,
    eps: float,
) -> tuple[np.ndarray, np.ndarray]:
    """One pyramid level of iterative least-squares point refinement.

    ``gx``/``gy`` are the spatial gradients of ``src``.  Returns refined
    destination points and a per-point validity flag (False for degenerate
    windows or points that left the image).
    """
    h, w = src.shape
    n = pts_src.shape[0]
    ox, oy = _window_offsets(win)

    sx = pts_src[:, 0:1] + ox[None, :]
    sy = pts_src[:, 1:2] + oy[None, :]
    src_win = _bilinear(src, sx, sy)
    gxw = _bilinear(gx, sx, sy)
    gyw = _bilinear(gy, sx, sy)

    g11 = (gxw * gxw).sum(axis=1)
    g12 = (gxw * gyw).sum(axis=1)
    g22 = (gyw * gyw).sum(axis=1)
    det = g11 * g22 - g12 * g12
    status = det > _DET_EPS

    pts = pts_dst.astype(np.float64).copy()
    active = status.copy()
    for _ in range(max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        dx = pts[idx, 0:1] + ox[None, :]
        dy = pts[idx, 1:2] + oy[None, :]
        dst_win = _bilinear(dst, dx, dy)
        r = src_win[idx] - dst_win
        b1 = (gxw[idx] * r).sum(axis=1)
        b2 = (gyw[idx] * r).sum(axis=1)
        d1 = (g22[idx] * b1 - g12[idx] * b2) / det[idx]
        d2 = (g11[idx] * b2 - g12[idx] * b1) / det[idx]
        pts[idx, 0] += d1
        pts[idx, 1] += d2
        converged = np.hypot(d1, d2) < eps
        active[idx[converged]] = False

    inside = (
        (pts[:, 0] >= 0.0)
        & (pts[:, 0] <= w - 1.0)
        & (pts[:, 1] >= 0.0)
        & (pts[:, 1] <= h - 1.0)
    )
    return pts, status & inside


def point_ncc(
    src: np.ndarray,
    dst: np.ndarray,
    pts_src: np.ndarray,
    pts_dst: np.ndarray,
    win: int,
) -> np.ndarray:
    """Normalized cross-correlation of matched windows, one value per point."""
    ox, oy = _window_offsets(win)
    a = _bilinear(src, pts_src[:, 0:1] + ox[None, :], pts_src[:, 1:2] + oy[None, :])
    b = _bilinear(dst, pts_dst[:, 0:1] + ox[None, :], pts_dst[:, 1:2] + oy[None, :])
    a = a - a.mean(axis=1, keepdims=True)
    b = b - b.mean(axis=1, keepdims=True)
    va = (a * a).sum(axis=1)
    vb = (b * b).sum(axis=1)
    denom = np.sqrt(va * vb)
    out = np.zeros(len(denom))
    ok = denom > _VAR_EPS
    out[ok] = (a[ok] * b[ok]).sum(axis=1) / denom[ok]
    return np.clip(out, -1.0, 1.0)
