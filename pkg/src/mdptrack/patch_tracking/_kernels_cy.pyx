# Compiled twin of _kernels_py: same functions, same math, scalar loops.

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

cdef double _DET_EPS = 1e-12
cdef double _VAR_EPS = 1e-12


cdef inline double _bilinear1(const double[:, ::1] img, double x, double y) nogil:
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    if x < 0.0:
        x = 0.0
    elif x > w - 1.0:
        x = w - 1.0
    if y < 0.0:
        y = 0.0
    elif y > h - 1.0:
        y = h - 1.0
    cdef Py_ssize_t x0 = <Py_ssize_t>x
    cdef Py_ssize_t y0 = <Py_ssize_t>y
    if x0 > w - 2:
        x0 = w - 2
    if y0 > h - 2:
        y0 = h - 2
    cdef double fx = x - x0
    cdef double fy = y - y0
    return (
        img[y0, x0] * (1.0 - fx) * (1.0 - fy)
        + img[y0, x0 + 1] * fx * (1.0 - fy)
        + img[y0 + 1, x0] * (1.0 - fx) * fy
        + img[y0 + 1, x0 + 1] * fx * fy
    )


def lk_refine(
    double[:, ::1] src,
    double[:, ::1] gx,
    double[:, ::1] gy,
    double[:, ::1] dst,
    double[:, ::1] pts_src,
    double[:, ::1] pts_dst,
    int win,
    int max_iters,
    double eps,
):
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    cdef Py_ssize_t n = pts_src.shape[0]
    cdef int half = win // 2
    cdef Py_ssize_t k = <Py_ssize_t>win * win

    out = np.empty((n, 2), dtype=np.float64)
    ok = np.zeros(n, dtype=np.uint8)
    cdef double[:, ::1] out_v = out
    cdef cnp.uint8_t[::1] ok_v = ok

    buf = np.empty((3, k), dtype=np.float64)
    cdef double[:, ::1] bv = buf

    cdef Py_ssize_t i, j, r, c, it
    cdef double px, py, qx, qy, sx, sy
    cdef double g11, g12, g22, det
    cdef double b1, b2, d1, d2, diff
    cdef bint converged

    with nogil:
        for i in range(n):
            px = pts_src[i, 0]
            py = pts_src[i, 1]
            j = 0
            g11 = 0.0
            g12 = 0.0
            g22 = 0.0
            for r in range(win):
                for c in range(win):
                    sx = px + (c - half)
                    sy = py + (r - half)
                    bv[0, j] = _bilinear1(src, sx, sy)
                    bv[1, j] = _bilinear1(gx, sx, sy)
                    bv[2, j] = _bilinear1(gy, sx, sy)
                    g11 += bv[1, j] * bv[1, j]
                    g12 += bv[1, j] * bv[2, j]
                    g22 += bv[2, j] * bv[2, j]
                    j += 1
            det = g11 * g22 - g12 * g12
            qx = pts_dst[i, 0]
            qy = pts_dst[i, 1]
            if det <= _DET_EPS:
                out_v[i, 0] = qx
                out_v[i, 1] = qy
                ok_v[i] = 0
                continue
            converged = 0
            for it in range(max_iters):
                b1 = 0.0
                b2 = 0.0
                j = 0
                for r in range(win):
                    for c in range(win):
                        diff = bv[0, j] - _bilinear1(dst, qx + (c - half), qy + (r - half))
                        b1 += bv[1, j] * diff
                        b2 += bv[2, j] * diff
                        j += 1
                d1 = (g22 * b1 - g12 * b2) / det
                d2 = (g11 * b2 - g12 * b1) / det
                qx += d1
                qy += d2
                if sqrt(d1 * d1 + d2 * d2) < eps:
                    converged = 1
                    break
            out_v[i, 0] = qx
            out_v[i, 1] = qy
            if 0.0 <= qx <= w - 1.0 and 0.0 <= qy <= h - 1.0:
                ok_v[i] = 1
            else:
                ok_v[i] = 0

    return out, ok.astype(bool)


def point_ncc(
    double[:, ::1] src,
    double[:, ::1] dst,
    double[:, ::1] pts_src,
    double[:, ::1] pts_dst,
    int win,
):
    cdef Py_ssize_t n = pts_src.shape[0]
    cdef int half = win // 2
    cdef Py_ssize_t k = <Py_ssize_t>win * win

    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] out_v = out

    wa = np.empty(k, dtype=np.float64)
    wb = np.empty(k, dtype=np.float64)
    cdef double[::1] av = wa
    cdef double[::1] bvv = wb

    cdef Py_ssize_t i, j, r, c
    cdef double ma, mb, va, vb, cross, denom, ncc

    with nogil:
        for i in range(n):
            j = 0
            ma = 0.0
            mb = 0.0
            for r in range(win):
                for c in range(win):
                    av[j] = _bilinear1(src, pts_src[i, 0] + (c - half), pts_src[i, 1] + (r - half))
                    bvv[j] = _bilinear1(dst, pts_dst[i, 0] + (c - half), pts_dst[i, 1] + (r - half))
                    ma += av[j]
                    mb += bvv[j]
                    j += 1
            ma /= k
            mb /= k
            va = 0.0
            vb = 0.0
            cross = 0.0
            for j in range(k):
                va += (av[j] - ma) * (av[j] - ma)
                vb += (bvv[j] - mb) * (bvv[j] - mb)
                cross += (av[j] - ma) * (bvv[j] - mb)
            denom = sqrt(va * vb)
            if denom > _VAR_EPS:
                ncc = cross / denom
                if ncc > 1.0:
                    ncc = 1.0
                elif ncc < -1.0:
                    ncc = -1.0
                out_v[i] = ncc

    return out
