"""Benchmark the compiled LK kernels against the numpy fallback.

Usage:
    python benchmarks/bench_kernels.py [--repeats N]

Times one pyramid level of point refinement, per-point NCC, and the full
forward-backward track between two ROIs, for both backends.
"""

import argparse
import time

import numpy as np

from mdptrack.core import BoundingBox
from mdptrack.patch_tracking import _kernels_py
from mdptrack.patch_tracking.lk import LkParams, _blur5, fb_lk_track
from mdptrack.patch_tracking.roi import Patch, RoiParams, extract_roi

try:
    from mdptrack.patch_tracking import _kernels_cy

    BACKENDS = {"numpy": _kernels_py, "cython": _kernels_cy}
except ImportError:
    BACKENDS = {"numpy": _kernels_py}


def timeit(fn, repeats):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats * 1000.0


def make_level_inputs(n_points=100, shape=(300, 135), seed=0):
    rng = np.random.default_rng(seed)
    src = _blur5(_blur5(rng.random(shape)))
    dst = np.roll(src, (2, 1), axis=(0, 1))
    gy, gx = np.gradient(src)
    pts = np.column_stack(
        [rng.uniform(10, shape[1] - 10, n_points), rng.uniform(10, shape[0] - 10, n_points)]
    )
    return tuple(np.ascontiguousarray(a) for a in (src, gx, gy, dst, pts))


def make_patch_pair(seed=0):
    rng = np.random.default_rng(seed)
    img1 = _blur5(rng.random((400, 400)))
    img2 = np.roll(img1, (3, 2), axis=(0, 1))
    box = BoundingBox(150, 150, 45, 60)
    params = RoiParams()
    return extract_roi(img1, box, params, 1), extract_roi(img2, box, params, 2)


def fresh(patch):
    return Patch(patch.pixels, patch.frame, patch.box, patch.params)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=30)
    args = parser.parse_args()

    src, gx, gy, dst, pts = make_level_inputs()
    patch_a, patch_b = make_patch_pair()
    rows = []
    for name, impl in BACKENDS.items():
        t_refine = timeit(
            lambda: impl.lk_refine(src, gx, gy, dst, pts, pts.copy(), 7, 20, 0.01),
            args.repeats,
        )
        t_ncc = timeit(
            lambda: impl.point_ncc(src, dst, pts, pts + 1.5, 7), args.repeats
        )

        import mdptrack.patch_tracking._backend as backend_mod

        saved = (backend_mod.lk_refine, backend_mod.point_ncc, backend_mod.BACKEND)
        backend_mod.lk_refine = impl.lk_refine
        backend_mod.point_ncc = impl.point_ncc
        backend_mod.BACKEND = name
        try:
            t_fb_cold = timeit(
                lambda: fb_lk_track(fresh(patch_a), fresh(patch_b), params=LkParams()),
                args.repeats,
            )
            t_fb_warm = timeit(
                lambda: fb_lk_track(patch_a, patch_b, params=LkParams()), args.repeats
            )
        finally:
            backend_mod.lk_refine, backend_mod.point_ncc, backend_mod.BACKEND = saved
        rows.append((name, t_refine, t_ncc, t_fb_cold, t_fb_warm))

    header = f"{'backend':<8} {'lk_refine':>10} {'point_ncc':>10} {'fb_track':>10} {'fb_warm':>10}"
    print(header)
    print("-" * len(header))
    for name, a, b, c, d in rows:
        print(f"{name:<8} {a:>9.2f}ms {b:>9.2f}ms {c:>9.2f}ms {d:>9.2f}ms")
    if len(rows) == 2:
        base = {r[0]: r for r in rows}
        speedups = [
            base["numpy"][i] / base["cython"][i] for i in range(1, 5)
        ]
        print(
            "cython speedup: "
            + ", ".join(
                f"{label} x{s:.1f}"
                for label, s in zip(("refine", "ncc", "fb", "fb_warm"), speedups)
            )
        )


if __name__ == "__main__":
    main()
