"""Kernel backend selection: compiled extension when available, numpy otherwise.

Set MDPTRACK_PURE_KERNELS=1 to force the numpy fallback (used by the
benchmark and the cross-backend tests).
"""

from __future__ import annotations

import os

from . import _kernels_py

_force_pure = os.environ.get("MDPTRACK_PURE_KERNELS", "0") not in ("", "0")

if _force_pure:
    _impl = _kernels_py
    BACKEND = "numpy"
else:
    try:
        from . import _kernels_cy as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "numpy"

lk_refine = _impl.lk_refine
point_ncc = _impl.point_ncc
