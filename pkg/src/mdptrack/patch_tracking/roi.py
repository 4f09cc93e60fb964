"""ROI extraction: anisotropic resampling of an object box plus border context."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import BoundingBox
from ..errors import ContractViolation
from ._kernels_py import _bilinear

# Luminance weights applied when a color raster shows up.
_LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class RoiParams:
    """Canonical ROI geometry.

    Defaults follow the tall-box tuning: a 45x60 object with 45 px of
    horizontal and 120 px of vertical border per side, for a 135x300 ROI.
    """

    object_w: int = 45
    object_h: int = 60
    border_x: int = 45
    border_y: int = 120

    def __post_init__(self):
        if min(self.object_w, self.object_h, self.border_x, self.border_y) <= 0:
            raise ContractViolation(f"ROI params must be positive, got {self}")

    @property
    def roi_w(self) -> int:
        return self.object_w + 2 * self.border_x

    @property
    def roi_h(self) -> int:
        return self.object_h + 2 * self.border_y

    @property
    def object_box(self) -> BoundingBox:
        """The object rectangle in ROI coordinates."""
        return BoundingBox(self.border_x, self.border_y, self.object_w, self.object_h)


@dataclass
class Patch:
    """A resampled ROI with the affine map back to image coordinates."""

    pixels: np.ndarray  # (roi_h, roi_w) float64 in [0, 1]
    frame: int
    box: BoundingBox  # source object box in image coordinates
    params: RoiParams

    @property
    def step(self) -> tuple[float, float]:
        """Image pixels per ROI pixel, per axis."""
        return (self.box.w / self.params.object_w, self.box.h / self.params.object_h)

    def object_region(self) -> np.ndarray:
        p = self.params
        return self.pixels[
            p.border_y : p.border_y + p.object_h, p.border_x : p.border_x + p.object_w
        ]

    def roi_box_to_image(self, roi_box: BoundingBox) -> BoundingBox:
        """Map a box given in ROI coordinates back into image coordinates."""
        sx, sy = self.step
        return BoundingBox(
            self.box.x + (roi_box.x - self.params.border_x) * sx,
            self.box.y + (roi_box.y - self.params.border_y) * sy,
            roi_box.w * sx,
            roi_box.h * sy,
        )


def to_grayscale(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        img = _LUMA[0] * img[..., 0] + _LUMA[1] * img[..., 1] + _LUMA[2] * img[..., 2]
    if img.ndim != 2 or img.size == 0:
        raise ContractViolation(f"expected a non-empty 2-D raster, got shape {img.shape}")
    return img


def extract_roi(frame_image: np.ndarray, box: BoundingBox, params: RoiParams, frame: int = 0) -> Patch:
    """Resample the box contents plus border context to the canonical ROI size.

    The object region maps to ``object_w x object_h`` via bilinear sampling;
    border context comes from the surrounding image, with edge replication
    where the ROI extends past the frame.
    """
    if box.w < 1.0 or box.h < 1.0:
        raise ContractViolation(f"box too small for ROI extraction: w={box.w} h={box.h}")
    img = to_grayscale(frame_image)

    sx = box.w / params.object_w
    sy = box.h / params.object_h
    us = np.arange(params.roi_w, dtype=np.float64)
    vs = np.arange(params.roi_h, dtype=np.float64)
    xs = box.x + (us + 0.5 - params.border_x) * sx - 0.5
    ys = box.y + (vs + 0.5 - params.border_y) * sy - 0.5
    gx, gy = np.meshgrid(xs, ys)
    pixels = _bilinear(img, gx, gy)
    return Patch(pixels=pixels, frame=frame, box=box, params=params)
