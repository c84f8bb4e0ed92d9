"""Pixel-space crop extraction and resizing.

Continuous box coordinates are rounded to pixel indices half-to-even at the
last possible moment, here.  Resizing is bilinear; a 4x4 checkerboard of 0
and 255 downsampled to 2x2 lands on 127.5 in every cell, which pins the
filter behavior tests rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from ..boxgeom import Box
from ..errors import InvalidCropError, InvalidParameterError


@dataclass(frozen=True)
class PreprocessSpec:
    """How crops become model inputs.

    norm_mean / norm_std are per-channel values applied after scaling pixels
    to [0, 1]; the identity defaults leave pixels untouched.
    """

    target_side: int = 224
    interpolation: str = "bilinear"
    norm_mean: tuple[float, ...] = (0.0, 0.0, 0.0)
    norm_std: tuple[float, ...] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.target_side < 1:
            raise InvalidParameterError(f"target_side must be >= 1, got {self.target_side}")
        if self.interpolation != "bilinear":
            raise InvalidParameterError(
                f"unsupported interpolation '{self.interpolation}'"
            )
        if any(s <= 0 for s in self.norm_std):
            raise InvalidParameterError("norm_std entries must be positive")


def round_box_to_pixels(box: Box, width: int, height: int) -> tuple[int, int, int, int]:
    """Round box edges half-to-even and clamp to the image grid.

    Returns (x0, y0, x1, y1) pixel indices with x1/y1 exclusive.

    Raises:
        InvalidCropError: the rounded box has no pixels.
    """
    x0 = max(0, min(width, round(box.min_x)))
    y0 = max(0, min(height, round(box.min_y)))
    x1 = max(0, min(width, round(box.max_x)))
    y1 = max(0, min(height, round(box.max_y)))
    if x1 <= x0 or y1 <= y0:
        raise InvalidCropError(
            f"box {box.as_tuple()} rounds to empty pixel region "
            f"({x0},{y0},{x1},{y1}) in {width}x{height}"
        )
    return x0, y0, x1, y1


def crop_resize(image: np.ndarray, box: Box, spec: PreprocessSpec) -> np.ndarray:
    """Extract a box from an image array and resize to the target square.

    Args:
        image: HxW or HxWxC array, any numeric dtype.
        box: continuous crop box.
        spec: target size and interpolation.

    Returns:
        float32 array of shape (target, target[, C]).  A crop that is already
        exactly the target size is passed through without resampling.
    """
    arr = np.asarray(image)
    if arr.ndim not in (2, 3):
        raise InvalidParameterError(f"image must be 2D or 3D, got shape {arr.shape}")
    h, w = arr.shape[:2]
    x0, y0, x1, y1 = round_box_to_pixels(box, w, h)
    crop = arr[y0:y1, x0:x1].astype(np.float32)
    side = spec.target_side
    if crop.shape[0] == side and crop.shape[1] == side:
        return crop.copy()
    return cv2.resize(crop, (side, side), interpolation=cv2.INTER_LINEAR)


def normalize_channels(pixels: np.ndarray, spec: PreprocessSpec) -> np.ndarray:
    """Scale uint8-range pixels to [0, 1] and apply channel normalization."""
    arr = np.asarray(pixels, dtype=np.float32) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    mean = np.asarray(spec.norm_mean, dtype=np.float32)
    std = np.asarray(spec.norm_std, dtype=np.float32)
    if arr.shape[2] != mean.size:
        raise InvalidParameterError(
            f"image has {arr.shape[2]} channels, normalization expects {mean.size}"
        )
    return (arr - mean) / std
