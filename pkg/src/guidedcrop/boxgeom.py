"""Axis-aligned box geometry for crop construction.

Coordinates are continuous: a box (x0, y0, x1, y1) spans the half-open pixel
ranges [x0, x1) by [y0, y1) once rounded at crop time.  All functions in this
module are pure and operate on floats; rounding to pixel indices happens in
the preprocessing layer, not here.

The placement rule shared by every square construction is clamp-shift: center
the interval, clamp the low edge at zero, then shift back so the high edge
does not pass the image border.  The high edge is assigned the image extent
exactly in the overflow branch so downstream bounds checks never see the
result exceed the image by a rounding ulp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidBoxError, InvalidParameterError, NoObjectError


@dataclass(frozen=True)
class ImageDims:
    """Integer pixel dimensions of an image."""

    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidParameterError(
                f"image dims must be positive, got {self.width}x{self.height}"
            )

    @property
    def short_side(self) -> int:
        return min(self.width, self.height)

    @property
    def area(self) -> float:
        return float(self.width) * float(self.height)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with continuous corner coordinates.

    Degenerate boxes (zero width or height) are legal values; they arise from
    single-pixel masks and are rejected only when someone tries to crop them.
    """

    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self):
        vals = (self.min_x, self.min_y, self.max_x, self.max_y)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidBoxError(f"non-finite box coordinates {vals}")
        if self.min_x > self.max_x or self.min_y > self.max_y:
            raise InvalidBoxError(f"inverted box {vals}")

    @property
    def width(self) -> float:
        return self.max_x - self.min_x

    @property
    def height(self) -> float:
        return self.max_y - self.min_y

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.min_x + self.max_x), 0.5 * (self.min_y + self.max_y))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.min_x, self.min_y, self.max_x, self.max_y)

    def contains(self, other: "Box", tol: float = 0.0) -> bool:
        """True when `other` lies inside this box, up to `tol` slack per edge."""
        return (
            other.min_x >= self.min_x - tol
            and other.min_y >= self.min_y - tol
            and other.max_x <= self.max_x + tol
            and other.max_y <= self.max_y + tol
        )

    def within(self, dims: ImageDims, tol: float = 0.0) -> bool:
        return (
            self.min_x >= -tol
            and self.min_y >= -tol
            and self.max_x <= dims.width + tol
            and self.max_y <= dims.height + tol
        )

    def intersection_area(self, other: "Box") -> float:
        w = min(self.max_x, other.max_x) - max(self.min_x, other.min_x)
        h = min(self.max_y, other.max_y) - max(self.min_y, other.min_y)
        if w <= 0.0 or h <= 0.0:
            return 0.0
        return w * h


def full_box(dims: ImageDims) -> Box:
    """The box covering the whole image."""
    return Box(0.0, 0.0, float(dims.width), float(dims.height))


def _place_interval(center: float, length: float, limit: float) -> tuple[float, float]:
    """Place an interval of `length` around `center` inside [0, limit].

    Clamp-shift: the interval is centered, pushed right if it underflows zero,
    then pushed left if it overflows the limit.  Requires length <= limit.
    The overflow branch pins the high edge to `limit` exactly.
    """
    lo = center - 0.5 * length
    if lo < 0.0:
        lo = 0.0
    hi = lo + length
    if hi > limit:
        hi = limit
        lo = limit - length
    return lo, hi


def square_adjust(box: Box, dims: ImageDims) -> Box:
    """Expand a box to a square of its long side, centered, shifted in-bounds.

    The square keeps the box center where possible; near a border it is
    shifted just enough to stay inside the image.  If even the image's short
    side cannot hold the square (a long thin box in a non-square image), the
    side is capped at the short side and the result spans that axis fully.

    Args:
        box: input box, must lie within the image.
        dims: image dimensions.

    Returns:
        A square box inside the image.  Already-square inputs are returned
        unchanged.
    """
    if not box.within(dims, tol=1e-9):
        raise InvalidBoxError(f"box {box.as_tuple()} exceeds image {dims}")
    w, h = box.width, box.height
    if w == h:
        return box
    side = min(max(w, h), float(dims.short_side))
    cx, cy = box.center
    x0, x1 = _place_interval(cx, side, float(dims.width))
    y0, y1 = _place_interval(cy, side, float(dims.height))
    return Box(x0, y0, x1, y1)


def enlarge_margin(box: Box, dims: ImageDims, alpha: float) -> Box:
    """Grow a square box toward the full-image square by margin ratio alpha.

    The side interpolates linearly between the box side (alpha=0) and the
    image's short side (alpha=1): side' = (1-alpha)*side + alpha*short.
    Growth is centered; overflow past a border is compensated by shifting
    toward the opposite edge.  alpha=0 returns the input box object itself
    and alpha=1 yields the short-side square bit-exactly.

    Args:
        box: square box within the image.
        dims: image dimensions.
        alpha: margin ratio in [0, 1].

    Returns:
        Enlarged square box inside the image, containing the input.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParameterError(f"alpha must be in [0, 1], got {alpha}")
    if not box.within(dims, tol=1e-9):
        raise InvalidBoxError(f"box {box.as_tuple()} exceeds image {dims}")
    side = box.width
    if not math.isclose(side, box.height, rel_tol=1e-6, abs_tol=1e-6):
        raise InvalidBoxError(
            f"margin enlargement needs a square box, got {side}x{box.height}"
        )
    if alpha == 0.0:
        return box
    short = float(dims.short_side)
    # the interpolation can overshoot `short` by an ulp when side == short
    target = min((1.0 - alpha) * side + alpha * short, short)
    cx, cy = box.center
    x0, x1 = _place_interval(cx, target, float(dims.width))
    y0, y1 = _place_interval(cy, target, float(dims.height))
    return Box(x0, y0, x1, y1)


def maug_ratios(n_aug: int) -> list[float]:
    """Evenly spaced margin ratios k/(n_aug-1) for k = 0..n_aug-1."""
    if n_aug < 2:
        raise InvalidParameterError(f"margin augmentation needs n_aug >= 2, got {n_aug}")
    return [k / (n_aug - 1) for k in range(n_aug)]


def maug_boxes(box: Box, dims: ImageDims, n_aug: int) -> list[Box]:
    """Margin-augmentation crop set: the box enlarged at each ratio.

    The first element is the input box itself (ratio 0) and the last spans
    the short-side square (ratio 1).  Consecutive boxes are nested.
    """
    return [enlarge_margin(box, dims, r) for r in maug_ratios(n_aug)]


def raug_boxes(
    dims: ImageDims,
    n_aug: int,
    beta: float,
    rng: int | np.random.Generator,
) -> list[Box]:
    """Random square crops with sides in [beta*short, short].

    For each crop the side is drawn first, then the x offset, then the y
    offset, all uniform; callers relying on reproducibility should pass a
    seed (or a generator they control) and keep that draw order in mind.

    Args:
        dims: image dimensions.
        n_aug: number of crops, >= 1.
        beta: lower bound on side as a fraction of the short side, in (0, 1).
        rng: integer seed or numpy Generator.

    Returns:
        List of n_aug square boxes inside the image.
    """
    if n_aug < 1:
        raise InvalidParameterError(f"n_aug must be >= 1, got {n_aug}")
    if not 0.0 < beta < 1.0:
        raise InvalidParameterError(f"beta must be in (0, 1), got {beta}")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    short = float(dims.short_side)
    w, h = float(dims.width), float(dims.height)
    out = []
    for _ in range(n_aug):
        side = rng.uniform(beta * short, short)
        x0 = rng.uniform(0.0, w - side)
        y0 = rng.uniform(0.0, h - side)
        # min() guards the border against one-ulp overshoot in x0 + side
        out.append(Box(x0, y0, min(x0 + side, w), min(y0 + side, h)))
    return out


def relative_object_size(box: Box, dims: ImageDims) -> float:
    """Box area divided by image area, in [0, 1] for in-bounds boxes."""
    return box.area / dims.area


def box_from_mask(mask: np.ndarray) -> Box:
    """Tight bounding box of the nonzero pixels of a 2D mask.

    Edges are pixel indices: a single labelled pixel at column x, row y gives
    the degenerate box (x, y, x, y).

    Raises:
        NoObjectError: the mask has no labelled pixels.
    """
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise InvalidParameterError(f"mask must be 2D, got shape {arr.shape}")
    ys, xs = np.nonzero(arr)
    if xs.size == 0:
        raise NoObjectError("mask contains no labelled pixels")
    return Box(float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max()))
