"""Grayscale patch representation and pixel-level transforms.

Integer patches (:class:`IntensityPatch`) carry their bit depth so that
histograms are taken over the full representable range.  Float patches are
plain 2-D ``float64`` arrays, row-major, indexed ``[row, col]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidInputError(ValueError):
    """Raised when an image operation receives an unusable patch or size."""


@dataclass(frozen=True, eq=False)
class IntensityPatch:
    pixels: np.ndarray
    bit_depth: int = 8

    def __post_init__(self):
        if self.bit_depth not in (8, 16):
            raise InvalidInputError(f"bit_depth must be 8 or 16, got {self.bit_depth}")
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise InvalidInputError(f"pixels must be 2-D, got shape {px.shape}")
        if px.size and (px.min() < 0 or px.max() > self.max_value):
            raise InvalidInputError(
                f"pixel values must lie in [0, {self.max_value}] for {self.bit_depth}-bit"
            )
        dtype = np.uint8 if self.bit_depth == 8 else np.uint16
        object.__setattr__(self, "pixels", px.astype(dtype, copy=False))

    @property
    def max_value(self) -> int:
        return (1 << self.bit_depth) - 1

    @property
    def levels(self) -> int:
        return 1 << self.bit_depth

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other):
        if not isinstance(other, IntensityPatch):
            return NotImplemented
        return self.bit_depth == other.bit_depth and np.array_equal(self.pixels, other.pixels)

    def __repr__(self):
        return f"IntensityPatch({self.width}x{self.height}, {self.bit_depth}-bit)"


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def compute_histogram(patch: IntensityPatch) -> np.ndarray:
    """Return one count per representable intensity (``2**bit_depth`` bins)."""
    if patch.pixels.size == 0:
        raise InvalidInputError("cannot take the histogram of an empty patch")
    return np.bincount(patch.pixels.ravel(), minlength=patch.levels).astype(np.int64)


def equalize_histogram(patch: IntensityPatch) -> IntensityPatch:
    """Histogram-equalize ``patch`` at its native bit depth.

    Each intensity ``v`` maps to
    ``round((cdf(v) - cdf_min) / (N - cdf_min) * (L - 1))`` with
    ``cdf_min`` the smallest nonzero cumulative count. A constant patch has
    a zero denominator and is returned unchanged.
    """
    hist = compute_histogram(patch)
    cdf = np.cumsum(hist)
    n = patch.pixels.size
    cdf_min = cdf[np.flatnonzero(hist)[0]]
    if n == cdf_min:
        return patch
    # exact integer rounding, half away from zero (all numerators are >= 0)
    num = np.maximum(cdf - cdf_min, 0) * (patch.levels - 1)
    den = n - cdf_min
    lut = (2 * num + den) // (2 * den)
    return IntensityPatch(lut[patch.pixels].astype(patch.pixels.dtype), patch.bit_depth)


def _bilinear_weights(src: int, dst: int):
    coord = (np.arange(dst) + 0.5) * (src / dst) - 0.5
    coord = np.clip(coord, 0.0, src - 1)
    lo = np.floor(coord).astype(np.intp)
    hi = np.minimum(lo + 1, src - 1)
    frac = coord - lo
    return lo, hi, frac


def resize_bilinear(patch: np.ndarray, out_width: int, out_height: int) -> np.ndarray:
    """Bilinear resize with half-pixel-centre alignment.

    Source coordinates are ``(dst + 0.5) * src / dst - 0.5`` clamped to the
    valid range. Resizing to the current size returns an exact copy.
    """
    patch = np.asarray(patch, dtype=np.float64)
    if out_width < 1 or out_height < 1:
        raise InvalidInputError(f"output size must be >= 1, got {out_width}x{out_height}")
    if patch.ndim != 2 or patch.size == 0:
        raise InvalidInputError(f"expected a non-empty 2-D patch, got shape {patch.shape}")
    h, w = patch.shape
    if (h, w) == (out_height, out_width):
        return patch.copy()
    y0, y1, fy = _bilinear_weights(h, out_height)
    x0, x1, fx = _bilinear_weights(w, out_width)
    fy = fy[:, None]
    top = patch[y0][:, x0] * (1 - fx) + patch[y0][:, x1] * fx
    bottom = patch[y1][:, x0] * (1 - fx) + patch[y1][:, x1] * fx
    return top * (1 - fy) + bottom * fy


def normalize(patch: IntensityPatch) -> np.ndarray:
    """Scale intensities to [0, 1] by dividing by ``2**bit_depth - 1``."""
    return patch.pixels.astype(np.float64) / patch.max_value


def to_intensity(patch: np.ndarray, bit_depth: int = 8) -> IntensityPatch:
    """Quantize a [0, 1] float patch; out-of-range values are clamped first."""
    max_value = (1 << bit_depth) - 1
    values = np.clip(np.asarray(patch, dtype=np.float64), 0.0, 1.0) * max_value
    return IntensityPatch(_round_half_away(values), bit_depth)
