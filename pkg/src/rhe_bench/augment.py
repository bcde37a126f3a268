"""Seeded augmentation pipeline with random histogram equalization (RHE).

Every transform takes an explicit :class:`RandomStream` and consumes a fixed
number of draws per call, so an identical seed replays an identical run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .image import IntensityPatch, equalize_histogram, normalize, resize_bilinear


class RandomStream:
    """Single-owner wrapper around a PCG64 generator.

    ``draws`` counts primitive draws taken from the stream. Do not share one
    stream between threads; use :meth:`derive` to get independent streams.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))
        self.draws = 0

    def derive(self, index: int) -> "RandomStream":
        return RandomStream(self.seed ^ int(index))

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        self.draws += 1
        return float(self._gen.uniform(low, high))

    def bernoulli(self, p: float) -> bool:
        # always one draw, so p=0 and p=1 keep the stream aligned with 0<p<1
        return self.uniform() < p

    def integers(self, low: int, high: int) -> int:
        """Uniform integer in ``[low, high)``."""
        self.draws += 1
        return int(self._gen.integers(low, high))

    def permutation(self, n: int) -> np.ndarray:
        self.draws += 1
        return self._gen.permutation(n)

    def generator(self) -> np.random.Generator:
        """Expose the underlying generator for bulk sampling (counts as one draw)."""
        self.draws += 1
        return self._gen


def _check_prob(name, p):
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {p}")


def _check_range(name, pair):
    lo, hi = pair
    if not (0 < lo <= hi):
        raise ValueError(f"{name} must be an ordered pair of positive values, got {pair}")


@dataclass
class AugmentationConfig:
    p_rhe: float = 0.0
    p_hflip: float = 0.5
    p_vflip: float = 0.5
    p_rotate: float = 0.5
    rotate_max_degrees: float = 25.0
    p_erase: float = 0.1
    erase_area_range: tuple[float, float] = (0.02, 0.2)
    erase_aspect_range: tuple[float, float] = (0.3, 3.3)
    target_size: int = 224

    def __post_init__(self):
        self.erase_area_range = tuple(self.erase_area_range)
        self.erase_aspect_range = tuple(self.erase_aspect_range)
        for name in ("p_rhe", "p_hflip", "p_vflip", "p_rotate", "p_erase"):
            _check_prob(name, getattr(self, name))
        _check_range("erase_area_range", self.erase_area_range)
        _check_range("erase_aspect_range", self.erase_aspect_range)
        if self.rotate_max_degrees < 0:
            raise ValueError("rotate_max_degrees must be >= 0")
        if self.target_size < 1:
            raise ValueError("target_size must be >= 1")


@dataclass
class AugmentStats:
    """Draw accounting for one run; ``rhe_applied`` counts equalized items."""

    items: int = 0
    rhe_applied: int = 0


def random_histogram_equalization(
    patch: IntensityPatch, p_rhe: float, rng: RandomStream, stats: AugmentStats | None = None
) -> IntensityPatch:
    _check_prob("p_rhe", p_rhe)
    if rng.bernoulli(p_rhe):
        if stats is not None:
            stats.rhe_applied += 1
        return equalize_histogram(patch)
    return patch


def _flip(patch, axis):
    if isinstance(patch, IntensityPatch):
        return IntensityPatch(np.flip(patch.pixels, axis=axis).copy(), patch.bit_depth)
    return np.flip(patch, axis=axis).copy()


def random_horizontal_flip(patch, p: float, rng: RandomStream):
    """Mirror columns with probability ``p``."""
    _check_prob("p", p)
    return _flip(patch, 1) if rng.bernoulli(p) else patch


def random_vertical_flip(patch, p: float, rng: RandomStream):
    """Mirror rows with probability ``p``."""
    _check_prob("p", p)
    return _flip(patch, 0) if rng.bernoulli(p) else patch


def rotate(patch: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate about the image centre with bilinear resampling and zero fill.

    Positive angles turn the image clockwise as displayed (row 0 on top).

    Neighbours falling outside the image contribute 0, so only pixels whose
    four source neighbours are all in bounds reproduce interior values.
    """
    patch = np.asarray(patch, dtype=np.float64)
    if degrees == 0.0:
        return patch.copy()
    h, w = patch.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = math.radians(degrees)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    # inverse map: output pixel -> source location
    sx = cos_t * dx + sin_t * dy + cx
    sy = -sin_t * dx + cos_t * dy + cy
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    fx, fy = sx - x0, sy - y0

    def tap(yi, xi):
        valid = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
        out = np.zeros_like(sx)
        out[valid] = patch[yi[valid], xi[valid]]
        return out

    return (
        tap(y0, x0) * (1 - fx) * (1 - fy)
        + tap(y0, x0 + 1) * fx * (1 - fy)
        + tap(y0 + 1, x0) * (1 - fx) * fy
        + tap(y0 + 1, x0 + 1) * fx * fy
    )


def random_rotation(patch: np.ndarray, p: float, max_degrees: float, rng: RandomStream) -> np.ndarray:
    _check_prob("p", p)
    if max_degrees < 0:
        raise ValueError("max_degrees must be >= 0")
    if not rng.bernoulli(p):
        return patch
    return rotate(patch, rng.uniform(-max_degrees, max_degrees))


def random_erasing(
    patch: np.ndarray,
    p: float,
    area_range: tuple[float, float],
    aspect_range: tuple[float, float],
    rng: RandomStream,
    max_attempts: int = 10,
) -> np.ndarray:
    """Zero out one random rectangle with probability ``p``.

    Area fraction is uniform in ``area_range``, aspect ratio (height/width)
    log-uniform in ``aspect_range``. A sample is rejected when the rounded
    rectangle does not fit or its realised area leaves ``area_range``; after
    ``max_attempts`` rejections the patch is returned unchanged.
    """
    _check_prob("p", p)
    _check_range("area_range", area_range)
    _check_range("aspect_range", aspect_range)
    patch = np.asarray(patch, dtype=np.float64)
    h, w = patch.shape
    if h * w <= 1:
        raise ValueError("random_erasing needs a patch larger than 1x1")
    if not rng.bernoulli(p):
        return patch
    total = h * w
    log_lo, log_hi = math.log(aspect_range[0]), math.log(aspect_range[1])
    for _ in range(max_attempts):
        area = total * rng.uniform(*area_range)
        aspect = math.exp(rng.uniform(log_lo, log_hi))
        eh = int(round(math.sqrt(area * aspect)))
        ew = int(round(math.sqrt(area / aspect)))
        if not (1 <= eh <= h and 1 <= ew <= w):
            continue
        if not area_range[0] <= eh * ew / total <= area_range[1]:
            continue
        top = rng.integers(0, h - eh + 1)
        left = rng.integers(0, w - ew + 1)
        out = patch.copy()
        out[top : top + eh, left : left + ew] = 0.0
        return out
    return patch


def apply_pipeline(
    patch: IntensityPatch,
    cfg: AugmentationConfig,
    rng: RandomStream | None,
    training: bool,
    stats: AugmentStats | None = None,
) -> np.ndarray:
    """Turn a raw patch into a ``target_size`` square float patch in [0, 1].

    Training order: RHE, horizontal flip, vertical flip, normalize, rotation,
    resize, erasing. Evaluation applies HE only when ``p_rhe == 1`` and then
    normalizes and resizes; ``rng`` is unused in that mode.
    """
    size = cfg.target_size
    if not training:
        if cfg.p_rhe == 1.0:
            patch = equalize_histogram(patch)
            if stats is not None:
                stats.rhe_applied += 1
        if stats is not None:
            stats.items += 1
        return resize_bilinear(normalize(patch), size, size)

    patch = random_histogram_equalization(patch, cfg.p_rhe, rng, stats)
    patch = random_horizontal_flip(patch, cfg.p_hflip, rng)
    patch = random_vertical_flip(patch, cfg.p_vflip, rng)
    img = normalize(patch)
    img = random_rotation(img, cfg.p_rotate, cfg.rotate_max_degrees, rng)
    img = resize_bilinear(img, size, size)
    img = random_erasing(img, cfg.p_erase, cfg.erase_area_range, cfg.erase_aspect_range, rng)
    if stats is not None:
        stats.items += 1
    return img
