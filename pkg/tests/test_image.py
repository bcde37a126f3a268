from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rhe_bench.image import (
    IntensityPatch,
    InvalidInputError,
    compute_histogram,
    equalize_histogram,
    normalize,
    resize_bilinear,
    to_intensity,
)

from conftest import random_patch


def he_reference(pixels, bit_depth):
    """Exact-arithmetic per-pixel HE, written independently of the library."""
    flat = [int(v) for v in np.asarray(pixels).ravel()]
    n = len(flat)
    levels = 1 << bit_depth
    counts = {}
    for v in flat:
        counts[v] = counts.get(v, 0) + 1
    cdf, running = {}, 0
    for v in sorted(counts):
        running += counts[v]
        cdf[v] = running
    cdf_min = min(cdf.values())
    if n == cdf_min:
        return np.asarray(pixels).copy()
    out = []
    for v in flat:
        q = Fraction(cdf[v] - cdf_min, n - cdf_min) * (levels - 1)
        out.append(int(q + Fraction(1, 2)) if q >= 0 else -int(-q + Fraction(1, 2)))
    return np.array(out).reshape(np.asarray(pixels).shape)


def resize_reference(img, out_w, out_h):
    """Loop-based half-pixel bilinear resize."""
    img = np.asarray(img, dtype=float)
    h, w = img.shape
    out = np.zeros((out_h, out_w))
    for r in range(out_h):
        sy = min(max((r + 0.5) * h / out_h - 0.5, 0.0), h - 1)
        y0 = int(np.floor(sy))
        y1 = min(y0 + 1, h - 1)
        fy = sy - y0
        for c in range(out_w):
            sx = min(max((c + 0.5) * w / out_w - 0.5, 0.0), w - 1)
            x0 = int(np.floor(sx))
            x1 = min(x0 + 1, w - 1)
            fx = sx - x0
            top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
            bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
            out[r, c] = top * (1 - fy) + bot * fy
    return out


# -- IntensityPatch --------------------------------------------------------


def test_patch_rejects_out_of_range_and_bad_depth():
    with pytest.raises(InvalidInputError):
        IntensityPatch(np.array([[256]]), 8)
    with pytest.raises(InvalidInputError):
        IntensityPatch(np.array([[-1]]), 8)
    with pytest.raises(InvalidInputError):
        IntensityPatch(np.array([[1]]), 12)
    with pytest.raises(InvalidInputError):
        IntensityPatch(np.array([1, 2]), 8)


def test_patch_dimensions_and_dtype():
    p = IntensityPatch(np.arange(6).reshape(2, 3), 16)
    assert (p.width, p.height, p.levels, p.max_value) == (3, 2, 65536, 65535)
    assert p.pixels.dtype == np.uint16
    assert p.pixels.size == p.width * p.height


# -- compute_histogram -----------------------------------------------------


def test_histogram_constant():
    hist = compute_histogram(IntensityPatch(np.zeros((2, 2), int), 8))
    assert hist.shape == (256,)
    assert hist[0] == 4 and hist[1:].sum() == 0


def test_histogram_counts_by_hand():
    hist = compute_histogram(IntensityPatch(np.array([[52, 52], [154, 200]]), 8))
    assert {int(i): int(hist[i]) for i in np.flatnonzero(hist)} == {52: 2, 154: 1, 200: 1}


def test_histogram_distinct_values():
    hist = compute_histogram(IntensityPatch(np.array([[0, 128, 255]]), 8))
    assert {int(i): int(hist[i]) for i in np.flatnonzero(hist)} == {0: 1, 128: 1, 255: 1}


def test_histogram_empty_patch_rejected():
    with pytest.raises(InvalidInputError):
        compute_histogram(IntensityPatch(np.zeros((0, 3), int), 8))


@given(arrays(np.int64, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=st.integers(0, 65535)), st.sampled_from([8, 16]))
def test_histogram_conservation(pixels, depth):
    pixels = pixels % (1 << depth)
    hist = compute_histogram(IntensityPatch(pixels, depth))
    assert hist.size == 1 << depth
    assert hist.sum() == pixels.size


# -- equalize_histogram ----------------------------------------------------


def test_equalize_worked_example():
    out = equalize_histogram(IntensityPatch(np.array([[52, 52], [154, 200]]), 8))
    assert out.pixels.tolist() == [[0, 0], [128, 255]]


def test_equalize_constant_passthrough():
    p = IntensityPatch(np.full((2, 2), 7), 8)
    assert equalize_histogram(p).pixels.tolist() == [[7, 7], [7, 7]]


def test_equalize_uniform_ramp_is_fixed_point():
    p = IntensityPatch(np.array([[0, 85, 170, 255]]), 8)
    assert equalize_histogram(p).pixels.tolist() == [[0, 85, 170, 255]]


def test_equalize_keeps_shape_and_depth():
    p = IntensityPatch(np.array([[1, 2, 3], [4, 5, 6]]), 16)
    out = equalize_histogram(p)
    assert out.pixels.shape == (2, 3) and out.bit_depth == 16


@pytest.mark.parametrize("depth", [8, 16])
def test_equalize_matches_exact_reference(depth):
    gen = np.random.default_rng(depth)
    for _ in range(200):
        p = random_patch(gen, depth)
        np.testing.assert_array_equal(equalize_histogram(p).pixels, he_reference(p.pixels, depth))


@given(arrays(np.uint8, st.tuples(st.integers(1, 10), st.integers(1, 10))))
def test_equalize_monotone_and_range(pixels):
    p = IntensityPatch(pixels, 8)
    out = equalize_histogram(p).pixels.astype(int).ravel()
    src = pixels.astype(int).ravel()
    order = np.argsort(src, kind="stable")
    assert np.all(np.diff(out[order]) >= 0)
    if src.min() != src.max():
        assert out[src == src.min()].max() == 0
        assert out[src == src.max()].min() == 255


# -- resize_bilinear -------------------------------------------------------


def test_resize_same_size_is_exact_copy():
    img = np.random.default_rng(0).random((5, 7))
    out = resize_bilinear(img, 7, 5)
    np.testing.assert_array_equal(out, img)
    assert out is not img


def test_resize_half_pixel_example():
    np.testing.assert_allclose(resize_bilinear(np.array([[0.0, 255.0]]), 3, 1), [[0.0, 127.5, 255.0]])


def test_resize_constant():
    np.testing.assert_allclose(resize_bilinear(np.full((2, 2), 0.3), 4, 4), np.full((4, 4), 0.3), atol=1e-15)


def test_resize_zero_dimension_rejected():
    with pytest.raises(InvalidInputError):
        resize_bilinear(np.ones((2, 2)), 0, 3)


@pytest.mark.parametrize("shape,out", [((3, 5), (7, 2)), ((8, 8), (3, 3)), ((1, 4), (9, 6)), ((6, 2), (2, 11))])
def test_resize_matches_loop_reference(shape, out):
    img = np.random.default_rng(1).random(shape)
    np.testing.assert_allclose(resize_bilinear(img, *out), resize_reference(img, *out), atol=1e-12)


def test_resize_commutes_with_flip():
    img = np.random.default_rng(2).random((5, 9))
    a = resize_bilinear(img[:, ::-1], 13, 4)
    b = resize_bilinear(img, 13, 4)[:, ::-1]
    np.testing.assert_allclose(a, b, atol=1e-12)


# -- normalize / to_intensity ----------------------------------------------


def test_normalize_examples():
    np.testing.assert_array_equal(normalize(IntensityPatch(np.array([[0, 255]]), 8)), [[0.0, 1.0]])
    np.testing.assert_allclose(normalize(IntensityPatch(np.array([[51]]), 8)), [[0.2]])
    np.testing.assert_array_equal(normalize(IntensityPatch(np.array([[65535]]), 16)), [[1.0]])


def test_to_intensity_examples():
    assert to_intensity(np.array([[0.0, 1.0]]), 8).pixels.tolist() == [[0, 255]]
    assert to_intensity(np.array([[0.5]]), 8).pixels.tolist() == [[128]]
    assert to_intensity(np.array([[-0.1]]), 8).pixels.tolist() == [[0]]
    assert to_intensity(np.array([[1.7]]), 8).pixels.tolist() == [[255]]


@given(arrays(np.uint8, st.tuples(st.integers(1, 16), st.integers(1, 16))))
def test_normalize_round_trip_8bit(pixels):
    p = IntensityPatch(pixels, 8)
    img = normalize(p)
    assert img.min() >= 0.0 and img.max() <= 1.0
    np.testing.assert_array_equal(to_intensity(img, 8).pixels, pixels)
