import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sharma_pairs import SHARMA_PAIRS
from tone_audit.colorspace import (
    LabColor,
    SrgbColor,
    ciede2000,
    ciede2000_array,
    hue_angle,
    lab_to_srgb,
    lab_to_srgb_array,
    srgb_to_lab,
    srgb_to_lab_array,
    to_hex,
)

channel = st.integers(0, 255)
rgb = st.tuples(channel, channel, channel)
lab = st.tuples(
    st.floats(0, 100, allow_nan=False),
    st.floats(-128, 128, allow_nan=False),
    st.floats(-128, 128, allow_nan=False),
)


def reference_srgb_to_lab(r, g, b):
    """Plain scalar sRGB -> XYZ -> Lab, written independently of the module."""

    def decode(c):
        c = c / 255.0
        return c / 12.92 if c <= 0.04045 else ((c + 0.055) / 1.055) ** 2.4

    R, G, B = decode(r), decode(g), decode(b)
    X = 0.4124 * R + 0.3576 * G + 0.1805 * B
    Y = 0.2126 * R + 0.7152 * G + 0.0722 * B
    Z = 0.0193 * R + 0.1192 * G + 0.9505 * B
    Xn, Yn, Zn = 0.4124 + 0.3576 + 0.1805, 0.2126 + 0.7152 + 0.0722, 0.0193 + 0.1192 + 0.9505

    def f(t):
        return t ** (1 / 3) if t > (6 / 29) ** 3 else t / (3 * (6 / 29) ** 2) + 4 / 29

    fx, fy, fz = f(X / Xn), f(Y / Yn), f(Z / Zn)
    return 116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz)


def test_reference_white_and_black():
    assert srgb_to_lab((255, 255, 255)) == (100.0, 0.0, 0.0)
    assert srgb_to_lab((0, 0, 0)) == (0.0, 0.0, 0.0)


def test_mid_gray_matches_reference_conversion():
    L, a, b = srgb_to_lab((118, 118, 118))
    ref_L, _, _ = reference_srgb_to_lab(118, 118, 118)
    assert L == pytest.approx(ref_L, abs=1e-9)
    assert L == pytest.approx(49.637014372750, abs=1e-9)
    assert a == 0.0 and b == 0.0


def test_mid_gray_lightness_agrees_with_skimage():
    skcolor = pytest.importorskip("skimage.color")
    ref = skcolor.rgb2lab(np.array([[[118, 118, 118]]], dtype=np.uint8))[0, 0, 0]
    assert srgb_to_lab((118, 118, 118)).L == pytest.approx(ref, abs=1e-9)


@given(rgb)
def test_matches_reference_conversion(c):
    got = srgb_to_lab(c)
    want = reference_srgb_to_lab(*c)
    assert got == pytest.approx(want, abs=1e-9)


def test_grays_are_neutral_and_monotone():
    grays = np.repeat(np.arange(256)[:, None], 3, axis=1)
    labs = srgb_to_lab_array(grays)
    assert np.all(labs[:, 1] == 0.0)
    assert np.all(labs[:, 2] == 0.0)
    assert np.all(np.diff(labs[:, 0]) > 0)


def test_array_and_scalar_paths_agree():
    rng = np.random.default_rng(0)
    px = rng.integers(0, 256, (50, 3))
    arr = srgb_to_lab_array(px)
    for p, row in zip(px, arr):
        assert srgb_to_lab(tuple(int(v) for v in p)) == tuple(row)


def test_rejects_out_of_range_channel():
    with pytest.raises(ValueError):
        srgb_to_lab((256, 0, 0))


def test_lab_to_srgb_extremes():
    assert lab_to_srgb((100.0, 0.0, 0.0)) == (SrgbColor(255, 255, 255), False)
    assert lab_to_srgb((0.0, 0.0, 0.0)) == (SrgbColor(0, 0, 0), False)


def test_round_trip_single_color():
    color, clipped = lab_to_srgb(srgb_to_lab((200, 30, 64)))
    assert not clipped
    assert all(abs(x - y) <= 1 for x, y in zip(color, (200, 30, 64)))


def test_round_trip_dense_grid():
    axis = np.arange(0, 256, 5)
    grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    back, clipped = lab_to_srgb_array(srgb_to_lab_array(grid))
    assert not clipped.any()
    assert np.abs(back.astype(int) - grid).max() <= 1


def test_out_of_gamut_is_clamped_and_flagged():
    color, clipped = lab_to_srgb((50.0, 120.0, 0.0))
    assert clipped
    assert all(0 <= v <= 255 for v in color)


def test_hex():
    assert to_hex((255, 0, 16)) == "#ff0010"


@pytest.mark.parametrize(
    "a, b, h",
    [(10, 0, 0.0), (0, 10, 90.0), (10, 10, 45.0), (-10, 0, 180.0), (0, -10, 270.0)],
)
def test_hue_angle_examples(a, b, h):
    assert hue_angle(LabColor(50, a, b)).h == pytest.approx(h, abs=1e-12)


def test_hue_angle_neutral_convention():
    assert hue_angle((50.0, 0.0, 0.0)) == (0.0, 0.0)


@given(lab)
def test_hue_angle_range(c):
    h, C = hue_angle(c)
    assert 0.0 <= h < 360.0
    assert C >= 0.0
    assert C == pytest.approx(math.hypot(c[1], c[2]))


@given(st.floats(0, 359.9), st.floats(0.1, 179.9), st.floats(1, 80))
def test_mean_vector_bisects_equal_chroma_hues(h1, sep, chroma):
    h2 = h1 + sep
    p1 = (chroma * math.cos(math.radians(h1)), chroma * math.sin(math.radians(h1)))
    p2 = (chroma * math.cos(math.radians(h2)), chroma * math.sin(math.radians(h2)))
    mid = hue_angle((50.0, (p1[0] + p2[0]) / 2, (p1[1] + p2[1]) / 2)).h
    expected = (h1 + sep / 2) % 360.0
    diff = abs((mid - expected + 180.0) % 360.0 - 180.0)
    assert diff < 1e-6


def test_ciede2000_identical_is_zero():
    assert ciede2000((50, 20, -30), (50, 20, -30)) == 0.0


def test_ciede2000_black_white_is_100():
    assert ciede2000((0, 0, 0), (100, 0, 0)) == pytest.approx(100.0, abs=1e-9)


@pytest.mark.parametrize("x, y, published", SHARMA_PAIRS)
def test_ciede2000_conformance(x, y, published):
    # published values are rounded to 4 decimals
    assert ciede2000(x, y) == pytest.approx(published, abs=5e-5 + 1e-12)
    assert ciede2000(y, x) == ciede2000(x, y)


def test_ciede2000_conformance_against_skimage():
    skcolor = pytest.importorskip("skimage.color")
    x = np.array([p[0] for p in SHARMA_PAIRS])
    y = np.array([p[1] for p in SHARMA_PAIRS])
    np.testing.assert_allclose(ciede2000_array(x, y), skcolor.deltaE_ciede2000(x, y), atol=1e-4, rtol=0)


@given(lab, lab)
def test_ciede2000_symmetric_and_positive(x, y):
    d = ciede2000(x, y)
    assert d == ciede2000(y, x)
    assert ciede2000(x, x) == 0.0
    if max(abs(p - q) for p, q in zip(x, y)) > 1e-9:  # below this the squares underflow
        assert d > 0.0


def test_ciede2000_broadcasts():
    ref = np.array([50.0, 10.0, 10.0])
    pts = np.array([[50.0, 10.0, 10.0], [60.0, 10.0, 10.0]])
    out = ciede2000_array(pts, ref)
    assert out.shape == (2,)
    assert out[0] == 0.0
    assert out[1] == pytest.approx(ciede2000(tuple(pts[1]), tuple(ref)))
