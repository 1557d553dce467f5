import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from baryaug import heatmap
from baryaug.errors import InputError
from baryaug.measures import make_uniform_cloud


def ordered(pts):
    return make_uniform_cloud(pts, ordered=True)


def direct(x, y, sigma, h, w):
    """Per-pixel evaluation with math.exp; pixel (i, j) sits at column j, row i."""
    return np.array([[math.exp(-((j - x) ** 2 + (i - y) ** 2) / (2 * sigma ** 2))
                      for j in range(w)] for i in range(h)])


def test_default_sigma_argmax():
    hm = heatmap.render(ordered([(5, 5)]))
    assert hm.sigma == 4.0
    assert hm.argmax(0) == (5, 5)
    assert hm.tensor.shape == (1, 64, 64)


def test_argmax_row_is_y():
    hm = heatmap.render(ordered([(10, 3)]), h=16, w=32)
    assert hm.argmax(0) == (3, 10)


def test_small_sigma_one_hot():
    hm = heatmap.render(ordered([(7.2, 4.9)]), sigma=0.1, h=12, w=12)
    ch = hm.tensor[0]
    assert ch[5, 7] > 1 - 1e-9
    assert ch.sum() - ch[5, 7] < 1e-9


def test_mirror_symmetry():
    h = w = 33
    # symmetric about the center (16, 16)
    hm = heatmap.render(ordered([(10.3, 12.0), (21.7, 20.0)]), sigma=3.0, h=h, w=w)
    np.testing.assert_allclose(hm.tensor[0], hm.tensor[1][::-1, ::-1], atol=1e-12, rtol=0)


def test_exact_against_direct_evaluation(rng):
    pts = rng.uniform(0, 20, size=(4, 2))
    raw = heatmap.gaussian_channels(pts, 2.5, 20, 24)
    for k, (x, y) in enumerate(pts):
        np.testing.assert_allclose(raw[k], direct(x, y, 2.5, 20, 24), atol=1e-12, rtol=0)


def test_channels_normalized(rng):
    hm = heatmap.render(ordered(rng.uniform(0, 64, size=(5, 2))))
    np.testing.assert_allclose(hm.tensor.sum(axis=(1, 2)), 1.0, atol=1e-12)
    assert hm.tensor.min() >= 0


def test_peak_normalization():
    hm = heatmap.render(ordered([(3, 4)]), normalization="peak", h=10, w=10)
    assert hm.tensor.max() == 1.0
    with pytest.raises(InputError):
        heatmap.render(ordered([(3, 4)]), normalization="l2")


@settings(max_examples=30, deadline=None)
@given(st.integers(20, 43), st.integers(20, 43), st.integers(-5, 5), st.integers(-5, 5))
def test_integer_shift_covariance(x, y, dx, dy):
    h = w = 64
    a = heatmap.render(ordered([(x, y)]), sigma=1.0, h=h, w=w).tensor[0]
    b = heatmap.render(ordered([(x + dx, y + dy)]), sigma=1.0, h=h, w=w).tensor[0]
    # at >= 15 sigma from the border the clipped mass is below rounding
    inner = (slice(10, 50), slice(10, 50))
    shifted = np.roll(a, (dy, dx), axis=(0, 1))
    raw_a = heatmap.gaussian_channels([(x, y)], 1.0, h, w)[0]
    raw_b = heatmap.gaussian_channels([(x + dx, y + dy)], 1.0, h, w)[0]
    assert np.array_equal(np.roll(raw_a, (dy, dx), axis=(0, 1))[inner], raw_b[inner])
    np.testing.assert_allclose(shifted[inner], b[inner], rtol=1e-12, atol=1e-300)


def test_out_of_frame_flagged():
    hm = heatmap.render(ordered([(5, 5), (-10, 3), (400, 400)]), h=32, w=32)
    assert hm.out_of_frame == (False, True, True)
    np.testing.assert_allclose(hm.tensor.sum(axis=(1, 2)), 1.0, atol=1e-12)
    # mass piles up on the nearest border
    assert hm.argmax(1) == (3, 0)
    assert hm.argmax(2) == (31, 31)


def test_render_requires_ordered():
    with pytest.raises(InputError):
        heatmap.render(make_uniform_cloud([(1, 1)]))


@pytest.mark.parametrize("sigma", [0.0, -1.0, float("nan")])
def test_bad_sigma(sigma):
    with pytest.raises(InputError):
        heatmap.render(ordered([(1, 1)]), sigma=sigma)


def test_bad_size():
    with pytest.raises(InputError):
        heatmap.render(ordered([(1, 1)]), h=0)


# unordered

def test_unordered_single_point_matches_render():
    a = heatmap.render(ordered([(9.5, 7.25)]))
    b = heatmap.render_unordered(make_uniform_cloud([(9.5, 7.25)]))
    assert np.array_equal(a.tensor, b.tensor)


def test_unordered_permutation_invariant(rng):
    pts = rng.uniform(0, 64, size=(6, 2))
    a = heatmap.render_unordered(make_uniform_cloud(pts)).tensor
    b = heatmap.render_unordered(make_uniform_cloud(pts[::-1])).tensor
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=0)
    assert a.shape == (1, 64, 64)


def test_unordered_coincident_points():
    one = heatmap.render_unordered(make_uniform_cloud([(20, 30)])).tensor
    two = heatmap.render_unordered(make_uniform_cloud([(20, 30), (20, 30)])).tensor
    np.testing.assert_allclose(two, one, rtol=1e-15, atol=0)


def test_unordered_far_outside_frame():
    hm = heatmap.render_unordered(make_uniform_cloud([(1000, 1000), (1000, 1001)]), h=8, w=8)
    assert np.isfinite(hm.tensor).all()
    assert hm.tensor.sum() == pytest.approx(1.0)
    assert hm.out_of_frame == (True,)


# serialization

def test_binary_round_trip(rng):
    hm = heatmap.render(ordered(rng.uniform(0, 16, size=(3, 2))), h=16, w=20)
    data = heatmap.to_bytes(hm)
    assert len(data) == 16 + 8 * 3 * 16 * 20
    assert data[:4] == b"HMP1"
    assert struct.unpack("<III", data[4:16]) == (3, 16, 20)
    assert np.array_equal(heatmap.from_bytes(data), hm.tensor)


def test_binary_errors():
    with pytest.raises(InputError):
        heatmap.from_bytes(b"HMP1")
    with pytest.raises(InputError):
        heatmap.from_bytes(b"XXXX" + bytes(12))
    good = heatmap.to_bytes(heatmap.render(ordered([(1, 1)]), h=2, w=2))
    with pytest.raises(InputError):
        heatmap.from_bytes(good[:-8])


def test_text_round_trip(rng):
    hm = heatmap.render(ordered(rng.uniform(0, 8, size=(2, 2))), h=8, w=6)
    text = heatmap.to_text(hm)
    assert text.startswith("heatmap 2 8 6\n")
    assert np.array_equal(heatmap.from_text(text), hm.tensor)
    with pytest.raises(InputError):
        heatmap.from_text("heatmap 1 2 2\n0 0\n0\n")
