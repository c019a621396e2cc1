import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from focaldepth.imaging import (
    DimensionError,
    as_depth,
    as_image,
    box_kernel,
    convolve2d,
    gaussian_kernel,
    identity_kernel,
    laplacian_kernel,
    luma,
)


def test_laplacian_annihilates_constants():
    img = np.full((9, 7, 3), 0.37)
    assert np.all(convolve2d(img, laplacian_kernel()) == 0.0)


def test_identity_kernel_is_exact(rng):
    img = rng.random((6, 5, 3))
    assert np.array_equal(convolve2d(img, identity_kernel()), img)


def test_box_on_ramp_matches_hand_sum():
    ramp = np.arange(25, dtype=float).reshape(5, 5)
    out = convolve2d(ramp, box_kernel(1))
    # 9-neighbourhood of (2, 2): rows 1..3, cols 1..3
    hand = (6 + 7 + 8 + 11 + 12 + 13 + 16 + 17 + 18) / 9.0
    assert out[2, 2] == pytest.approx(hand, abs=1e-12)
    assert out.shape == ramp.shape


def test_border_is_edge_replicated():
    img = np.zeros((5, 5))
    img[:, 0] = 1.0
    out = convolve2d(img, box_kernel(1))
    # left column sees itself twice (replicated) plus one zero column
    assert out[2, 0] == pytest.approx(6 / 9)


def test_kernel_too_large():
    with pytest.raises(DimensionError):
        convolve2d(np.zeros((4, 8)), box_kernel(4))


def test_kernel_sums():
    assert gaussian_kernel(2.3).sum() == pytest.approx(1.0, abs=1e-9)
    assert box_kernel(2).sum() == pytest.approx(1.0, abs=1e-9)
    assert abs(laplacian_kernel().sum()) <= 1e-12


def test_convolution_is_linear(rng):
    x, y = rng.random((16, 16)), rng.random((16, 16))
    k = gaussian_kernel(1.5)
    lhs = convolve2d(2.5 * x - 0.7 * y, k)
    rhs = 2.5 * convolve2d(x, k) - 0.7 * convolve2d(y, k)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


def test_symmetric_kernel_commutes_with_flip(rng):
    img = rng.random((20, 20))
    k = gaussian_kernel(1.2)
    a = convolve2d(img[:, ::-1], k)
    b = convolve2d(img, k)[:, ::-1]
    assert np.max(np.abs(a - b)[4:-4, 4:-4]) <= 1e-12


def test_deterministic(rng):
    img = rng.random((12, 12, 3))
    k = gaussian_kernel(2.0)
    assert np.array_equal(convolve2d(img, k), convolve2d(img, k))


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 12), st.integers(3, 12), st.floats(0.3, 1.0))
def test_smoothing_preserves_constants(h, w, value):
    out = convolve2d(np.full((h, w), value), gaussian_kernel(0.8, radius=1))
    assert np.allclose(out, value, atol=1e-12)


def test_image_validation():
    assert as_image(np.zeros((3, 4))).shape == (3, 4, 1)
    with pytest.raises(DimensionError):
        as_image(np.zeros((3, 4, 2)))
    with pytest.raises(ValueError):
        as_image(np.array([[np.nan]]))
    with pytest.raises(ValueError):
        as_depth(np.full((2, 2), 0.5), depth_range=__import__("focaldepth.imaging").imaging.DepthRange())


def test_luma_weights():
    img = np.zeros((1, 1, 3))
    img[0, 0] = (1.0, 0.0, 0.0)
    assert luma(img)[0, 0] == pytest.approx(0.299)
