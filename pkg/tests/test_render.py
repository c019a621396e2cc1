import numpy as np
import pytest

from focaldepth.gradcheck import LD, ReferenceSlice, _sigma_ld, check_render_adjoint
from focaldepth.imaging import DimensionError, convolve2d, gaussian_kernel, laplacian_kernel, luma
from focaldepth.optics import FocusSchedule, coc_diameter_px
from focaldepth.render import (
    FocalStack,
    render_slice,
    render_slice_adjoint,
    render_stack,
    set_threads,
    sigma_at,
    support_radius,
)
from focaldepth.scenes import SceneSpec, make_texture


def texture(n=48, corr=1.0, seed=3):
    return make_texture(SceneSpec(height=n, width=n, seed=seed, correlation_length=corr))


def sharpness(img):
    return float(np.mean(np.abs(convolve2d(luma(img), laplacian_kernel()))[8:-8, 8:-8]))


def test_sigma_floor_in_focus(lens):
    assert sigma_at(1.4, 1.4, lens) == 0.25


def test_sigma_hand_value(lens):
    coc = coc_diameter_px(2.0, 1.0, lens)
    assert sigma_at(2.0, 1.0, lens) == pytest.approx(0.5 * coc)
    assert sigma_at(2.0, 1.0, lens) == pytest.approx(8.01, abs=5e-3)


def test_sigma_continuous_across_floor(lens):
    # raw sigma reaches the floor at 1 px CoC; probe both sides
    q0 = 1.0 + 0.5 / (0.0125 * 0.025 / 0.975 / 1e-5)
    eps = 1e-9
    lo, hi = sigma_at(1 / (q0 - eps), 1.0, lens), sigma_at(1 / (q0 + eps), 1.0, lens)
    assert abs(hi - lo) < 1e-6


def test_constant_image_preserved(lens, rng):
    aif = np.full((20, 24, 3), 0.42)
    depth = rng.uniform(0.7, 10, (20, 24))
    out = render_slice(aif, depth, 1.2, lens)
    assert np.max(np.abs(out - 0.42)) <= 1e-12


def test_in_focus_plane_matches_uniform_convolution(lens):
    aif = texture(40, corr=1.5)
    depth = np.full((40, 40), 1.6)
    out = render_slice(aif, depth, 1.6, lens)
    ref = convolve2d(aif, gaussian_kernel(0.25, radius=1))
    assert np.max(np.abs(out - ref)) <= 1e-12
    assert np.max(np.abs(out - aif)) <= 0.02


def test_defocused_plane_matches_uniform_convolution(lens):
    aif = texture(56)
    depth = np.full((56, 56), 2.0)
    out = render_slice(aif, depth, 1.0, lens)
    sigma = 0.5 * coc_diameter_px(2.0, 1.0, lens)
    ref = convolve2d(aif, gaussian_kernel(sigma, radius=24))
    assert np.max(np.abs(out - ref)) <= 1e-12


def test_forward_matches_extended_precision_reference(lens, rng):
    aif = rng.random((18, 15, 3))
    depth = rng.uniform(0.7, 6.0, (18, 15))
    out = render_slice(aif, depth, 1.2, lens)
    radius = support_radius(sigma_at(depth, 1.2, lens), lens)
    ref = ReferenceSlice(aif, _sigma_ld(depth, 1.2, lens), radius).out()
    assert np.max(np.abs(out - ref.astype(np.float64))) <= 1e-12


def test_output_range(lens, rng):
    out = render_slice(rng.random((16, 16, 3)), rng.uniform(0.7, 10, (16, 16)), 2.4, lens)
    assert out.min() >= -1e-12 and out.max() <= 1 + 1e-12


def test_render_stack_default(lens, schedule):
    aif = texture(32)
    stack = render_stack(aif, np.full((32, 32), 1.2), schedule, lens)
    assert len(stack) == 6
    assert stack.slices.shape == (6, 32, 32, 3)


def test_single_slice_stack(lens):
    aif, depth = texture(32), np.full((32, 32), 2.0)
    stack = render_stack(aif, depth, FocusSchedule((1.6,)), lens)
    assert np.array_equal(stack.slices[0], render_slice(aif, depth, 1.6, lens))


def test_focused_slice_is_sharpest(lens, schedule):
    aif = texture(64)
    stack = render_stack(aif, np.full((64, 64), 1.2), schedule, lens)
    scores = [sharpness(s) for s in stack.slices]
    assert int(np.argmax(scores)) == 2


def test_blur_monotone_in_defocus(lens):
    aif = texture(64)
    scores = []
    for dq in (0.0, 0.1, 0.2, 0.4):
        depth = np.full((64, 64), 1.0 / (1.0 - dq))
        scores.append(sharpness(render_slice(aif, depth, 1.0, lens)))
    assert all(a > b for a, b in zip(scores, scores[1:]))


def test_dimension_mismatch(lens):
    with pytest.raises(DimensionError):
        render_slice(np.zeros((4, 4, 3)), np.ones((5, 4)), 1.0, lens)
    with pytest.raises(DimensionError):
        render_slice_adjoint(np.zeros((4, 4, 3)), np.ones((4, 4)), 1.0, lens, np.zeros((3, 4, 3)))
    with pytest.raises(DimensionError):
        FocalStack(np.zeros((2, 4, 4, 3)), FocusSchedule((1.0,)))


def test_adjoint_zero_for_constant_image(lens, rng):
    g = render_slice_adjoint(np.full((12, 12, 3), 0.3), rng.uniform(0.8, 5, (12, 12)), 1.2, lens,
                             rng.standard_normal((12, 12, 3)))
    assert np.max(np.abs(g)) <= 1e-12


def test_adjoint_zero_when_in_focus(lens, rng):
    g = render_slice_adjoint(rng.random((12, 12, 3)), np.full((12, 12), 1.6), 1.6, lens,
                             rng.standard_normal((12, 12, 3)))
    assert np.all(g == 0.0)


def test_adjoint_finite_differences(lens, schedule):
    res = check_render_adjoint(seed=21, lens=lens, schedule=schedule)
    assert res.n_checked >= 100
    assert res.max_rel_error <= 1e-4


def test_gray_adjoint_finite_differences(lens, rng):
    # single-channel path through the same kernels
    aif = rng.random((14, 14, 1))
    depth = rng.uniform(0.8, 5, (14, 14))
    up = rng.standard_normal(aif.shape)
    g = render_slice_adjoint(aif, depth, 2.4, lens, up)
    radius = support_radius(sigma_at(depth, 2.4, lens), lens)
    ref = ReferenceSlice(aif, _sigma_ld(depth, 2.4, lens), radius)
    h = LD(1e-5)
    for i, j in [(0, 0), (3, 7), (13, 13), (6, 0)]:
        vals = [(ref.out_with_sigma(i, j, _sigma_ld(LD(depth[i, j]) + s, 2.4, lens)) * up).sum() for s in (h, -h)]
        fd = float((vals[0] - vals[1]) / (2 * h))
        assert g[i, j] == pytest.approx(fd, rel=1e-4)


def test_deterministic_across_threads(lens, rng):
    aif, depth = rng.random((24, 24, 3)), rng.uniform(0.8, 5, (24, 24))
    up = rng.standard_normal(aif.shape)
    set_threads(1)
    a = render_slice(aif, depth, 1.0, lens), render_slice_adjoint(aif, depth, 1.0, lens, up)
    set_threads(64)
    b = render_slice(aif, depth, 1.0, lens), render_slice_adjoint(aif, depth, 1.0, lens, up)
    set_threads(1)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
