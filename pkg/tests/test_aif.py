import numpy as np
import pytest

from focaldepth.aif import composite_aif, dff_argmax_depth, focus_measure
from focaldepth.imaging import DimensionError, convolve2d, laplacian_kernel, luma
from focaldepth.metrics import interior_mask
from focaldepth.optics import FocusSchedule
from focaldepth.render import FocalStack, render_slice, render_stack
from focaldepth.scenes import SceneSpec, make_scene, make_texture


def psnr(a, b):
    return 10 * np.log10(1.0 / np.mean((a - b) ** 2))


def test_constant_stack_has_zero_measure(schedule):
    stack = FocalStack(np.full((6, 20, 20, 3), 0.6), schedule)
    fv = focus_measure(stack)
    assert fv.shape == (20, 20, 6)
    assert np.all(fv == 0)


def test_unsmoothed_measure_is_raw_laplacian(rng):
    stack = FocalStack(rng.random((2, 16, 16, 3)), FocusSchedule((1.0, 2.0)))
    fv = focus_measure(stack, window_sigma=0)
    raw = np.abs(convolve2d(luma(stack.slices[1]), laplacian_kernel()))
    assert np.array_equal(fv[:, :, 1], raw)


def test_measure_nonnegative(rng, schedule):
    fv = focus_measure(FocalStack(rng.random((6, 24, 24, 1)), schedule))
    assert np.all(fv >= 0) and np.all(np.isfinite(fv))


def test_sharp_checkerboard_wins(lens):
    spec = SceneSpec(height=64, width=64, texture="checker", period=4)
    sharp = make_texture(spec)
    blurred = render_slice(sharp, np.full((64, 64), 5.0), 0.8, lens)
    slices = [blurred, blurred, sharp, blurred]
    fv = focus_measure(FocalStack(np.stack(slices), FocusSchedule((0.8, 1.0, 1.2, 1.6))))
    mask = interior_mask((64, 64), 8)
    assert np.mean(np.argmax(fv, axis=-1)[mask] == 2) >= 0.99


def test_single_slice_composite(rng):
    stack = FocalStack(rng.random((1, 10, 10, 3)), FocusSchedule((1.0,)))
    out = composite_aif(stack, focus_measure(stack))
    assert np.array_equal(out, stack.slices[0])


@pytest.fixture(scope="module")
def two_plane():
    from focaldepth.optics import LensConfig, default_schedule

    aif, depth = make_scene(SceneSpec("two_plane", (1.0, 2.4), height=128, width=128))
    stack = render_stack(aif, depth, default_schedule(), LensConfig())
    return aif, depth, stack, focus_measure(stack)


def test_composite_psnr_two_plane(two_plane):
    aif, depth, stack, fv = two_plane
    out = composite_aif(stack, fv)
    mask = interior_mask(aif.shape, 24, depth)
    assert mask.sum() > 2000
    assert psnr(out[mask], aif[mask]) >= 30.0


def test_argmax_composite_is_selection(two_plane):
    _, _, stack, fv = two_plane
    out = composite_aif(stack, fv)
    hit = np.any(np.all(stack.slices == out[None], axis=-1), axis=0)
    assert hit.all()


def test_softmax_approaches_argmax(two_plane):
    _, _, stack, fv = two_plane
    tau = 1e-4 * fv.max()
    hard = composite_aif(stack, fv, "argmax")
    soft = composite_aif(stack, fv, "softmax", tau)
    top2 = np.sort(fv, axis=-1)[..., -2:]
    untied = (top2[..., 1] - top2[..., 0]) > 40 * tau
    assert untied.mean() > 0.9
    assert np.max(np.abs(soft - hard)[untied]) <= 1e-6


def test_composite_errors(rng):
    stack = FocalStack(rng.random((2, 8, 8, 3)), FocusSchedule((1.0, 2.0)))
    with pytest.raises(DimensionError):
        composite_aif(stack, np.zeros((8, 8, 3)))
    with pytest.raises(ValueError):
        composite_aif(stack, np.zeros((8, 8, 2)), "softmax")
    with pytest.raises(ValueError):
        composite_aif(stack, np.zeros((8, 8, 2)), "median")


def _plane_dff(depth, lens, schedule, n=128):
    aif, gt = make_scene(SceneSpec("plane", (depth,), height=n, width=n))
    stack = render_stack(aif, gt, schedule, lens)
    return dff_argmax_depth(focus_measure(stack), schedule), interior_mask(gt.shape, lens.max_kernel_radius)


def test_dff_plane_on_schedule(lens, schedule):
    pred, mask = _plane_dff(1.2, lens, schedule)
    assert np.mean(pred[mask] == 1.2) >= 0.99


def test_dff_plane_between_slices(lens, schedule):
    pred, mask = _plane_dff(1.4, lens, schedule)
    assert set(np.unique(pred[mask])) <= {1.2, 1.6}


def test_dff_constant_ties_to_first(schedule):
    fv = np.zeros((5, 5, 6))
    assert np.all(dff_argmax_depth(fv, schedule) == 0.8)


def test_dff_values_in_schedule(rng, schedule):
    pred = dff_argmax_depth(rng.random((9, 9, 6)), schedule)
    assert set(np.unique(pred)) <= set(schedule.distances)
    with pytest.raises(DimensionError):
        dff_argmax_depth(rng.random((9, 9, 5)), schedule)
