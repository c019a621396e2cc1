import numpy as np
import pytest

from focaldepth import io as fio
from focaldepth.imaging import DepthRange
from focaldepth.optics import FocusSchedule
from focaldepth.render import FocalStack


def test_pfm_roundtrip_is_exact(tmp_path, rng):
    img = rng.random((7, 5, 3)).astype(np.float32).astype(np.float64)
    fio.save_image(tmp_path / "a.pfm", img)
    assert np.array_equal(fio.load_image(tmp_path / "a.pfm"), img)
    gray = rng.random((4, 9, 1)).astype(np.float32).astype(np.float64)
    fio.save_image(tmp_path / "g.pfm", gray)
    assert np.array_equal(fio.load_image(tmp_path / "g.pfm"), gray)


def test_pfm_header_and_row_order(tmp_path):
    img = np.array([[0.0, 1.0], [2.0, 3.0]])
    fio.write_pfm(tmp_path / "h.pfm", img)
    raw = (tmp_path / "h.pfm").read_bytes()
    assert raw.startswith(b"Pf\n2 2\n-1.0\n")
    # bottom row first, little endian
    assert np.frombuffer(raw[-16:], "<f4").tolist() == [2.0, 3.0, 0.0, 1.0]


def test_png8_quantization(tmp_path):
    fio.save_image(tmp_path / "half.png", np.full((2, 2), 0.5))
    from PIL import Image

    assert np.asarray(Image.open(tmp_path / "half.png")).flat[0] == 128
    back = fio.load_image(tmp_path / "half.png")
    assert back[0, 0, 0] == pytest.approx(128 / 255)
    assert back[0, 0, 0] == pytest.approx(0.50196, abs=1e-5)


@pytest.mark.parametrize("fmt,suffix", [("png8", ".png"), ("png16", ".png")])
def test_png_idempotent(tmp_path, rng, fmt, suffix):
    img = rng.random((6, 6, 1))
    a, b = tmp_path / f"a{suffix}", tmp_path / f"b{suffix}"
    fio.save_image(a, img, fmt)
    fio.save_image(b, fio.load_image(a, fmt), fmt)
    assert a.read_bytes() == b.read_bytes()
    assert np.array_equal(fio.load_image(a, fmt), fio.load_image(b, fmt))


def test_rgb_png8(tmp_path, rng):
    img = rng.random((5, 4, 3))
    fio.save_image(tmp_path / "c.png", img)
    back = fio.load_image(tmp_path / "c.png")
    assert back.shape == (5, 4, 3)
    assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-12


def test_error_variants(tmp_path):
    empty = tmp_path / "empty.png"
    empty.write_bytes(b"")
    with pytest.raises(fio.MalformedFileError):
        fio.load_image(empty)
    (tmp_path / "empty.pfm").write_bytes(b"")
    with pytest.raises(fio.MalformedFileError):
        fio.load_image(tmp_path / "empty.pfm")
    with pytest.raises(fio.MissingFileError):
        fio.load_image(tmp_path / "nope.png")
    with pytest.raises(fio.UnsupportedChannelsError):
        fio.write_pfm(tmp_path / "x.pfm", np.zeros((2, 2, 2)))
    (tmp_path / "short.pfm").write_bytes(b"PF\n4 4\n-1.0\n" + b"\0" * 10)
    with pytest.raises(fio.MalformedFileError):
        fio.load_image(tmp_path / "short.pfm")


def test_depth_png16_millimeters(tmp_path):
    depth = np.full((3, 3), 1.234)
    fio.save_depth(tmp_path / "d.png", depth)
    from PIL import Image

    assert np.asarray(Image.open(tmp_path / "d.png")).flat[0] == 1234
    back, rep = fio.load_depth(tmp_path / "d.png")
    assert back[0, 0] == pytest.approx(1.234, abs=1e-12)
    assert rep.n_invalid == 0 and rep.n_clamped == 0


def test_depth_pfm_roundtrip(tmp_path, rng):
    depth = rng.uniform(0.7, 10, (5, 6)).astype(np.float32).astype(np.float64)
    fio.save_depth(tmp_path / "d.pfm", depth)
    back, _ = fio.load_depth(tmp_path / "d.pfm")
    assert np.array_equal(back, depth)


def test_zero_depth_repaired(tmp_path):
    depth = np.full((2, 3), 2.0)
    depth[0, 1] = 0.0
    fio.write_pfm(tmp_path / "z.pfm", depth)
    back, rep = fio.load_depth(tmp_path / "z.pfm", depth_range=DepthRange())
    assert rep.n_invalid == 1
    assert back[0, 1] == 0.7


def test_depth_clamped_and_counted(tmp_path):
    depth = np.array([[0.5, 2.0, 12.0]])
    fio.write_pfm(tmp_path / "c.pfm", depth)
    back, rep = fio.load_depth(tmp_path / "c.pfm")
    assert rep.n_clamped == 2
    assert back.min() == 0.7 and back.max() == 10.0


def test_stack_roundtrip(tmp_path, rng):
    slices = rng.random((3, 4, 5, 3)).astype(np.float32).astype(np.float64)
    stack = FocalStack(slices, FocusSchedule((0.8, 1.0, 1.2)))
    fio.save_stack(tmp_path / "s", stack)
    assert (tmp_path / "s" / "slice_02.pfm").is_file()
    assert (tmp_path / "s" / "schedule.csv").read_text().splitlines()[0] == "index,focus_m"
    back = fio.load_stack(tmp_path / "s")
    assert back.schedule == stack.schedule
    assert np.array_equal(back.slices, slices)


def test_missing_stack_dir(tmp_path):
    with pytest.raises(fio.MissingFileError, match="nope"):
        fio.load_stack(tmp_path / "nope")
