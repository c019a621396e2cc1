"""File I/O for images, depth maps and focal stacks.

Formats:

* ``pfm``     : raw little-endian float32 ("Pf" gray / "PF" RGB, scale -1.0)
* ``png8``    : 8-bit gray/RGB, value = round(v * 255)
* ``png16``   : 16-bit gray, value = round(v * 65535)
* ``png16_mm`` (depth only) : 16-bit gray, millimeters

PFM rows are stored bottom-to-top as the format requires.
"""

from __future__ import annotations

import csv
import logging
import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from .imaging import DepthRange, as_depth, as_image

log = logging.getLogger(__name__)

IMAGE_FORMATS = ("png8", "png16", "pfm")
DEPTH_FORMATS = ("png16_mm", "pfm_m")


class ImageIOError(Exception):
    pass


class MissingFileError(ImageIOError, FileNotFoundError):
    pass


class MalformedFileError(ImageIOError):
    pass


class UnsupportedChannelsError(ImageIOError):
    pass


def _format_from_suffix(path, formats, default_png):
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        return "pfm" if "pfm" in formats else "pfm_m"
    if suffix == ".png":
        return default_png
    raise ImageIOError(f"cannot infer format from {path!s}")


# -- PFM ---------------------------------------------------------------------

_PFM_HEADER = re.compile(rb"^(P[Ff])\s+(\d+)\s+(\d+)\s+(\S+)\s")


def write_pfm(path, data: np.ndarray) -> None:
    arr = np.asarray(data)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim == 2:
        tag = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        tag = b"PF"
    else:
        raise UnsupportedChannelsError(f"PFM holds 1 or 3 channels, got shape {arr.shape}")
    h, w = arr.shape[:2]
    body = np.ascontiguousarray(arr[::-1], dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(tag + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n" + body)


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into a float64 (H, W) or (H, W, 3) array."""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"no such file: {path}")
    raw = path.read_bytes()
    m = _PFM_HEADER.match(raw)
    if m is None:
        raise MalformedFileError(f"bad PFM header in {path}")
    tag, w, h, scale = m.group(1), int(m.group(2)), int(m.group(3)), m.group(4)
    try:
        scale = float(scale)
    except ValueError:
        raise MalformedFileError(f"bad PFM scale in {path}") from None
    if scale == 0:
        raise MalformedFileError(f"PFM scale must be non-zero in {path}")
    channels = 3 if tag == b"PF" else 1
    dtype = "<f4" if scale < 0 else ">f4"
    count = w * h * channels
    body = raw[m.end():]
    if len(body) != 4 * count or w == 0 or h == 0:
        raise MalformedFileError(f"PFM payload size mismatch in {path}")
    arr = np.frombuffer(body, dtype=dtype).astype(np.float64)
    shape = (h, w, 3) if channels == 3 else (h, w)
    return arr.reshape(shape)[::-1].copy()


# -- PNG ---------------------------------------------------------------------


def _read_png(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"no such file: {path}")
    try:
        with PILImage.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(im, dtype=np.int64)
            elif mode in ("L", "RGB"):
                arr = np.asarray(im, dtype=np.int64)
            elif mode == "RGBA":
                arr = np.asarray(im.convert("RGB"), dtype=np.int64)
            else:
                raise UnsupportedChannelsError(f"unsupported PNG mode {mode} in {path}")
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        if isinstance(exc, ImageIOError):
            raise
        raise MalformedFileError(f"cannot decode {path}: {exc}") from exc
    return arr


def _write_png(path, ints: np.ndarray, bits: int) -> None:
    if bits == 16:
        if ints.ndim != 2:
            raise UnsupportedChannelsError("16-bit PNG supports a single channel only")
        im = PILImage.fromarray(ints.astype(np.uint16))
    else:
        if ints.ndim == 2:
            im = PILImage.fromarray(ints.astype(np.uint8), mode="L")
        elif ints.shape[2] == 3:
            im = PILImage.fromarray(ints.astype(np.uint8), mode="RGB")
        else:
            raise UnsupportedChannelsError(f"8-bit PNG supports 1 or 3 channels, got {ints.shape}")
    im.save(path, format="PNG")


def _check_parent(path):
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise MissingFileError(f"parent directory does not exist: {parent}")


# -- images ------------------------------------------------------------------


def save_image(path, img: np.ndarray, fmt: str | None = None) -> None:
    fmt = fmt or _format_from_suffix(path, IMAGE_FORMATS, "png8")
    _check_parent(path)
    img = as_image(img)
    if fmt == "pfm":
        write_pfm(path, img)
        return
    flat = img[:, :, 0] if img.shape[2] == 1 else img
    if fmt == "png8":
        _write_png(path, np.round(np.clip(flat, 0, 1) * 255), 8)
    elif fmt == "png16":
        _write_png(path, np.round(np.clip(flat, 0, 1) * 65535), 16)
    else:
        raise ImageIOError(f"unknown image format {fmt!r}")


def load_image(path, fmt: str | None = None) -> np.ndarray:
    """Load an image as (H, W, C) float64 in [0, 1] (PFM values are raw)."""
    fmt = fmt or _format_from_suffix(path, IMAGE_FORMATS, "png8")
    if fmt == "pfm":
        arr = read_pfm(path)
    elif fmt in ("png8", "png16"):
        ints = _read_png(path)
        arr = ints / (255.0 if fmt == "png8" else 65535.0)
    else:
        raise ImageIOError(f"unknown image format {fmt!r}")
    try:
        return as_image(arr)
    except ValueError as exc:
        raise UnsupportedChannelsError(str(exc)) from exc


# -- depth maps --------------------------------------------------------------


@dataclass
class DepthLoadReport:
    n_invalid: int = 0
    n_clamped: int = 0


def save_depth(path, depth: np.ndarray, fmt: str | None = None) -> None:
    fmt = fmt or _format_from_suffix(path, DEPTH_FORMATS, "png16_mm")
    _check_parent(path)
    depth = as_depth(depth)
    if fmt == "pfm_m":
        write_pfm(path, depth)
    elif fmt == "png16_mm":
        _write_png(path, np.clip(np.round(depth * 1000.0), 0, 65535), 16)
    else:
        raise ImageIOError(f"unknown depth format {fmt!r}")


def load_depth(path, fmt: str | None = None, depth_range: DepthRange | None = None):
    """Load a depth map in meters and repair it into ``depth_range``.

    Zero-valued pixels (sensor dropouts) are counted as invalid and set to
    ``d_min``; other out-of-range values are clamped and counted.
    Returns ``(depth, DepthLoadReport)``.
    """
    fmt = fmt or _format_from_suffix(path, DEPTH_FORMATS, "png16_mm")
    depth_range = depth_range or DepthRange()
    if fmt == "pfm_m":
        arr = read_pfm(path)
        if arr.ndim != 2:
            raise UnsupportedChannelsError(f"depth PFM must be single-channel: {path}")
    elif fmt == "png16_mm":
        ints = _read_png(path)
        if ints.ndim != 2:
            raise UnsupportedChannelsError(f"depth PNG must be single-channel: {path}")
        arr = ints / 1000.0
    else:
        raise ImageIOError(f"unknown depth format {fmt!r}")
    if not np.all(np.isfinite(arr)):
        raise MalformedFileError(f"non-finite depth values in {path}")
    report = DepthLoadReport()
    invalid = arr <= 0
    report.n_invalid = int(invalid.sum())
    arr = np.where(invalid, depth_range.d_min, arr)
    out_of_range = (arr < depth_range.d_min) | (arr > depth_range.d_max)
    report.n_clamped = int(out_of_range.sum())
    arr = np.clip(arr, depth_range.d_min, depth_range.d_max)
    if report.n_invalid or report.n_clamped:
        log.info("%s: %d invalid, %d clamped depth pixels", path, report.n_invalid, report.n_clamped)
    return arr, report


# -- focal stacks -------------------------------------------------------------


def save_stack(directory, stack, png_preview: bool = True) -> None:
    """Write ``slice_NN.pfm`` (+ ``.png``) files and ``schedule.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, sl in enumerate(stack.slices):
        save_image(directory / f"slice_{i:02d}.pfm", sl)
        if png_preview:
            save_image(directory / f"slice_{i:02d}.png", sl)
    with open(directory / "schedule.csv", "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["index", "focus_m"])
        for i, d in enumerate(stack.schedule.distances):
            wr.writerow([i, repr(float(d))])


def load_stack(directory):
    from .render import FocalStack
    from .optics import FocusSchedule

    directory = Path(directory)
    if not directory.is_dir():
        raise MissingFileError(f"no such stack directory: {directory}")
    sched_path = directory / "schedule.csv"
    if not sched_path.is_file():
        raise MissingFileError(f"missing schedule sidecar: {sched_path}")
    with open(sched_path, newline="") as f:
        rows = list(csv.DictReader(f))
    try:
        rows.sort(key=lambda r: int(r["index"]))
        distances = [float(r["focus_m"]) for r in rows]
    except (KeyError, ValueError) as exc:
        raise MalformedFileError(f"bad schedule sidecar {sched_path}: {exc}") from exc
    slices = []
    for i in range(len(distances)):
        p = directory / f"slice_{i:02d}.pfm"
        slices.append(load_image(p) if p.is_file() else load_image(p.with_suffix(".png")))
    return FocalStack(np.stack(slices), FocusSchedule(tuple(distances)))


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)


def ensure_dir(path) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path
