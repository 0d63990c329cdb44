"""Grayscale image values, file round-trips, resizing, and histograms.

Pixels live in ``[0, 1]`` as float64 regardless of the file bit depth;
the original depth is kept alongside so images can be written back at
native precision.
"""

from __future__ import annotations

import dataclasses
import io
import pathlib

import numpy as np
from PIL import Image as _PILImage

from falce import kernels
from falce.errors import ImageIOError

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


@dataclasses.dataclass(frozen=True, eq=False)
class GrayImage:
    """A single-channel image with normalized float pixel values.

    ``pixels`` is a read-only ``(height, width)`` float64 array whose
    values all lie in ``[0, 1]``.  ``source_bit_depth`` records the
    precision of the originating file (8 or 16).
    """

    pixels: np.ndarray
    source_bit_depth: int = 8

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("image must be a non-empty 2-D array")
        if not np.isfinite(arr).all():
            raise ValueError("image contains non-finite values")
        if float(arr.min()) < 0.0 or float(arr.max()) > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        if self.source_bit_depth not in (8, 16):
            raise ValueError("source_bit_depth must be 8 or 16")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclasses.dataclass(frozen=True, eq=False)
class Histogram:
    """Integer gray-level counts over equal-width bins of ``[0, 1]``."""

    bins: int
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if self.bins < 2:
            raise ValueError("histogram needs at least 2 bins")
        if counts.shape != (self.bins,) or (counts < 0).any():
            raise ValueError("counts must be a non-negative vector of length bins")
        counts = counts.copy()
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def bin_index_map(pixels: np.ndarray, bins: int) -> np.ndarray:
    """Map each value ``v`` in ``[0, 1]`` to bin ``min(floor(v * bins), bins - 1)``."""
    idx = (np.asarray(pixels, dtype=np.float64) * bins).astype(np.int64)
    return np.minimum(idx, bins - 1).astype(np.int32)


def histogram(img: GrayImage, bins: int = 256) -> Histogram:
    if bins < 2:
        raise ValueError("histogram needs at least 2 bins")
    idx = bin_index_map(img.pixels, bins)
    counts = np.bincount(idx.ravel(), minlength=bins).astype(np.int64)
    return Histogram(bins=bins, counts=counts)


def resize(img: GrayImage, new_width: int, new_height: int) -> GrayImage:
    """Bilinear resize with half-pixel centre alignment and edge clamping."""
    if new_width < 1 or new_height < 1:
        raise ValueError("target size must be at least 1x1")
    out = kernels.resize_bilinear(img.pixels, new_height, new_width)
    return GrayImage(out, img.source_bit_depth)


def _decode_png(raw: bytes, path) -> GrayImage:
    try:
        im = _PILImage.open(io.BytesIO(raw))
        im.load()
    except Exception as exc:  # Pillow raises a zoo of types here
        raise ImageIOError(f"{path}: cannot decode PNG ({exc})") from exc
    if im.mode == "L":
        depth = 8
        arr = np.asarray(im, dtype=np.float64)
    elif im.mode in ("I;16", "I;16B", "I;16L"):
        depth = 16
        arr = np.asarray(im.convert("I"), dtype=np.float64)
    elif im.mode == "I":
        depth = 16
        arr = np.asarray(im, dtype=np.float64)
        if arr.size and (arr.min() < 0 or arr.max() > 65535):
            raise ImageIOError(f"{path}: integer PNG exceeds 16-bit range")
    else:
        raise ImageIOError(
            f"{path}: unsupported PNG mode {im.mode!r} (need 8- or 16-bit grayscale)")
    if arr.ndim != 2 or arr.size == 0:
        raise ImageIOError(f"{path}: PNG is not a non-empty single-channel image")
    return GrayImage(arr / float(2 ** depth - 1), depth)


def _parse_pgm(raw: bytes, path) -> GrayImage:
    # binary ("P5") netpbm: ASCII header tokens, then a raster blob.
    pos = 2
    tokens = []
    n = len(raw)
    while len(tokens) < 3:
        while pos < n and raw[pos:pos + 1].isspace():
            pos += 1
        if pos < n and raw[pos:pos + 1] == b"#":
            while pos < n and raw[pos] not in (0x0A, 0x0D):
                pos += 1
            continue
        start = pos
        while pos < n and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageIOError(f"{path}: truncated PGM header")
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace byte separating header from raster
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise ImageIOError(f"{path}: malformed PGM header") from exc
    if width < 1 or height < 1:
        raise ImageIOError(f"{path}: PGM has empty dimensions")
    if maxval == 255:
        depth, dtype, stride = 8, np.dtype(np.uint8), 1
    elif maxval == 65535:
        depth, dtype, stride = 16, np.dtype(">u2"), 2
    else:
        raise ImageIOError(f"{path}: unsupported PGM maxval {maxval} (need 255 or 65535)")
    need = width * height * stride
    raster = raw[pos:pos + need]
    if len(raster) < need:
        raise ImageIOError(f"{path}: truncated PGM raster")
    arr = np.frombuffer(raster, dtype=dtype).reshape(height, width).astype(np.float64)
    return GrayImage(arr / float(maxval), depth)


def load_image(path) -> GrayImage:
    """Read an 8- or 16-bit grayscale PNG or binary PGM file."""
    p = pathlib.Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ImageIOError(f"{path}: cannot read file ({exc})") from exc
    if raw[:2] == b"P5":
        return _parse_pgm(raw, path)
    if raw[:8] == _PNG_MAGIC:
        return _decode_png(raw, path)
    raise ImageIOError(f"{path}: unsupported format (expected grayscale PNG or binary PGM)")


def quantize(img: GrayImage, bit_depth: int) -> np.ndarray:
    """Scale to integer codes with round-half-up."""
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    maxval = 2 ** bit_depth - 1
    codes = np.floor(img.pixels * maxval + 0.5)
    return codes.astype(np.uint8 if bit_depth == 8 else np.uint16)


def save_image(img: GrayImage, path, bit_depth: int = 16) -> None:
    """Write as PNG or binary PGM (chosen by file suffix) at the given depth."""
    codes = quantize(img, bit_depth)
    p = pathlib.Path(path)
    suffix = p.suffix.lower()
    try:
        if suffix == ".png":
            _PILImage.fromarray(codes).save(p, format="PNG")
        elif suffix == ".pgm":
            maxval = 2 ** bit_depth - 1
            header = f"P5\n{img.width} {img.height}\n{maxval}\n".encode("ascii")
            raster = codes.astype(">u2").tobytes() if bit_depth == 16 else codes.tobytes()
            p.write_bytes(header + raster)
        else:
            raise ImageIOError(f"{path}: unsupported output suffix {suffix!r} (use .png or .pgm)")
    except OSError as exc:
        raise ImageIOError(f"{path}: cannot write file ({exc})") from exc
