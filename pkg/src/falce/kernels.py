"""Backend dispatch for the per-pixel kernels.

At import time we pick the compiled extension (``falce._native``) when it
is present, otherwise the NumPy reference implementation.  Setting the
environment variable ``FALCE_PURE_PYTHON=1`` forces the reference backend
even when the extension is built.  Both backends are bit-identical; the
extension is only faster.
"""

import os

import numpy as np

from falce import _reference

if os.environ.get("FALCE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _reference
else:
    try:
        from falce import _native as _impl
    except ImportError:
        _impl = _reference

#: Name of the backend actually in use ("native" or "reference").
BACKEND = "reference" if _impl is _reference else "native"


def resize_bilinear(src, out_h, out_w):
    src = np.ascontiguousarray(src, dtype=np.float64)
    if out_h < 1 or out_w < 1:
        raise ValueError("resize target must be at least 1x1")
    return np.asarray(_impl.resize_bilinear(src, int(out_h), int(out_w)))


def blend_tile_maps(bins_idx, vals, luts, degen, ty0, wy, tx0, wx, tiles_y, tiles_x):
    return np.asarray(_impl.blend_tile_maps(
        np.ascontiguousarray(bins_idx, dtype=np.int32),
        np.ascontiguousarray(vals, dtype=np.float64),
        np.ascontiguousarray(luts, dtype=np.float64),
        np.ascontiguousarray(degen, dtype=np.uint8),
        np.ascontiguousarray(ty0, dtype=np.int32),
        np.ascontiguousarray(wy, dtype=np.float64),
        np.ascontiguousarray(tx0, dtype=np.int32),
        np.ascontiguousarray(wx, dtype=np.float64),
        int(tiles_y), int(tiles_x),
    ))


def erode(bits, offsets):
    return np.asarray(_impl.erode(
        np.ascontiguousarray(bits, dtype=np.uint8),
        np.ascontiguousarray(offsets, dtype=np.int32),
    )).astype(bool)


def dilate(bits, offsets):
    return np.asarray(_impl.dilate(
        np.ascontiguousarray(bits, dtype=np.uint8),
        np.ascontiguousarray(offsets, dtype=np.int32),
    )).astype(bool)


def largest_component(bits):
    return np.asarray(_impl.largest_component(
        np.ascontiguousarray(bits, dtype=np.uint8),
    )).astype(bool)
