"""Histogram equalization, plain and contrast-limited adaptive (CLAHE).

Both variants share the same conventions: gray levels are binned with
``min(floor(v * bins), bins - 1)``, the cumulative distribution includes
the pixel's own bin, and outputs are rescaled into the *global* value
range of the input image so enhancement never stretches past the data.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from falce import kernels
from falce.image import GrayImage, bin_index_map

#: Pass as ``clip_limit`` to disable contrast limiting entirely.
UNLIMITED_CLIP = math.inf


@dataclasses.dataclass(frozen=True)
class ClaheParams:
    """Tile grid and clipping configuration.

    ``clip_limit`` is a multiple of the mean bin height of a tile
    histogram; ``UNLIMITED_CLIP`` (infinity) disables clipping.
    """

    clip_limit: float = 2.0
    tiles_x: int = 8
    tiles_y: int = 8
    bins: int = 256

    def __post_init__(self):
        if not (self.clip_limit >= 1.0):
            raise ValueError("clip_limit must be >= 1 (or UNLIMITED_CLIP)")
        if self.tiles_x < 1 or self.tiles_y < 1:
            raise ValueError("tile counts must be positive")
        if self.bins < 2:
            raise ValueError("bins must be at least 2")


def clip_histogram(counts: np.ndarray, cap) -> np.ndarray:
    """Clip histogram bins at ``cap`` and redistribute the excess.

    The excess is spread uniformly; redistribution that pushes a bin back
    over the cap is re-collected and spread again.  A remainder smaller
    than the bin count goes to the lowest-index bins, one each.  The
    total count is conserved exactly (integer arithmetic throughout).

    When the total exceeds ``cap`` times the bin count, no clipped
    histogram can hold it: every bin is filled to the cap and the
    unavoidable overflow is spread uniformly on top (remainder again to
    the lowest bins).
    """
    h = np.asarray(counts, dtype=np.int64).copy()
    if math.isinf(cap):
        return h
    cap = int(cap)
    nbins = h.shape[0]
    excess = int((h - cap).clip(min=0).sum())
    np.minimum(h, cap, out=h)
    capacity = nbins * cap - int(h.sum())
    if excess > capacity:
        overflow = excess - capacity
        h[:] = cap + overflow // nbins
        h[: overflow % nbins] += 1
        return h
    while excess > 0:
        share = excess // nbins
        if share == 0:
            h[:excess] += 1
            break
        h += share
        excess -= share * nbins
        over = (h - cap).clip(min=0)
        spill = int(over.sum())
        if spill:
            excess += spill
            np.minimum(h, cap, out=h)
    return h


def _transfer_lut(counts: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Monotone map from bin index to output gray level via the CDF."""
    cdf = np.cumsum(counts) / counts.sum()
    return lo + (hi - lo) * cdf


def equalize_hist(img: GrayImage, bins: int = 256) -> GrayImage:
    """Global histogram equalization into the image's own value range.

    An image occupying a single bin is returned unchanged.
    """
    if bins < 2:
        raise ValueError("bins must be at least 2")
    px = img.pixels
    idx = bin_index_map(px, bins)
    counts = np.bincount(idx.ravel(), minlength=bins).astype(np.int64)
    if int(np.count_nonzero(counts)) <= 1:
        return img
    lut = _transfer_lut(counts, float(px.min()), float(px.max()))
    out = np.clip(lut[idx], 0.0, 1.0)
    return GrayImage(out, img.source_bit_depth)


def tile_bounds(extent: int, tiles: int) -> np.ndarray:
    """Cut points splitting ``extent`` pixels into ``tiles`` near-equal tiles."""
    return (np.arange(tiles + 1, dtype=np.int64) * extent) // tiles


def _axis_blend(extent: int, bounds: np.ndarray):
    """Per-pixel lower tile index and upper-tile weight along one axis."""
    tiles = len(bounds) - 1
    pos = np.arange(extent, dtype=np.float64)
    if tiles == 1:
        return np.zeros(extent, dtype=np.int32), np.zeros(extent, dtype=np.float64)
    centers = (bounds[:-1] + bounds[1:] - 1) / 2.0
    lower = np.clip(np.searchsorted(centers, pos, side="right") - 1, 0, tiles - 2)
    w = (pos - centers[lower]) / (centers[lower + 1] - centers[lower])
    return lower.astype(np.int32), np.clip(w, 0.0, 1.0)


def clahe(img: GrayImage, params: ClaheParams = ClaheParams()) -> GrayImage:
    """Contrast-limited adaptive histogram equalization.

    Each tile gets its own clipped-histogram transfer function; every
    pixel blends the four surrounding tile functions bilinearly by its
    distance to their centres.  Tiles whose histogram occupies a single
    bin map pixels to themselves.
    """
    h, w = img.height, img.width
    if h < params.tiles_y or w < params.tiles_x:
        raise ValueError("image must be at least tiles_x x tiles_y pixels")
    px = img.pixels
    bins = params.bins
    idx = bin_index_map(px, bins)
    row_b = tile_bounds(h, params.tiles_y)
    col_b = tile_bounds(w, params.tiles_x)
    lo = float(px.min())
    hi = float(px.max())

    ntiles = params.tiles_y * params.tiles_x
    luts = np.zeros((ntiles, bins), dtype=np.float64)
    degen = np.zeros(ntiles, dtype=np.uint8)
    for ty in range(params.tiles_y):
        for tx in range(params.tiles_x):
            t = ty * params.tiles_x + tx
            tile_idx = idx[row_b[ty]:row_b[ty + 1], col_b[tx]:col_b[tx + 1]]
            counts = np.bincount(tile_idx.ravel(), minlength=bins).astype(np.int64)
            if int(np.count_nonzero(counts)) <= 1:
                degen[t] = 1
                continue
            if math.isinf(params.clip_limit):
                clipped = counts
            else:
                cap = max(1, int(math.floor(
                    params.clip_limit * int(counts.sum()) / bins + 1e-9)))
                clipped = clip_histogram(counts, cap)
            luts[t] = _transfer_lut(clipped, lo, hi)

    ty0, wy = _axis_blend(h, row_b)
    tx0, wx = _axis_blend(w, col_b)
    out = kernels.blend_tile_maps(idx, px, luts, degen, ty0, wy, tx0, wx,
                                  params.tiles_y, params.tiles_x)
    return GrayImage(out, img.source_bit_depth)
