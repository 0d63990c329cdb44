"""Foreground extraction: Otsu thresholding, binary morphology, masking.

The breast-mask recipe is threshold -> morphological opening -> keep the
largest 8-connected component, always computed on the original image so
later enhancement cannot move the outline.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from falce import kernels
from falce.daod import BBox
from falce.errors import NumericsError
from falce.image import GrayImage, histogram

_OTSU_BINS = 256


@dataclasses.dataclass(frozen=True, eq=False)
class BinaryMask:
    """A boolean image; True marks foreground."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2 or bits.size == 0:
            raise ValueError("mask must be a non-empty 2-D array")
        bits = bits.copy()
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def area(self) -> int:
        return int(self.bits.sum())


@dataclasses.dataclass(frozen=True)
class StructElem:
    """Symmetric structuring element: a square or a Euclidean disk."""

    shape: str = "square"
    radius: int = 2

    def __post_init__(self):
        if self.shape not in ("square", "disk"):
            raise ValueError("shape must be 'square' or 'disk'")
        if self.radius < 1:
            raise ValueError("radius must be at least 1")

    def footprint(self) -> np.ndarray:
        r = self.radius
        dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
        if self.shape == "square":
            return np.ones((2 * r + 1, 2 * r + 1), dtype=bool)
        return (dy * dy + dx * dx) <= r * r

    def offsets(self) -> np.ndarray:
        """(K, 2) array of (dy, dx) displacements covered by the element."""
        r = self.radius
        fp = self.footprint()
        ys, xs = np.nonzero(fp)
        return np.stack([ys - r, xs - r], axis=1).astype(np.int32)


def otsu_threshold(img: GrayImage) -> float:
    """Threshold maximizing between-class variance over a 256-bin histogram.

    Returns the upper boundary of the winning bin as a value in
    ``[0, 1)``; ties resolve to the lowest bin index.  Raises
    :class:`NumericsError` when fewer than two gray levels are present.
    """
    counts = histogram(img, _OTSU_BINS).counts
    if int(np.count_nonzero(counts)) < 2:
        raise NumericsError(
            "otsu threshold undefined: image has fewer than two gray levels")
    n = int(counts.sum())
    levels = np.arange(_OTSU_BINS, dtype=np.int64)
    cum_n = np.cumsum(counts)
    cum_m = np.cumsum(counts * levels)
    w0 = cum_n[:-1].astype(np.float64)
    w1 = float(n) - w0
    m0 = cum_m[:-1].astype(np.float64)
    m_total = float(cum_m[-1])
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = m0 / w0
        mu1 = (m_total - m0) / w1
        bcv = w0 * w1 * (mu0 - mu1) ** 2
    bcv[(w0 == 0.0) | (w1 == 0.0)] = 0.0
    t = int(np.argmax(bcv))  # first maximum = lowest bin index
    return (t + 1) / _OTSU_BINS


def binarize(img: GrayImage, threshold: float) -> BinaryMask:
    """Mark pixels strictly greater than ``threshold`` as foreground."""
    if not (0.0 <= threshold < 1.0):
        raise ValueError("threshold must lie in [0, 1)")
    return BinaryMask(img.pixels > threshold)


def erode(mask: BinaryMask, se: StructElem) -> BinaryMask:
    """Erosion; pixels beyond the border count as background."""
    return BinaryMask(kernels.erode(mask.bits, se.offsets()))


def dilate(mask: BinaryMask, se: StructElem) -> BinaryMask:
    """Dilation by the same symmetric element."""
    return BinaryMask(kernels.dilate(mask.bits, se.offsets()))


def opening(mask: BinaryMask, se: StructElem) -> BinaryMask:
    """Erosion followed by dilation; removes speckle smaller than ``se``."""
    return dilate(erode(mask, se), se)


def largest_component(mask: BinaryMask) -> BinaryMask:
    """Keep only the largest 8-connected foreground component.

    Area ties go to the component whose first pixel in row-major order
    comes earliest.  An empty mask stays empty.
    """
    return BinaryMask(kernels.largest_component(mask.bits))


def breast_mask(img: GrayImage, se: StructElem = StructElem()) -> BinaryMask:
    """Foreground mask: Otsu binarization, opening, largest component."""
    rough = binarize(img, otsu_threshold(img))
    return largest_component(opening(rough, se))


def apply_mask(img: GrayImage, mask: BinaryMask) -> GrayImage:
    """Zero out everything outside the mask."""
    if (mask.height, mask.width) != (img.height, img.width):
        raise ValueError("mask and image dimensions differ")
    return GrayImage(np.where(mask.bits, img.pixels, 0.0), img.source_bit_depth)


def roi_crop(img: GrayImage, margin: int = 0,
             se: StructElem = StructElem()) -> tuple[GrayImage, BBox]:
    """Crop to the bounding box of the breast mask, padded by ``margin``.

    Returns the cropped image and the half-open box in original
    coordinates.  Raises :class:`NumericsError` when the mask is empty.
    """
    if margin < 0:
        raise ValueError("margin must be non-negative")
    mask = breast_mask(img, se)
    ys, xs = np.nonzero(mask.bits)
    if ys.size == 0:
        raise NumericsError("roi undefined: breast mask is empty")
    y1 = max(0, int(ys.min()) - margin)
    y2 = min(img.height, int(ys.max()) + 1 + margin)
    x1 = max(0, int(xs.min()) - margin)
    x2 = min(img.width, int(xs.max()) + 1 + margin)
    crop = GrayImage(img.pixels[y1:y2, x1:x2], img.source_bit_depth)
    return crop, BBox(float(x1), float(y1), float(x2), float(y2))
