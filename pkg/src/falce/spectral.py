"""Fourier analysis of images and low-frequency amplitude transfer.

The discrete transform is unnormalized in the forward direction (the
inverse carries the ``1/(H*W)`` factor).  A spectrum can be laid out in
standard order (zero frequency at index ``[0, 0]``) or centred; the
``centered`` flag tracks which.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from falce.image import GrayImage


@dataclasses.dataclass(frozen=True, eq=False)
class Spectrum:
    """Complex DFT coefficients of a single-channel image."""

    coeffs: np.ndarray
    centered: bool = False

    def __post_init__(self):
        arr = np.asarray(self.coeffs, dtype=np.complex128)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("spectrum must be a non-empty 2-D array")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    @property
    def height(self) -> int:
        return self.coeffs.shape[0]

    @property
    def width(self) -> int:
        return self.coeffs.shape[1]


@dataclasses.dataclass(frozen=True, eq=False)
class BetaMask:
    """Centred rectangle selecting the low-frequency block of a spectrum."""

    beta: float
    height: int
    width: int
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.shape != (self.height, self.width):
            raise ValueError("mask bits do not match the declared shape")
        bits = bits.copy()
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)


def fft2(img: GrayImage) -> Spectrum:
    """Forward 2-D DFT (unnormalized), standard layout."""
    return Spectrum(np.fft.fft2(img.pixels), centered=False)


def ifft2(spec: Spectrum) -> GrayImage:
    """Inverse 2-D DFT back to an image.

    A centred spectrum is unshifted first.  The real part is clamped to
    ``[0, 1]``; the imaginary residue of round-tripped data is discarded.
    """
    coeffs = spec.coeffs
    if spec.centered:
        coeffs = np.fft.ifftshift(coeffs)
    values = np.fft.ifft2(coeffs).real
    return GrayImage(np.clip(values, 0.0, 1.0), 16)


def shift_center(spec: Spectrum) -> Spectrum:
    """Move the zero-frequency coefficient to the array centre."""
    if spec.centered:
        raise ValueError("spectrum is already centred")
    return Spectrum(np.fft.fftshift(spec.coeffs), centered=True)


def unshift_center(spec: Spectrum) -> Spectrum:
    """Undo :func:`shift_center`, restoring standard layout."""
    if not spec.centered:
        raise ValueError("spectrum is not centred")
    return Spectrum(np.fft.ifftshift(spec.coeffs), centered=False)


def amplitude(spec: Spectrum) -> np.ndarray:
    """Magnitude of each coefficient."""
    return np.abs(spec.coeffs)


def phase(spec: Spectrum) -> np.ndarray:
    """Argument of each coefficient, in ``(-pi, pi]``."""
    return np.angle(spec.coeffs)


def beta_mask(height: int, width: int, beta: float) -> BetaMask:
    """Build the centred low-frequency selector for a ``height x width`` spectrum.

    Per axis with extent ``d`` and centre ``c = floor(d / 2)``, rows
    ``[c - floor(beta * d / 2), c + ceil(beta * d / 2))`` are selected
    (clamped to the array).  ``beta = 1`` covers everything; a tiny
    ``beta`` still keeps the zero-frequency coefficient.
    """
    if not (0.0 < beta <= 1.0):
        raise ValueError("beta must lie in (0, 1]")
    if height < 1 or width < 1:
        raise ValueError("mask dimensions must be positive")
    eps = 1e-9  # absorb float dust so exact multiples stay exact

    def _span(d: int):
        c = d // 2
        t = beta * d / 2.0
        lo = int(math.floor(t + eps))
        hi = max(1, int(math.ceil(t - eps)))
        return max(0, c - lo), min(d, c + hi)

    r0, r1 = _span(height)
    c0, c1 = _span(width)
    bits = np.zeros((height, width), dtype=bool)
    bits[r0:r1, c0:c1] = True
    return BetaMask(beta=beta, height=height, width=width, bits=bits)


def fda_transfer(src: GrayImage, tgt: GrayImage, beta: float) -> GrayImage:
    """Swap the low-frequency amplitude block of ``src`` with ``tgt``'s.

    The output keeps the full phase of ``src`` and the amplitude of
    ``tgt`` inside the centred ``beta`` rectangle (its own elsewhere),
    then inverts back to pixel space and clamps to ``[0, 1]``.
    """
    if (src.height, src.width) != (tgt.height, tgt.width):
        raise ValueError("source and target images must share dimensions")
    src_spec = shift_center(fft2(src))
    tgt_spec = shift_center(fft2(tgt))
    amp_src = amplitude(src_spec)
    amp_tgt = amplitude(tgt_spec)
    pha_src = phase(src_spec)
    mask = beta_mask(src.height, src.width, beta).bits
    amp = np.where(mask, amp_tgt, amp_src)
    mixed = Spectrum(amp * np.exp(1j * pha_src), centered=True)
    out = ifft2(mixed)
    return GrayImage(out.pixels, src.source_bit_depth)
