"""Shared fixtures and helpers for the test suite."""
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from falce.image import GrayImage


def random_image(rng: np.random.Generator, height: int, width: int,
                 depth: int = 8) -> GrayImage:
    """Uniform-random image on the 8-bit (or 16-bit) grid."""
    maxval = 2 ** depth - 1
    codes = rng.integers(0, maxval + 1, size=(height, width))
    return GrayImage(codes / maxval, source_bit_depth=depth)


def smooth_image(rng: np.random.Generator, height: int, width: int) -> GrayImage:
    """Low-frequency test image: a sum of random 2-D cosines in [0, 1]."""
    yy, xx = np.mgrid[0:height, 0:width]
    field = np.zeros((height, width), dtype=np.float64)
    for _ in range(4):
        fy, fx = rng.uniform(0.2, 3.0, size=2)
        ph = rng.uniform(0.0, 2.0 * np.pi)
        field += np.cos(2.0 * np.pi * (fy * yy / height + fx * xx / width) + ph)
    field -= field.min()
    peak = field.max()
    if peak > 0.0:
        field /= peak
    return GrayImage(field)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
