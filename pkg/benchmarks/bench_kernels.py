"""Timing comparison of the compiled and pure-Python kernel backends.

Runs a handful of representative operations at working resolution under
each backend and prints a table of best-of-N wall times.  The backends
share one dispatch seam (``falce.kernels._impl``, normally bound once at
import); the benchmark rebinds it between passes so both are measured in
a single process on identical inputs.

Usage::

    python3 benchmarks/bench_kernels.py [--repeats N] [--size PX]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from falce import _reference, kernels
from falce.enhance import ClaheParams, clahe
from falce.image import GrayImage, resize
from falce.pipeline import FalceConfig, falce_source
from falce.segment import BinaryMask, StructElem, largest_component, opening

try:
    from falce import _native
except ImportError:
    _native = None


def _inputs(size: int):
    rng = np.random.default_rng(42)
    yy, xx = np.mgrid[0:size, 0:size]
    c = size / 2.0
    body = ((yy - c) ** 2 + (xx - c * 0.8) ** 2) < (0.3 * size * size)
    vals = np.where(body, 0.7, 0.06) + 0.05 * rng.random((size, size))
    phantom = GrayImage(np.clip(vals, 0.0, 1.0))
    noise = GrayImage(rng.integers(0, 256, size=(size, size)) / 255.0)
    speckled = body.copy()
    speckled[rng.random((size, size)) < 0.01] = True
    return {
        "resize 512->%d" % size: lambda img=resize(phantom, 512, 512):
            resize(img, size, size),
        "clahe 8x8 tiles": lambda: clahe(noise, ClaheParams()),
        "opening disk r=2": lambda m=BinaryMask(speckled),
            se=StructElem("disk", 2): opening(m, se),
        "largest component": lambda m=BinaryMask(speckled):
            largest_component(m),
        "full source pipeline": lambda: falce_source(phantom, noise,
                                                     FalceConfig()),
    }


def _best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repetitions per operation (best wins)")
    parser.add_argument("--size", type=int, default=640,
                        help="working image size in pixels per side")
    args = parser.parse_args(argv)

    backends = [("reference", _reference)]
    if _native is not None:
        backends.insert(0, ("native", _native))
    else:
        print("note: compiled backend not importable; timing reference only")

    results = {}
    saved = kernels._impl
    try:
        for name, impl in backends:
            kernels._impl = impl
            ops = _inputs(args.size)
            for op, fn in ops.items():
                fn()  # warm-up
                results.setdefault(op, {})[name] = _best_of(fn, args.repeats)
    finally:
        kernels._impl = saved

    width = max(len(op) for op in results) + 2
    header = f"{'operation':<{width}}" + "".join(
        f"{name + ' (ms)':>16}" for name, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for op, times in results.items():
        row = f"{op:<{width}}" + "".join(
            f"{times[name] * 1000:>16.2f}" for name, _ in backends)
        if len(backends) == 2:
            row += f"{times['reference'] / times['native']:>9.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
