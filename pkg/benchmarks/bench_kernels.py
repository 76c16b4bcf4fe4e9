#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Runs each hot kernel at training-pipeline sizes and prints per-call times
plus an end-to-end mask+reuse pipeline comparison. The two paths must be
bit-identical, which is asserted along the way.

Usage: python3 benchmarks/bench_kernels.py [--repeats 2000]
"""

import argparse
import time

import numpy as np

from maskanynet import _kernels_py as py
from maskanynet import backend
from maskanynet.masking import apply_mask, generate_combined_mask
from maskanynet.reuse import compose_reuse, extract_regions, resize_to

try:
    from maskanynet import _kernels as ext
except ImportError:
    ext = None


def timeit(fn, repeats):
    fn()  # warm
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats * 1e6  # us


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    img = rng.random((3, 64, 64), dtype=np.float32)
    cells = rng.random((4, 4)) < 0.25
    cells_u8 = cells.astype(np.uint8)
    rows, cols = np.nonzero(cells)
    rows, cols = rows.astype(np.int64), cols.astype(np.int64)
    patches = py.gather_blocks(img, rows, cols, 16)
    small = rng.random((3, 32, 32), dtype=np.float32)

    cases = [
        ("fill_blocks 64px/16",
         lambda: ext.fill_blocks(img, cells_u8, 16, 0.0),
         lambda: py.fill_blocks(img, cells, 16, 0.0)),
        ("gather_blocks x4",
         lambda: ext.gather_blocks(img, rows, cols, 16),
         lambda: py.gather_blocks(img, rows, cols, 16)),
        ("scatter_blocks x4",
         lambda: ext.scatter_blocks(img, patches, rows, cols, 16),
         lambda: py.scatter_blocks(img, patches, rows, cols, 16)),
        ("resize 32->64",
         lambda: ext.resize_bilinear(small, 64, 64),
         lambda: py.resize_bilinear(small, 64, 64)),
    ]
    print(f"{'kernel':24s} {'compiled':>12s} {'numpy':>12s} {'speedup':>9s}")
    for name, fast, slow in cases:
        assert np.array_equal(fast(), slow()), f"{name}: paths disagree"
        t_fast = timeit(fast, repeats)
        t_slow = timeit(slow, repeats)
        print(f"{name:24s} {t_fast:9.1f} us {t_slow:9.1f} us {t_slow / t_fast:8.1f}x")


def bench_pipeline(repeats):
    """Whole per-sample branch-input construction, both backends."""
    rng = np.random.default_rng(1)
    img = rng.random((3, 64, 64), dtype=np.float32)

    def run():
        spec = generate_combined_mask((64, 64), 16, 0.25, 7)
        masked = apply_mask(img, spec)
        stitched = compose_reuse(extract_regions(img, spec), 16)
        return masked.pixels, resize_to(stitched, (64, 64))

    t = timeit(run, max(repeats // 10, 1))
    print(f"mask+reuse pipeline ({backend.backend_name():8s}) {t:9.1f} us/sample")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=2000)
    args = parser.parse_args()
    print(f"active backend: {backend.backend_name()}")
    if ext is None:
        print("compiled extension unavailable; run `pip install -e .` with Cython first")
    else:
        bench_kernels(args.repeats)
    bench_pipeline(args.repeats)


if __name__ == "__main__":
    main()
