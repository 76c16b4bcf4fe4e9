"""Compiled-vs-fallback kernel equivalence.

The compiled extension must be bit-identical to the numpy reference on
float32 inputs; everything routes through the fallback when the extension
is absent (MASKANYNET_PURE_PY=1) or the dtype is not float32.
"""

import numpy as np
import pytest

from maskanynet import _kernels_py as py
from maskanynet import backend

pytestmark = pytest.mark.skipif(
    not backend.HAVE_COMPILED, reason="compiled kernels not built"
)

from maskanynet import _kernels as ext  # noqa: E402  (guarded by skipif)


@pytest.fixture()
def img(rng):
    return rng.random((3, 64, 64), dtype=np.float32)


def test_fill_blocks_bit_identical(rng, img):
    cells = rng.random((4, 4)) < 0.4
    a = ext.fill_blocks(img, cells.astype(np.uint8), 16, 0.25)
    b = py.fill_blocks(img, cells, 16, 0.25)
    assert np.array_equal(a, b)


def test_fill_blocks_pixel_granularity(rng, img):
    cells = rng.random((64, 64)) < 0.2
    a = ext.fill_blocks(img, cells.astype(np.uint8), 1, 0.0)
    b = py.fill_blocks(img, cells, 1, 0.0)
    assert np.array_equal(a, b)


def test_gather_scatter_bit_identical(rng, img):
    rows = np.array([0, 1, 3], dtype=np.int64)
    cols = np.array([2, 0, 3], dtype=np.int64)
    ga = ext.gather_blocks(img, rows, cols, 16)
    gb = py.gather_blocks(img, rows, cols, 16)
    assert np.array_equal(ga, gb)
    canvas = rng.random((3, 64, 64), dtype=np.float32)
    assert np.array_equal(
        ext.scatter_blocks(canvas, ga, rows, cols, 16),
        py.scatter_blocks(canvas, gb, rows, cols, 16),
    )


def test_paint_rect_counts_agree(rng):
    ma = np.zeros((40, 40), dtype=np.uint8)
    mb = np.zeros((40, 40), dtype=np.uint8)
    for _ in range(20):
        y0, x0 = rng.integers(0, 30, 2)
        h, w = rng.integers(1, 10, 2)
        assert ext.paint_rect(ma, y0, y0 + h, x0, x0 + w) == py.paint_rect(
            mb, y0, y0 + h, x0, x0 + w
        )
    assert np.array_equal(ma, mb)


@pytest.mark.parametrize("shape,target", [((3, 16, 16), (64, 64)), ((3, 40, 24), (31, 57)),
                                          ((1, 7, 7), (7, 7)), ((3, 64, 64), (32, 32))])
def test_resize_bit_identical(rng, shape, target):
    src = rng.random(shape, dtype=np.float32)
    a = ext.resize_bilinear(src, *target)
    b = py.resize_bilinear(src, *target)
    assert a.dtype == b.dtype == np.float32
    assert np.array_equal(a, b)


def test_backend_routes_float64_to_fallback(rng):
    img = rng.random((3, 32, 32))  # float64
    cells = np.zeros((4, 4), dtype=bool)
    cells[1, 1] = True
    out = backend.fill_blocks(img, cells, 8, 0.0)
    assert out.dtype == np.float64
    assert (out[:, 8:16, 8:16] == 0).all()


def test_backend_reports_name():
    assert backend.backend_name() in ("compiled", "numpy")


def test_pure_py_env_forces_fallback():
    import subprocess
    import sys

    code = (
        "import maskanynet; print(maskanynet.backend_name())"
    )
    out = subprocess.run(
        [sys.executable, "-c", code],
        capture_output=True, text=True,
        env={"PATH": "/usr/bin:/bin", "MASKANYNET_PURE_PY": "1"},
    )
    assert out.stdout.strip() == "numpy"
