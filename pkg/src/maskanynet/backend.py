"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly and the input
is a C-contiguous float32 array (the hot case in the training pipeline);
everything else takes the generic numpy path. Set MASKANYNET_PURE_PY=1 to
force the fallback.
"""

import os

import numpy as np

from maskanynet import _kernels_py as _py

if os.environ.get("MASKANYNET_PURE_PY") == "1":
    _ext = None
else:
    try:
        from maskanynet import _kernels as _ext
    except ImportError:
        _ext = None

HAVE_COMPILED = _ext is not None


def backend_name():
    return "compiled" if HAVE_COMPILED else "numpy"


def _fast(arr):
    return HAVE_COMPILED and arr.dtype == np.float32 and arr.flags.c_contiguous


def fill_blocks(img, cells, block, fill):
    if _fast(img):
        return _ext.fill_blocks(img, np.ascontiguousarray(cells, dtype=np.uint8), block, float(fill))
    return _py.fill_blocks(img, cells, block, fill)


def gather_blocks(img, rows, cols, block):
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    if _fast(img):
        return _ext.gather_blocks(img, rows, cols, block)
    return _py.gather_blocks(img, rows, cols, block)


def scatter_blocks(canvas, patches, rows, cols, block):
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    if _fast(canvas) and patches.dtype == np.float32:
        return _ext.scatter_blocks(canvas, np.ascontiguousarray(patches), rows, cols, block)
    return _py.scatter_blocks(canvas, patches, rows, cols, block)


def paint_rect(mask, y0, y1, x0, x1):
    if HAVE_COMPILED and mask.dtype == np.uint8 and mask.flags.c_contiguous:
        return _ext.paint_rect(mask, y0, y1, x0, x1)
    return _py.paint_rect(mask, y0, y1, x0, x1)


def resize_bilinear(src, out_h, out_w):
    if _fast(src):
        return _ext.resize_bilinear(src, out_h, out_w)
    return _py.resize_bilinear(src, out_h, out_w)
