# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled float32 kernels for the per-sample masking/reuse hot path.

Semantics (including float rounding) must stay bit-identical to
``_kernels_py``; the build disables FP contraction for that reason.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def fill_blocks(float[:, :, ::1] img, unsigned char[:, ::1] cells, int block, float fill):
    out_arr = np.asarray(img).copy()
    cdef float[:, :, ::1] out = out_arr
    cdef Py_ssize_t c = img.shape[0]
    cdef Py_ssize_t gh = cells.shape[0], gw = cells.shape[1]
    cdef Py_ssize_t ch, gi, gj, i, j, r0, c0
    for gi in range(gh):
        for gj in range(gw):
            if cells[gi, gj]:
                r0 = gi * block
                c0 = gj * block
                for ch in range(c):
                    for i in range(r0, r0 + block):
                        for j in range(c0, c0 + block):
                            out[ch, i, j] = fill
    return out_arr


def gather_blocks(float[:, :, ::1] img, long[::1] rows, long[::1] cols, int block):
    cdef Py_ssize_t n = rows.shape[0], c = img.shape[0]
    out_arr = np.empty((n, c, block, block), dtype=np.float32)
    cdef float[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t k, ch, i, j, r0, c0
    for k in range(n):
        r0 = rows[k] * block
        c0 = cols[k] * block
        for ch in range(c):
            for i in range(block):
                for j in range(block):
                    out[k, ch, i, j] = img[ch, r0 + i, c0 + j]
    return out_arr


def scatter_blocks(float[:, :, ::1] canvas, float[:, :, :, ::1] patches,
                   long[::1] rows, long[::1] cols, int block):
    out_arr = np.asarray(canvas).copy()
    cdef float[:, :, ::1] out = out_arr
    cdef Py_ssize_t n = rows.shape[0], c = canvas.shape[0]
    cdef Py_ssize_t k, ch, i, j, r0, c0
    for k in range(n):
        r0 = rows[k] * block
        c0 = cols[k] * block
        for ch in range(c):
            for i in range(block):
                for j in range(block):
                    out[ch, r0 + i, c0 + j] = patches[k, ch, i, j]
    return out_arr


def paint_rect(unsigned char[:, ::1] mask, Py_ssize_t y0, Py_ssize_t y1,
               Py_ssize_t x0, Py_ssize_t x1):
    cdef Py_ssize_t i, j
    cdef Py_ssize_t fresh = 0
    for i in range(y0, y1):
        for j in range(x0, x1):
            if mask[i, j] == 0:
                mask[i, j] = 1
                fresh += 1
    return fresh


def resize_bilinear(float[:, :, ::1] src, int out_h, int out_w):
    cdef Py_ssize_t c = src.shape[0], h = src.shape[1], w = src.shape[2]
    if h == out_h and w == out_w:
        return np.asarray(src).copy()
    out_arr = np.empty((c, out_h, out_w), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr
    cdef double scale_y = <double>h / out_h
    cdef double scale_x = <double>w / out_w
    cdef Py_ssize_t ch, i, j, y0, y1, x0, x1
    cdef double sy, sx, fy, fx, top, bot
    for i in range(out_h):
        sy = (i + 0.5) * scale_y - 0.5
        if sy < 0.0:
            sy = 0.0
        y0 = <Py_ssize_t>sy
        if y0 > h - 1:
            y0 = h - 1
        y1 = y0 + 1 if y0 < h - 1 else y0
        fy = sy - y0
        for j in range(out_w):
            sx = (j + 0.5) * scale_x - 0.5
            if sx < 0.0:
                sx = 0.0
            x0 = <Py_ssize_t>sx
            if x0 > w - 1:
                x0 = w - 1
            x1 = x0 + 1 if x0 < w - 1 else x0
            fx = sx - x0
            for ch in range(c):
                top = <double>src[ch, y0, x0] * (1.0 - fx) + <double>src[ch, y0, x1] * fx
                bot = <double>src[ch, y1, x0] * (1.0 - fx) + <double>src[ch, y1, x1] * fx
                out[ch, i, j] = <float>(top * (1.0 - fy) + bot * fy)
    return out_arr
