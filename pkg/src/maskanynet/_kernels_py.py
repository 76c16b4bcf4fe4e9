"""Pure-numpy implementations of the hot per-sample kernels.

These define the reference semantics; the compiled extension in
``_kernels.pyx`` must match them bit-for-bit on float32 inputs.
"""

import numpy as np


def fill_blocks(img, cells, block, fill):
    """Return a copy of (C,H,W) ``img`` with every true cell set to ``fill``.

    ``cells`` is a (H/block, W/block) boolean map; block=1 means a
    pixel-granular mask.
    """
    mask = np.asarray(cells, dtype=bool)
    if block != 1:
        mask = np.repeat(np.repeat(mask, block, axis=0), block, axis=1)
    out = img.copy()
    out[:, mask] = np.asarray(fill, dtype=img.dtype)
    return out


def gather_blocks(img, rows, cols, block):
    """Stack the (C,block,block) content of each listed cell into (N,C,b,b)."""
    n = len(rows)
    c = img.shape[0]
    out = np.empty((n, c, block, block), dtype=img.dtype)
    for i in range(n):
        r = rows[i] * block
        s = cols[i] * block
        out[i] = img[:, r : r + block, s : s + block]
    return out


def scatter_blocks(canvas, patches, rows, cols, block):
    """Return a copy of ``canvas`` with each patch written at its cell."""
    out = canvas.copy()
    for i in range(len(rows)):
        r = rows[i] * block
        s = cols[i] * block
        out[:, r : r + block, s : s + block] = patches[i]
    return out


def paint_rect(mask, y0, y1, x0, x1):
    """Mark [y0:y1, x0:x1] in a uint8 map in place; return newly covered count."""
    region = mask[y0:y1, x0:x1]
    fresh = int((y1 - y0) * (x1 - x0) - int(region.sum()))
    region[:] = 1
    return fresh


def resize_bilinear(src, out_h, out_w):
    """Bilinear resize of a (C,h,w) array, half-pixel centers, edge-clamped.

    Accumulates in float64 and rounds once to the source dtype, so the
    compiled path can reproduce results exactly.
    """
    c, h, w = src.shape
    if (h, w) == (out_h, out_w):
        return src.copy()
    sy = np.maximum((np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5, 0.0)
    sx = np.maximum((np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5, 0.0)
    y0 = np.minimum(sy.astype(np.int64), h - 1)
    x0 = np.minimum(sx.astype(np.int64), w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (sy - y0)[None, :, None]
    fx = (sx - x0)[None, None, :]
    v = src.astype(np.float64)
    top = v[:, y0][:, :, x0] * (1.0 - fx) + v[:, y0][:, :, x1] * fx
    bot = v[:, y1][:, :, x0] * (1.0 - fx) + v[:, y1][:, :, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    return out.astype(src.dtype)
