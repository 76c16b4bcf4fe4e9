"""Mask-region reuse: extract the original content at masked positions and
stitch it into a compact image.

Patches are packed row-major, in ascending row-major order of their source
positions, onto the smallest near-square block canvas (c = ceil(sqrt(N)),
r = ceil(N/c)); trailing slots are zero. ``scatter_back`` inverts the
stitching for round-trip checking. All functions are pure.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from maskanynet import backend
from maskanynet.errors import DimensionError, EmptyMaskError, LayoutError
from maskanynet.masking import DEFAULT_BLOCK_SIZE, snap_to_blocks


@dataclass
class RegionPatch:
    """Original-image content of one masked block and its cell coordinates."""

    pixels: np.ndarray  # (C, b, b)
    position: tuple  # (row, col) in the block grid


@dataclass
class ReuseImage:
    """Stitched masked-region content.

    ``layout`` lists source positions in slot order (row-major over the
    canvas); ``pad_count`` trailing slots are zero-filled.
    """

    pixels: np.ndarray  # (C, r*b, c*b)
    layout: list
    pad_count: int

    @property
    def grid_shape(self):
        n = len(self.layout)
        c = math.ceil(math.sqrt(n))
        return math.ceil(n / c), c

    @property
    def block_size(self):
        return self.pixels.shape[1] // self.grid_shape[0]


def extract_regions(image, spec, snap_block_size=DEFAULT_BLOCK_SIZE):
    """One RegionPatch per masked cell, ascending row-major by position.

    Content comes from ``image`` (the original, not the masked one). A
    pixel-granular spec is snapped to its bounding ``snap_block_size``
    cells first, and only the actually-masked pixels keep content (the
    rest of each bounding block is zero), so the stitched image carries
    the irregular mask's structural deviations instead of leaking visible
    pixels into the reuse branch.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[1] != spec.height or image.shape[2] != spec.width:
        raise DimensionError(
            f"image shape {image.shape} incompatible with spec ({spec.height},{spec.width})"
        )
    if spec.block_size == 1:
        image = np.ascontiguousarray(np.where(spec.grid[None, :, :], image, 0))
        spec = snap_to_blocks(spec, snap_block_size)
    if spec.masked_count == 0:
        raise EmptyMaskError("mask has no masked cells")
    rows, cols = spec.masked_cells()
    stack = backend.gather_blocks(image, rows, cols, spec.block_size)
    return [
        RegionPatch(pixels=stack[i], position=(int(rows[i]), int(cols[i])))
        for i in range(len(rows))
    ]


def compose_reuse(patches, block_size):
    """Pack patches row-major onto the smallest near-square block canvas."""
    if not patches:
        raise EmptyMaskError("no patches to compose")
    shape = patches[0].pixels.shape
    if shape[1:] != (block_size, block_size):
        raise DimensionError(f"patch shape {shape} does not match block {block_size}")
    for p in patches:
        if p.pixels.shape != shape:
            raise DimensionError("patches have mixed shapes")
    n = len(patches)
    c = math.ceil(math.sqrt(n))
    r = math.ceil(n / c)
    stack = np.stack([p.pixels for p in patches])
    slots = np.arange(n, dtype=np.int64)
    canvas = np.zeros((shape[0], r * block_size, c * block_size), dtype=stack.dtype)
    pixels = backend.scatter_blocks(canvas, stack, slots // c, slots % c, block_size)
    return ReuseImage(pixels=pixels, layout=[p.position for p in patches], pad_count=r * c - n)


def scatter_back(reuse, spec, canvas):
    """Write each stitched patch back to its source position on ``canvas``.

    With ``canvas`` = the masked image's pixels the result equals the
    original image bit-exactly. For a pixel-granular spec only the masked
    pixels are written (matching what extraction kept).
    """
    canvas = np.asarray(canvas)
    if canvas.ndim != 3 or canvas.shape[1] != spec.height or canvas.shape[2] != spec.width:
        raise DimensionError(
            f"canvas shape {canvas.shape} incompatible with spec ({spec.height},{spec.width})"
        )
    b = reuse.block_size
    pixel_mask = None
    if spec.block_size == 1:
        pixel_mask = spec.grid
        spec = snap_to_blocks(spec, b)
    if spec.block_size != b:
        raise LayoutError(f"reuse block {b} != spec block {spec.block_size}")
    rows, cols = spec.masked_cells()
    if [(int(r), int(c)) for r, c in zip(rows, cols)] != [tuple(p) for p in reuse.layout]:
        raise LayoutError("reuse layout does not match the mask's cells")
    n = len(reuse.layout)
    _, cc = reuse.grid_shape
    slots = np.arange(n, dtype=np.int64)
    stack = backend.gather_blocks(reuse.pixels, slots // cc, slots % cc, b)
    out = backend.scatter_blocks(canvas, stack, rows, cols, b)
    if pixel_mask is not None:
        out = np.where(pixel_mask[None, :, :], out, canvas)
    return out


def resize_to(reuse, target):
    """Bilinear resize (half-pixel centers) to (H, W); exact copy if equal."""
    h, w = int(target[0]), int(target[1])
    if h <= 0 or w <= 0:
        raise DimensionError(f"target dims ({h},{w}) must be positive")
    pixels = reuse.pixels if isinstance(reuse, ReuseImage) else np.asarray(reuse)
    if pixels.ndim != 3:
        raise DimensionError("expected a (C,H,W) array")
    return backend.resize_bilinear(pixels, h, w)


def export_reuse(reuse, path_prefix):
    """Write a lossless PNG plus a sidecar text record of the layout."""
    from PIL import Image

    pixels = reuse.pixels
    if pixels.dtype != np.uint8:
        pixels = np.clip(pixels, 0.0, 1.0)
        pixels = np.rint(pixels * 255.0).astype(np.uint8)
    arr = np.transpose(pixels, (1, 2, 0))
    if arr.shape[2] == 1:
        arr = arr[:, :, 0]
    img_path = f"{path_prefix}.png"
    meta_path = f"{path_prefix}.json"
    Image.fromarray(arr).save(img_path)
    with open(meta_path, "w") as fh:
        json.dump(
            {
                "layout": [list(p) for p in reuse.layout],
                "pad_count": reuse.pad_count,
                "block_size": reuse.block_size,
            },
            fh,
            sort_keys=True,
        )
    return img_path, meta_path
