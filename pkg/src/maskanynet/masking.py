"""Block-structured image masking.

Three base strategies plus their combination:

* ``patch``  - a seeded uniform-random choice of grid cells
* ``grid``   - a deterministic periodic pattern (top-left cell of every
  k x k super-cell), usable as a uniform spatial subsample
* ``random`` - a union of seeded random rectangles at pixel granularity
* ``combined`` - per call, a fair coin picks patch or grid

Masks are block-granular boolean maps carried by :class:`MaskSpec`;
``apply_mask`` realizes them on an image. Every operation is a pure
function of (inputs, seed), so concurrent callers need no locking.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from maskanynet import backend
from maskanynet.errors import DimensionError, EmptyMaskError, RangeError, UnsupportedRatioError

STRATEGIES = ("patch", "grid", "random", "combined")

# Defaults used across the library: 16 px blocks suit 64-224 px inputs
# (use 8 px for 32 px inputs), and a 25% mask area is the sweet spot.
DEFAULT_BLOCK_SIZE = 16
DEFAULT_RATIO = 0.25


@dataclass(eq=False)
class MaskSpec:
    """A block-granular occlusion map plus the settings that produced it.

    ``grid`` has shape (height/block_size, width/block_size); true means
    masked. block_size == 1 marks a pixel-granular (random-strategy) map.
    """

    height: int
    width: int
    block_size: int
    grid: np.ndarray
    strategy: str
    ratio: float
    seed: int = 0

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0 or self.block_size <= 0:
            raise DimensionError("mask dims and block size must be positive")
        if self.height % self.block_size or self.width % self.block_size:
            raise DimensionError(
                f"dims ({self.height},{self.width}) not divisible by block {self.block_size}"
            )
        self.grid = np.asarray(self.grid, dtype=bool)
        want = (self.height // self.block_size, self.width // self.block_size)
        if self.grid.shape != want:
            raise DimensionError(f"grid shape {self.grid.shape} != {want}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")

    def __eq__(self, other):
        if not isinstance(other, MaskSpec):
            return NotImplemented
        return (
            (self.height, self.width, self.block_size, self.strategy, self.seed) ==
            (other.height, other.width, other.block_size, other.strategy, other.seed)
            and self.ratio == other.ratio
            and np.array_equal(self.grid, other.grid)
        )

    @property
    def cell_count(self):
        return self.grid.size

    @property
    def masked_count(self):
        return int(self.grid.sum())

    def masked_cells(self):
        """(rows, cols) of masked cells in ascending row-major order."""
        rows, cols = np.nonzero(self.grid)
        return rows.astype(np.int64), cols.astype(np.int64)

    def coverage(self):
        """Masked fraction of the image area."""
        return self.masked_count / self.cell_count

    def to_record(self):
        """Plain-dict form with a run-length-encoded grid; round-trips exactly."""
        flat = self.grid.ravel()
        runs = []
        if flat.size:
            changes = np.flatnonzero(np.diff(flat.view(np.int8)))
            edges = np.concatenate(([0], changes + 1, [flat.size]))
            runs = np.diff(edges).tolist()
        return {
            "version": 1,
            "height": self.height,
            "width": self.width,
            "block_size": self.block_size,
            "strategy": self.strategy,
            "ratio": self.ratio,
            "seed": self.seed,
            "first": int(flat[0]) if flat.size else 0,
            "runs": runs,
        }

    @classmethod
    def from_record(cls, rec):
        gh = rec["height"] // rec["block_size"]
        gw = rec["width"] // rec["block_size"]
        flat = np.empty(gh * gw, dtype=bool)
        value = bool(rec["first"])
        pos = 0
        for run in rec["runs"]:
            flat[pos : pos + run] = value
            pos += run
            value = not value
        if pos != flat.size:
            raise ValueError("run-length data does not cover the grid")
        return cls(
            height=rec["height"],
            width=rec["width"],
            block_size=rec["block_size"],
            grid=flat.reshape(gh, gw),
            strategy=rec["strategy"],
            ratio=rec["ratio"],
            seed=rec["seed"],
        )

    def to_text(self):
        return json.dumps(self.to_record(), sort_keys=True)

    @classmethod
    def from_text(cls, text):
        return cls.from_record(json.loads(text))


@dataclass
class MaskedImage:
    """An image with the cells of ``spec`` overwritten by ``fill_value``."""

    pixels: np.ndarray
    spec: MaskSpec
    fill_value: float = 0.0


def _check_block_dims(dims, block_size):
    h, w = dims
    if h <= 0 or w <= 0 or block_size <= 0:
        raise DimensionError("dims and block size must be positive")
    if h % block_size or w % block_size:
        raise DimensionError(f"dims ({h},{w}) not divisible by block {block_size}")
    return h, w


def generate_patch_mask(dims, block_size, ratio, seed):
    """Mask exactly round(ratio * cells) cells chosen uniformly at random.

    Reproducible for equal seeds; cells are drawn without replacement.
    """
    h, w = _check_block_dims(dims, block_size)
    if not 0.0 <= ratio <= 1.0:
        raise RangeError(f"ratio {ratio} outside [0, 1]")
    gh, gw = h // block_size, w // block_size
    cells = gh * gw
    n = round(ratio * cells)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(cells, size=n, replace=False)
    grid = np.zeros(cells, dtype=bool)
    grid[chosen] = True
    return MaskSpec(h, w, block_size, grid.reshape(gh, gw), "patch", float(ratio), int(seed))


def _grid_k(ratio):
    if not 0.0 < ratio <= 1.0:
        raise RangeError(f"ratio {ratio} outside (0, 1]")
    k = max(1, round(math.sqrt(1.0 / ratio)))
    if abs(1.0 / (k * k) - ratio) > 1e-9:
        lo = max(1, math.floor(math.sqrt(1.0 / ratio)))
        raise UnsupportedRatioError(ratio, sorted({max(1, lo), lo + 1}))
    return k


def grid_ratio_supported(ratio):
    try:
        _grid_k(ratio)
    except (RangeError, UnsupportedRatioError):
        return False
    return True


def generate_grid_mask(dims, block_size, ratio):
    """Deterministic periodic mask: the top-left cell of each k x k super-cell.

    ``ratio`` must be 1/k^2 and k must divide the cell grid, so the masked
    fraction is exact and the stitched reuse image is a uniform spatial
    downsample of the original.
    """
    h, w = _check_block_dims(dims, block_size)
    k = _grid_k(ratio)
    gh, gw = h // block_size, w // block_size
    if gh % k or gw % k:
        raise DimensionError(
            f"cell grid ({gh},{gw}) not divisible by k={k}; pick dims or ratio accordingly"
        )
    rows = np.arange(gh) % k == 0
    cols = np.arange(gw) % k == 0
    grid = rows[:, None] & cols[None, :]
    return MaskSpec(h, w, block_size, grid, "grid", float(ratio), 0)


def generate_random_mask(dims, ratio, seed, size_range):
    """Union seeded random axis-aligned rectangles until coverage >= ratio.

    The result is a pixel-granular spec (block_size 1). Final coverage lies
    in [ratio, ratio + max_side^2 / (H*W)] because each added rectangle can
    overshoot by at most its own area.
    """
    h, w = dims
    if h <= 0 or w <= 0:
        raise DimensionError("dims must be positive")
    if not 0.0 < ratio < 1.0:
        raise RangeError(f"ratio {ratio} outside (0, 1)")
    mn, mx = int(size_range[0]), int(size_range[1])
    if mn <= 0 or mx <= 0 or mn > mx:
        raise RangeError(f"degenerate size range {size_range}")
    if mx > min(h, w):
        raise RangeError(f"max rectangle side {mx} exceeds image bounds ({h},{w})")
    rng = np.random.default_rng(seed)
    mask = np.zeros((h, w), dtype=np.uint8)
    covered = 0
    target = ratio * h * w
    while covered < target:
        rh = int(rng.integers(mn, mx + 1))
        rw = int(rng.integers(mn, mx + 1))
        y = int(rng.integers(0, h - rh + 1))
        x = int(rng.integers(0, w - rw + 1))
        covered += backend.paint_rect(mask, y, y + rh, x, x + rw)
    return MaskSpec(h, w, 1, mask.astype(bool), "random", float(ratio), int(seed))


def generate_combined_mask(dims, block_size, ratio, seed):
    """Fair-coin choice between patch and grid masking, from one seed.

    A head delegates to ``generate_patch_mask`` with a sub-seed drawn from
    the same generator; a tail delegates to ``generate_grid_mask``. The
    returned spec is exactly the delegate's output, so each sample stays a
    single coherent strategy.
    """
    _check_block_dims(dims, block_size)
    _grid_k(ratio)  # both delegates must be legal before flipping
    rng = np.random.default_rng(seed)
    heads = bool(rng.integers(0, 2))
    sub_seed = int(rng.integers(0, 2**63))
    if heads:
        return generate_patch_mask(dims, block_size, ratio, sub_seed)
    return generate_grid_mask(dims, block_size, ratio)


def apply_mask(image, spec, fill=0.0):
    """Set every masked cell of a (C,H,W) image to ``fill``.

    Unmasked pixels are copied bit-identically.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[1] != spec.height or image.shape[2] != spec.width:
        raise DimensionError(
            f"image shape {image.shape} incompatible with spec ({spec.height},{spec.width})"
        )
    pixels = backend.fill_blocks(image, spec.grid, spec.block_size, fill)
    return MaskedImage(pixels=pixels, spec=spec, fill_value=float(fill))


def snap_to_blocks(spec, block_size):
    """Snap a pixel-granular spec to the block grid that bounds it.

    Every block touched by at least one masked pixel becomes a masked cell.
    This is how random-strategy masks gain the block structure the reuse
    branch needs, at the price of structural deviation from the pixel mask.
    """
    if spec.block_size == block_size:
        return spec
    if spec.block_size != 1:
        raise DimensionError("can only snap pixel-granular specs")
    h, w = spec.height, spec.width
    if h % block_size or w % block_size:
        raise DimensionError(f"dims ({h},{w}) not divisible by block {block_size}")
    gh, gw = h // block_size, w // block_size
    cells = spec.grid.reshape(gh, block_size, gw, block_size).any(axis=(1, 3))
    if not cells.any():
        raise EmptyMaskError("pixel mask is empty; nothing to snap")
    return MaskSpec(h, w, block_size, cells, spec.strategy, spec.ratio, spec.seed)
