"""Fixed 10x10 region grid: tiling geometry, point lookup, upper/lower halves.

Coordinates are 0-based, x rightward, y downward. Rects are right/bottom
exclusive. When a dimension is not divisible by 10, the remainder pixels go
to the trailing columns/rows, so leading cells stay uniform.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ImageTooSmall, OutOfBounds

GRID_SIDE = 10
REGIONS_PER_IMAGE = GRID_SIDE * GRID_SIDE

UPPER = "upper"
LOWER = "lower"
HALVES = (UPPER, LOWER)


@dataclass(frozen=True)
class RegionRect:
    """One grid cell: pixel rect [x1,x2) x [y1,y2) at grid position (row, col)."""

    x1: int
    y1: int
    x2: int
    y2: int
    row: int
    col: int

    @property
    def region_index(self) -> int:
        return self.row * GRID_SIDE + self.col

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1

    def contains(self, x, y) -> bool:
        return self.x1 <= x < self.x2 and self.y1 <= y < self.y2


def _edges(size: int) -> np.ndarray:
    """11 cell edges along one axis; trailing cells absorb the remainder."""
    base, rem = divmod(size, GRID_SIDE)
    widths = np.full(GRID_SIDE, base, dtype=np.int64)
    if rem:
        widths[GRID_SIDE - rem:] += 1
    edges = np.zeros(GRID_SIDE + 1, dtype=np.int64)
    np.cumsum(widths, out=edges[1:])
    return edges


def grid_regions(width: int, height: int) -> list[RegionRect]:
    """Tile a width x height image into the 100 grid rects, row-major."""
    if width < GRID_SIDE or height < GRID_SIDE:
        raise ImageTooSmall(f"image {width}x{height} cannot host a 10x10 grid")
    xs = _edges(width)
    ys = _edges(height)
    return [
        RegionRect(int(xs[c]), int(ys[r]), int(xs[c + 1]), int(ys[r + 1]), r, c)
        for r in range(GRID_SIDE)
        for c in range(GRID_SIDE)
    ]


def region_of_point(x, y, width: int, height: int) -> int:
    """Index of the unique grid rect containing (x, y). Accepts subpixel coords."""
    if not (0 <= x < width and 0 <= y < height):
        raise OutOfBounds(f"point ({x}, {y}) outside {width}x{height} image")
    col = int(np.searchsorted(_edges(width), x, side="right")) - 1
    row = int(np.searchsorted(_edges(height), y, side="right")) - 1
    return row * GRID_SIDE + col


def regions_of_points(xs, ys, width: int, height: int) -> np.ndarray:
    """Vectorized region_of_point for coordinate arrays."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.size and (xs.min() < 0 or xs.max() >= width or ys.min() < 0 or ys.max() >= height):
        raise OutOfBounds(f"points outside {width}x{height} image")
    cols = np.searchsorted(_edges(width), xs, side="right") - 1
    rows = np.searchsorted(_edges(height), ys, side="right") - 1
    return (rows * GRID_SIDE + cols).astype(np.int64)


def half_of_region(r: int) -> str:
    """UPPER for grid rows 0..4, LOWER for rows 5..9."""
    if not 0 <= r < REGIONS_PER_IMAGE:
        raise OutOfBounds(f"region index {r} not in [0, {REGIONS_PER_IMAGE})")
    return UPPER if r < REGIONS_PER_IMAGE // 2 else LOWER


def upper_region_indices() -> np.ndarray:
    return np.arange(0, REGIONS_PER_IMAGE // 2)


def lower_region_indices() -> np.ndarray:
    return np.arange(REGIONS_PER_IMAGE // 2, REGIONS_PER_IMAGE)
