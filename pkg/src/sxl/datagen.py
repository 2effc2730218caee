"""Synthetic peak/dip tiles and raster tiling."""
from dataclasses import dataclass

import numpy as np

from .grid import GridStack, tile_id

PEAK_HEIGHT = 0.75


@dataclass(frozen=True)
class ToyParams:
    a: int
    b: int
    size: int = 32
    s: float = 7.0

    def __post_init__(self):
        if self.size < 2:
            raise ValueError(f"tile size must be >= 2, got {self.size}")
        if not self.s > 0:
            raise ValueError(f"peak width s must be positive, got {self.s}")

    @property
    def d(self):
        return 10 - self.a

    @property
    def e(self):
        return 10 - self.b

    def mirrored(self):
        return ToyParams(self.d, self.e, self.size, self.s)


def _bump(cx, cy, px, py, s):
    return PEAK_HEIGHT * np.exp(-((9.0 * cx - px) ** 2 + (9.0 * cy - py) ** 2) / s)


def toy_tile(p):
    """Gaussian peak at (a, b) minus a mirrored dip at (10 - a, 10 - b), on [0, 1]^2 coordinates."""
    c = np.arange(p.size) / (p.size - 1)
    cy, cx = np.meshgrid(c, c, indexing="ij")
    return _bump(cx, cy, p.a, p.b, p.s) - _bump(cx, cy, p.d, p.e, p.s)


def toy_params(count, seed, size=32, s=7.0):
    """Per-tile parameters; tile k draws (a, b) from a generator seeded by (seed, k)."""
    out = []
    for k in range(int(count)):
        a, b = np.random.default_rng([int(seed), k]).integers(0, 11, size=2)
        out.append(ToyParams(int(a), int(b), size, s))
    return out


def toy_dataset(count, seed, size=32, s=7.0):
    """Return ``(tiles, ids)``: a (count, size, size) array and matching tile ids."""
    if int(count) < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    params = toy_params(count, seed, size, s)
    tiles = np.stack([toy_tile(p) for p in params])
    ids = [tile_id(f"toy{k}", 0, 0) for k in range(len(params))]
    return tiles, ids


def tile_raster(src, tile, stride=None, source="raster"):
    """Cut a single-channel raster into tile x tile windows in row-major order.

    Windows that would extend past the raster edge are dropped. Returns
    ``(tiles, ids)`` where ids encode the window's row/col offset.
    """
    if isinstance(src, GridStack):
        if len(src) != 1:
            raise ValueError(f"tiling needs a single-channel raster, got {len(src)} channels")
        src = src.channels[0]
    src = np.asarray(src, dtype=np.float64)
    tile = int(tile)
    stride = tile if stride is None else int(stride)
    if tile < 1 or stride < 1:
        raise ValueError("tile and stride must be positive")
    h, w = src.shape
    if tile > min(h, w):
        raise ValueError(f"tile {tile} larger than raster {h}x{w}")
    tiles, ids = [], []
    for r in range(0, h - tile + 1, stride):
        for c in range(0, w - tile + 1, stride):
            tiles.append(src[r:r + tile, c:c + tile])
            ids.append(tile_id(source, r, c))
    return np.stack(tiles), ids
