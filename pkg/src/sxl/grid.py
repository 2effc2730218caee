"""Raster primitives: grids, queen-contiguity weights, resampling and dataset splits.

A grid is a 2-D ``float64`` numpy array. Resampling functions operate on the
last two axes, so a ``(batch, rows, cols)`` stack is handled in one call.
"""
from dataclasses import dataclass, field

import numpy as np

from .kernels import queen_neighbor_sum

SPLIT_RATIOS = (0.6, 0.2, 0.2)


def as_grid(values):
    """Validate and convert ``values`` to a finite 2-D float64 array."""
    g = np.asarray(values, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
        raise ValueError(f"grid must be a non-empty 2-D array, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("grid contains NaN or Inf")
    return g


@dataclass(frozen=True)
class GridStack:
    """Equally sized grids stacked along axis 0, each tagged with its coarsening factor."""

    channels: np.ndarray
    factors: tuple = field(default=None)

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=np.float64)
        if ch.ndim == 2:
            ch = ch[None]
        if ch.ndim != 3 or ch.shape[0] < 1:
            raise ValueError(f"stack must have shape (channels, rows, cols), got {ch.shape}")
        factors = self.factors
        if factors is None:
            factors = tuple(2 ** k for k in range(ch.shape[0]))
        factors = tuple(int(f) for f in factors)
        if len(factors) != ch.shape[0]:
            raise ValueError(f"{len(factors)} factors for {ch.shape[0]} channels")
        if factors[0] != 1 or any(b <= a for a, b in zip(factors, factors[1:])):
            raise ValueError(f"factors must start at 1 and strictly increase, got {factors}")
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "factors", factors)

    @property
    def shape(self):
        return self.channels.shape

    def __len__(self):
        return self.channels.shape[0]

    def __getitem__(self, k):
        return self.channels[k]


@dataclass(frozen=True)
class NeighborhoodSpec:
    """Binary, non-standardised spatial weights on a rows x cols lattice."""

    rows: int
    cols: int
    scheme: str = "queen"

    def neighbors(self, i):
        """Flat indices of the neighbours of flat cell ``i``, in row-major order."""
        r, c = divmod(i, self.cols)
        out = []
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                rr, cc = r + dr, c + dc
                if 0 <= rr < self.rows and 0 <= cc < self.cols:
                    out.append(rr * self.cols + cc)
        return out

    def weight_matrix(self):
        n = self.rows * self.cols
        w = np.zeros((n, n))
        for i in range(n):
            w[i, self.neighbors(i)] = 1.0
        return w

    def neighbor_counts(self):
        ones = np.ones((self.rows, self.cols))
        return queen_neighbor_sum(ones[None])[0].astype(int)


def make_neighborhood(rows, cols, scheme="queen"):
    if scheme != "queen":
        raise ValueError(f"unsupported neighbourhood scheme {scheme!r}")
    if int(rows) < 1 or int(cols) < 1:
        raise ValueError(f"neighbourhood needs positive dimensions, got ({rows}, {cols})")
    return NeighborhoodSpec(int(rows), int(cols), scheme)


def avg_pool(g, a):
    """Non-overlapping a x a block means. Both spatial axes must be divisible by ``a``."""
    g = np.asarray(g, dtype=np.float64)
    a = int(a)
    if a < 1:
        raise ValueError(f"pool factor must be >= 1, got {a}")
    h, w = g.shape[-2:]
    if h % a:
        raise ValueError(f"rows ({h}) not divisible by pool factor {a}")
    if w % a:
        raise ValueError(f"cols ({w}) not divisible by pool factor {a}")
    if a == 1:
        return g.copy()
    lead = g.shape[:-2]
    return g.reshape(*lead, h // a, a, w // a, a).mean(axis=(-3, -1))


def upsample_nn(g, a):
    """Nearest-neighbour upsampling: out[i, j] = g[i // a, j // a]."""
    g = np.asarray(g, dtype=np.float64)
    a = int(a)
    if a < 1:
        raise ValueError(f"upsample factor must be >= 1, got {a}")
    return np.repeat(np.repeat(g, a, axis=-2), a, axis=-1)


def downsample_strided(g):
    """Keep even-indexed rows and columns (drop every second row and column)."""
    g = np.asarray(g, dtype=np.float64)
    if g.shape[-2] < 2 or g.shape[-1] < 2:
        raise ValueError(f"strided downsampling needs at least 2x2, got {g.shape[-2:]}")
    return g[..., ::2, ::2].copy()


def tile_id(source, row, col):
    return f"{source}:{int(row)}:{int(col)}"


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple
    validation: tuple
    test: tuple
    seed: int
    ratios: tuple = SPLIT_RATIOS

    def indices(self, tile_ids):
        """Positions of each partition's ids within ``tile_ids``."""
        pos = {t: i for i, t in enumerate(tile_ids)}
        return tuple(np.array([pos[t] for t in part], dtype=np.int64)
                     for part in (self.train, self.validation, self.test))

    def select(self, tiles, tile_ids):
        """Split an array of tiles aligned with ``tile_ids`` into (train, val, test) arrays."""
        tiles = np.asarray(tiles)
        return tuple(tiles[ix] for ix in self.indices(tile_ids))


def split_dataset(tile_ids, seed):
    """Seeded shuffle followed by a floor(60%) / floor(20%) / remainder partition."""
    ids = [str(t) for t in tile_ids]
    if len(ids) < 5:
        raise ValueError(f"need at least 5 tiles to split, got {len(ids)}")
    if len(set(ids)) != len(ids):
        raise ValueError("tile identifiers must be unique")
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    order = np.random.default_rng(seed).permutation(len(ids))
    n = len(ids)
    n_train = n * 6 // 10
    n_val = n * 2 // 10
    shuffled = [ids[k] for k in order]
    return DatasetSplit(
        train=tuple(shuffled[:n_train]),
        validation=tuple(shuffled[n_train:n_train + n_val]),
        test=tuple(shuffled[n_train + n_val:]),
        seed=seed,
    )
