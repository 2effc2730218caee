"""Local Moran's I on grids and its multi-resolution stack."""
from dataclasses import dataclass

import numpy as np

from .grid import GridStack, NeighborhoodSpec, avg_pool, make_neighborhood, upsample_nn
from .kernels import queen_neighbor_sum


@dataclass(frozen=True)
class MoranConfig:
    levels: int = 3
    pool_factor: int = 2
    zero_variance_policy: str = "all-zeros"

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if self.pool_factor < 1:
            raise ValueError(f"pool_factor must be >= 1, got {self.pool_factor}")
        if self.zero_variance_policy != "all-zeros":
            raise ValueError(f"unknown zero-variance policy {self.zero_variance_policy!r}")

    @property
    def factors(self):
        return tuple(self.pool_factor ** r for r in range(self.levels))

    def check_shape(self, rows, cols):
        top = self.factors[-1]
        if rows % top or cols % top:
            raise ValueError(
                f"grid {rows}x{cols} is not divisible by the coarsest factor {top} "
                f"({self.levels} levels of pool factor {self.pool_factor})"
            )


def local_moran_batch(x):
    """Local Moran's I for each grid of a ``(batch, rows, cols)`` array.

    Binary queen weights; the variance denominator runs over every cell and
    constant grids map to all zeros.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-2] * x.shape[-1]
    if n < 2:
        raise ValueError("local Moran's I needs at least 2 cells")
    z = x - x.mean(axis=(-2, -1), keepdims=True)
    # the statistic is scale-free; unit max |z| keeps tiny or huge grids from under/overflowing
    peak = np.abs(z).max(axis=(-2, -1), keepdims=True)
    z = z / np.where(peak > 0, peak, 1.0)
    ss = (z * z).sum(axis=(-2, -1), keepdims=True)
    lag = queen_neighbor_sum(z)
    out = np.zeros_like(z)
    # exact constancy test: centring a constant grid can leave rounding residue in z
    ok = (np.ptp(x.reshape(x.shape[0], -1), axis=1) > 0.0) & (peak.ravel() > 0)
    out[ok] = (n - 1) * z[ok] * lag[ok] / ss[ok]
    return out


def local_moran(g, nb=None):
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {g.shape}")
    if nb is None:
        nb = make_neighborhood(*g.shape)
    if not isinstance(nb, NeighborhoodSpec) or (nb.rows, nb.cols) != g.shape:
        raise ValueError(f"neighbourhood {nb} does not match grid shape {g.shape}")
    return local_moran_batch(g[None])[0]


def multires_moran_batch(x, cfg=MoranConfig()):
    """Multi-resolution Moran tensor for a batch: returns ``(batch, levels, rows, cols)``.

    Level r pools by pool_factor**r, computes local Moran's I on the coarse
    lattice (queen weights sized to it) and upsamples back by nearest neighbour.
    """
    x = np.asarray(x, dtype=np.float64)
    cfg.check_shape(*x.shape[-2:])
    out = np.empty((x.shape[0], cfg.levels) + x.shape[-2:])
    for r, a in enumerate(cfg.factors):
        out[:, r] = upsample_nn(local_moran_batch(avg_pool(x, a)), a)
    return out


def multires_moran(g, cfg=MoranConfig()):
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {g.shape}")
    return GridStack(multires_moran_batch(g[None], cfg)[0], cfg.factors)
