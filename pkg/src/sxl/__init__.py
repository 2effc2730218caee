"""Auxiliary-task learning on spatial grids with local Moran's I embeddings."""
from .grid import (
    DatasetSplit,
    GridStack,
    NeighborhoodSpec,
    avg_pool,
    downsample_strided,
    make_neighborhood,
    split_dataset,
    upsample_nn,
)
from .io import FormatError, read_grid, write_grid
from .moran import MoranConfig, local_moran, multires_moran

__version__ = "0.1.0"
