"""Spatial interpolation: classical baselines and the CNN regressor."""
from .baselines import (
    METHODS,
    SamplePoints,
    SingularKrigingError,
    VariogramModel,
    bicubic,
    fit_variogram,
    idw,
    interpolate_grid,
    kriging,
)
