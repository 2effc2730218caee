"""Sample-quality and regression metrics."""
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .kernels import sq_dists


@dataclass(frozen=True)
class MmdConfig:
    bandwidth: object = "median-heuristic"
    kernel: str = "rbf"

    def __post_init__(self):
        if self.kernel != "rbf":
            raise ValueError(f"unsupported kernel {self.kernel!r}")
        if self.bandwidth != "median-heuristic" and not float(self.bandwidth) > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")


def _flatten(samples):
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim < 2:
        raise ValueError(f"expected a collection of samples, got shape {arr.shape}")
    return arr.reshape(arr.shape[0], -1)


def rbf_kernel(x, y, bandwidth):
    return np.exp(-sq_dists(x, y) / (2.0 * bandwidth ** 2))


def median_heuristic_bandwidth(x, y=None):
    """Median pairwise Euclidean distance over the pooled samples; 1 if that median is 0."""
    pool = _flatten(x) if y is None else np.vstack([_flatten(x), _flatten(y)])
    if len(pool) < 2:
        raise ValueError("median heuristic needs at least 2 samples")
    h = float(np.median(pdist(pool)))
    return h if h > 0 else 1.0


def mmd2(x, y, cfg=MmdConfig()):
    """Squared MMD with an RBF kernel.

    Within-sample terms average over i != j with 1/(n(n-1)); the cross term
    averages over all pairs with 2/n**2. The result can be slightly negative.
    """
    x, y = _flatten(x), _flatten(y)
    n = len(x)
    if n < 2 or len(y) != n:
        raise ValueError(f"need two samples of equal size >= 2, got {len(x)} and {len(y)}")
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"sample dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    h = cfg.bandwidth
    h = median_heuristic_bandwidth(x, y) if h == "median-heuristic" else float(h)
    kxx = rbf_kernel(x, x, h)
    kyy = rbf_kernel(y, y, h)
    kxy = rbf_kernel(x, y, h)
    within = (kxx.sum() - np.trace(kxx) + kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    return float(within - 2.0 * kxy.sum() / n ** 2)


def rmse(truth, pred):
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if truth.shape != pred.shape:
        raise ValueError(f"shape mismatch: {truth.shape} vs {pred.shape}")
    return float(np.sqrt(np.mean((truth - pred) ** 2)))
