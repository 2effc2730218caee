"""Classical 2x interpolation baselines: bicubic, IDW, ordinary and universal kriging."""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from .. import kernels

CUBIC_A = -0.5
IDW_POWER = 2.0
N_BINS = 15
N_NEIGHBORS = 64
METHODS = ("bicubic", "idw", "ok", "uk")


class SingularKrigingError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class SamplePoints:
    coords: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64).reshape(-1, 2)
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if len(coords) < 1:
            raise ValueError("need at least one sample point")
        if len(coords) != len(values):
            raise ValueError(f"{len(coords)} coordinates for {len(values)} values")
        if len(np.unique(coords, axis=0)) != len(coords):
            raise ValueError("duplicate sample coordinates")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    @classmethod
    def from_grid(cls, g, spacing=2):
        """Cells of ``g`` placed at (spacing*i, spacing*j)."""
        g = np.asarray(g, dtype=np.float64)
        r, c = np.meshgrid(np.arange(g.shape[0]), np.arange(g.shape[1]), indexing="ij")
        coords = np.column_stack([r.ravel(), c.ravel()]).astype(np.float64) * spacing
        return cls(coords, g.ravel())


# bicubic -----------------------------------------------------------------

def cubic_weight(x, a=CUBIC_A):
    x = np.abs(np.asarray(x, dtype=np.float64))
    near = ((a + 2) * x - (a + 3)) * x * x + 1
    far = ((a * x - 5 * a) * x + 8 * a) * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def _cubic_matrix(n, factor):
    """(n*factor, n) matrix mapping samples to outputs at source coordinate i/factor."""
    m = np.zeros((n * factor, n))
    for i in range(n * factor):
        u = i / factor
        base = int(np.floor(u))
        for t in range(base - 1, base + 3):
            m[i, min(max(t, 0), n - 1)] += cubic_weight(u - t)
    return m


def bicubic(g, factor=2):
    """Cubic-convolution upsampling with clamped edges; output (i, j) sits at input (i/f, j/f)."""
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 2 or min(g.shape) < 4:
        raise ValueError(f"bicubic needs a 2-D grid of at least 4x4, got {g.shape}")
    # weights sum to one, so interpolating residuals about one sample keeps constant fields exact
    ref = g[0, 0]
    return ref + _cubic_matrix(g.shape[0], factor) @ (g - ref) @ _cubic_matrix(g.shape[1], factor).T


# inverse distance weighting ----------------------------------------------

def idw(samples, query, power=IDW_POWER):
    return float(idw_many(samples, np.asarray(query, dtype=np.float64)[None], power)[0])


def idw_many(samples, queries, power=IDW_POWER):
    if not power > 0:
        raise ValueError(f"IDW power must be positive, got {power}")
    if len(samples) < 1:
        raise ValueError("IDW needs at least one sample")
    return kernels.idw_predict(samples.coords, samples.values, queries, power)


# variogram ---------------------------------------------------------------

@dataclass(frozen=True)
class VariogramModel:
    """Exponential semivariogram ``c0 + c1 * (1 - exp(-h / r))`` for h > 0, 0 at h = 0."""

    nugget: float
    sill: float
    range: float
    kind: str = "exponential"

    def __post_init__(self):
        if self.nugget < 0 or self.sill < 0:
            raise ValueError("nugget and partial sill must be non-negative")
        if not self.range > 0:
            raise ValueError(f"range must be positive, got {self.range}")

    @property
    def degenerate(self):
        return self.nugget + self.sill == 0.0

    def __call__(self, h):
        h = np.asarray(h, dtype=np.float64)
        g = self.nugget + self.sill * (1.0 - np.exp(-h / self.range))
        return np.where(h > 0, g, 0.0)


def empirical_variogram(samples, n_bins=N_BINS):
    """Bin centres, mean semivariance and pair counts up to half the largest separation."""
    d = pdist(samples.coords)
    sv = 0.5 * pdist(samples.values[:, None], "sqeuclidean")
    max_lag = 0.5 * d.max()
    edges = np.linspace(0.0, max_lag, n_bins + 1)
    keep = (d > 0) & (d <= max_lag)
    idx = np.clip(np.digitize(d[keep], edges) - 1, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    sums = np.bincount(idx, weights=sv[keep], minlength=n_bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    ok = counts > 0
    return centers[ok], sums[ok] / counts[ok], counts[ok]


def fit_variogram(samples, n_bins=N_BINS):
    """Least-squares fit of the exponential model to the binned empirical semivariogram."""
    if len(samples) < 10:
        raise ValueError(f"variogram fitting needs at least 10 samples, got {len(samples)}")
    h, gamma, _ = empirical_variogram(samples, n_bins)
    max_lag = h.max() if len(h) else 1.0
    if np.ptp(samples.values) == 0.0 or gamma.max() == 0.0:
        return VariogramModel(0.0, 0.0, max_lag / 3.0)
    scale = gamma.max()

    def resid(p):
        c0, c1, r = p
        return (c0 + c1 * (1.0 - np.exp(-h / r)) - gamma) / scale

    x0 = [0.0, scale, max_lag / 3.0]
    lo = [0.0, 0.0, 1e-6 * max_lag]
    hi = [scale * 10, scale * 10, max_lag * 10]
    fit = least_squares(resid, x0, bounds=(lo, hi), method="trf")
    c0, c1, r = (float(v) for v in fit.x)
    return VariogramModel(c0, c1, r)


# kriging -----------------------------------------------------------------

def _drift(coords):
    return np.column_stack([np.ones(len(coords)), coords[:, 0], coords[:, 1]])


def kriging_system(coords, query, model, drift="none"):
    """Augmented kriging matrix and right-hand side for one query."""
    n = len(coords)
    d = np.sqrt(((coords[:, None, :] - coords[None, :, :]) ** 2).sum(-1))
    d0 = np.sqrt(((coords - query) ** 2).sum(-1))
    if drift == "none":
        f, f0 = np.ones((n, 1)), np.ones(1)
    elif drift == "linear":
        f, f0 = _drift(coords), _drift(np.asarray(query, dtype=np.float64)[None])[0]
    else:
        raise ValueError(f"drift must be 'none' or 'linear', got {drift!r}")
    k = f.shape[1]
    a = np.zeros((n + k, n + k))
    a[:n, :n] = model(d)
    a[:n, n:] = f
    a[n:, :n] = f.T
    rhs = np.concatenate([model(d0), f0])
    return a, rhs


def _solve(a, rhs, degenerate):
    if degenerate:
        return np.linalg.lstsq(a, rhs, rcond=None)[0]
    try:
        sol = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError:
        sol = None
    if sol is None or not np.all(np.isfinite(sol)):
        cond = np.linalg.cond(a[0] if a.ndim == 3 else a)
        raise SingularKrigingError(f"singular kriging system (condition estimate {cond:.3e})")
    return sol


def kriging_weights(samples, query, model, drift="none"):
    n = len(samples)
    if n < 2:
        raise ValueError(f"kriging needs at least 2 samples, got {n}")
    a, rhs = kriging_system(samples.coords, np.asarray(query, dtype=np.float64), model, drift)
    return _solve(a, rhs, model.degenerate)[:n]


def kriging(samples, query, model, drift="none"):
    """Ordinary (drift="none") or universal (drift="linear") kriging prediction at ``query``."""
    return float(kriging_weights(samples, query, model, drift) @ samples.values)


def _local_weights(c, model, nf):
    """Kriging weights for neighbour sets ``c`` (m, k, 2) given relative to a query at 0."""
    m, kn = c.shape[:2]
    a = np.zeros((m, kn + nf, kn + nf))
    dd = np.sqrt(((c[:, :, None, :] - c[:, None, :, :]) ** 2).sum(-1))
    a[:, :kn, :kn] = model(dd)
    rhs = np.zeros((m, kn + nf))
    rhs[:, :kn] = model(np.sqrt((c ** 2).sum(-1)))
    a[:, :kn, kn] = 1.0
    a[:, kn, :kn] = 1.0
    rhs[:, kn] = 1.0
    if nf == 3:
        a[:, :kn, kn + 1:] = c
        a[:, kn + 1:, :kn] = c.transpose(0, 2, 1)
    if model.degenerate:
        w = np.stack([np.linalg.lstsq(a[t], rhs[t], rcond=None)[0] for t in range(m)])
    else:
        w = _solve(a, rhs[..., None], False)[..., 0]
    return w[:, :kn]


@lru_cache(maxsize=8)
def _plan_cached(coords_raw, queries_raw, k):
    coords = np.frombuffer(coords_raw).reshape(-1, 2)
    queries = np.frombuffer(queries_raw).reshape(-1, 2)
    dist, nbr = _nearest_search(coords, queries, k)
    hit = dist[:, 0] < 1e-12
    todo = np.flatnonzero(~hit)
    # weights depend only on neighbour offsets relative to the query
    # (translation invariance, including the linear drift), so each
    # distinct configuration is solved once
    rel = coords[nbr[todo]] - queries[todo, None, :]
    configs, inverse = np.unique(rel.reshape(len(todo), -1), axis=0, return_inverse=True)
    plan = (nbr, hit, todo, configs.reshape(-1, k, 2), inverse.reshape(-1))
    for arr in plan:
        arr.flags.writeable = False
    return plan


def _local_plan(coords, queries, k):
    # every tile of a given size shares one lattice, so the plan is cached
    return _plan_cached(np.ascontiguousarray(coords, dtype=np.float64).tobytes(),
                        np.ascontiguousarray(queries, dtype=np.float64).tobytes(), k)


def _nearest_search(coords, queries, k):
    """k nearest samples per query with ties broken by (row, col) offset.

    Candidates beyond k are over-fetched so equal-distance shells are ordered
    the same way for every query, independent of the tree's internal order.
    """
    kk = min(len(coords), 2 * k)
    dist, idx = cKDTree(coords).query(queries, k=kk)
    dist = dist.reshape(len(queries), kk)
    idx = idx.reshape(len(queries), kk)
    rel = coords[idx] - queries[:, None, :]
    order = np.lexsort((rel[..., 1], rel[..., 0], np.round(dist, 9)), axis=-1)[:, :k]
    return np.take_along_axis(dist, order, 1), np.take_along_axis(idx, order, 1)


def kriging_many(samples, queries, model, drift="none", n_neighbors=N_NEIGHBORS, chunk=512):
    """Local kriging: each query uses its ``n_neighbors`` nearest samples.

    Queries that coincide with a sample return that sample's value, which is
    what the kriging system yields there since gamma(0) = 0.
    """
    queries = np.asarray(queries, dtype=np.float64)
    n = len(samples)
    if n < 2:
        raise ValueError(f"kriging needs at least 2 samples, got {n}")
    if drift not in ("none", "linear"):
        raise ValueError(f"drift must be 'none' or 'linear', got {drift!r}")
    nf = 1 if drift == "none" else 3
    kn = min(n_neighbors, n)
    nbr, hit, todo, configs, inverse = _local_plan(samples.coords, queries, kn)
    out = np.empty(len(queries))
    out[hit] = samples.values[nbr[hit, 0]]
    if len(todo):
        w = np.empty((len(configs), kn))
        for start in range(0, len(configs), chunk):
            w[start:start + chunk] = _local_weights(configs[start:start + chunk], model, nf)
        out[todo] = (w[inverse] * samples.values[nbr[todo]]).sum(axis=1)
    return out


# grid driver -------------------------------------------------------------

def interpolate_grid(g, method, power=IDW_POWER, n_neighbors=N_NEIGHBORS, model=None):
    """Upsample a low-resolution grid by 2 with one of ``METHODS``.

    For the point-based methods, input cell (i, j) becomes a sample at (2i, 2j)
    and every cell of the (2 rows, 2 cols) output is a query.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {g.shape}")
    if method == "bicubic":
        return bicubic(g, 2)
    if method not in METHODS:
        raise ValueError(f"unknown interpolation method {method!r}; choose from {METHODS}")
    samples = SamplePoints.from_grid(g, spacing=2)
    h, w = 2 * g.shape[0], 2 * g.shape[1]
    r, c = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    queries = np.column_stack([r.ravel(), c.ravel()]).astype(np.float64)
    if method == "idw":
        pred = idw_many(samples, queries, power)
    else:
        if model is None:
            model = fit_variogram(samples)
        drift = "none" if method == "ok" else "linear"
        pred = kriging_many(samples, queries, model, drift, n_neighbors)
    return pred.reshape(h, w)
