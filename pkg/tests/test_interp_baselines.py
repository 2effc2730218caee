import numpy as np
import pytest

from oracles import kriging_dense
from sxl.grid import downsample_strided
from sxl.interp import baselines as bl
from sxl.interp.baselines import (SamplePoints, SingularKrigingError, VariogramModel, bicubic, cubic_weight,
                                  empirical_variogram, fit_variogram, idw, idw_many, interpolate_grid,
                                  kriging, kriging_many, kriging_weights)


def random_samples(rng, n):
    coords = rng.choice(400, size=n, replace=False)
    return SamplePoints(np.column_stack([coords // 20, coords % 20]).astype(float), rng.normal(size=n))


# sample points -------------------------------------------------------------

def test_sample_points_validation():
    with pytest.raises(ValueError):
        SamplePoints([[0, 0], [0, 0]], [1, 2])
    with pytest.raises(ValueError):
        SamplePoints(np.zeros((0, 2)), [])
    with pytest.raises(ValueError):
        SamplePoints([[0, 0]], [1, 2])
    s = SamplePoints.from_grid(np.arange(6.0).reshape(2, 3))
    assert s.coords[4].tolist() == [2.0, 2.0] and s.values[4] == 4.0


# bicubic -------------------------------------------------------------------

def test_cubic_kernel_properties():
    assert cubic_weight(0.0) == 1.0
    assert np.allclose(cubic_weight([1.0, 2.0, 2.5]), 0.0)
    u = np.linspace(0, 1, 11)
    total = sum(cubic_weight(u - t) for t in (-1, 0, 1, 2))
    assert np.allclose(total, 1.0)


def bicubic_oracle(g):
    """Direct 16-tap cubic convolution per output cell with clamped indices."""
    h, w = g.shape
    out = np.zeros((2 * h, 2 * w))
    for i in range(2 * h):
        for j in range(2 * w):
            u, v = i / 2, j / 2
            bu, bv = int(np.floor(u)), int(np.floor(v))
            acc = 0.0
            for r in range(bu - 1, bu + 3):
                for c in range(bv - 1, bv + 3):
                    acc += (cubic_weight(u - r) * cubic_weight(v - c)
                            * g[min(max(r, 0), h - 1), min(max(c, 0), w - 1)])
            out[i, j] = acc
    return out


def test_bicubic_matches_direct_convolution():
    g = np.random.default_rng(0).normal(size=(6, 5))
    assert np.max(np.abs(bicubic(g) - bicubic_oracle(g))) < 1e-12


def test_bicubic_node_exact_and_constants():
    g = np.random.default_rng(1).normal(size=(8, 8))
    assert np.allclose(bicubic(g)[::2, ::2], g, atol=1e-13)
    assert np.array_equal(bicubic(np.full((5, 5), 2.5)), np.full((10, 10), 2.5))


def test_bicubic_reproduces_ramp_away_from_edges():
    r, c = np.meshgrid(np.arange(8.0), np.arange(8.0), indexing="ij")
    g = 0.5 * r - 2.0 * c + 1.0
    out = bicubic(g)
    rr, cc = np.meshgrid(np.arange(16) / 2, np.arange(16) / 2, indexing="ij")
    inner = (slice(2, 12), slice(2, 12))
    assert np.allclose(out[inner], (0.5 * rr - 2.0 * cc + 1.0)[inner], atol=1e-12)


def test_bicubic_small_input_rejected():
    with pytest.raises(ValueError):
        bicubic(np.zeros((3, 8)))


# IDW -----------------------------------------------------------------------

def test_idw_exact_at_samples_and_weighted_mean():
    s = SamplePoints([[0, 0], [0, 2], [3, 0]], [1.0, 5.0, -2.0])
    assert idw(s, [0, 2]) == 5.0
    w = np.array([1 / 1, 1 / 1, 1 / 10.0])
    assert abs(idw(s, [0, 1]) - (w @ s.values) / w.sum()) < 1e-12
    with pytest.raises(ValueError):
        idw(s, [0, 1], power=0)


def test_idw_grid_matches_per_pixel():
    g = np.random.default_rng(2).normal(size=(5, 5))
    out = interpolate_grid(g, "idw")
    s = SamplePoints.from_grid(g)
    for i, j in [(0, 0), (1, 3), (7, 9), (4, 4)]:
        assert abs(out[i, j] - idw(s, [i, j])) < 1e-12


# variogram -----------------------------------------------------------------

def test_variogram_model_properties():
    m = VariogramModel(0.1, 1.0, 3.0)
    assert m(0.0) == 0.0
    h = np.linspace(0.01, 20, 50)
    assert np.all(np.diff(m(h)) >= 0)
    with pytest.raises(ValueError):
        VariogramModel(-1, 1, 1)
    with pytest.raises(ValueError):
        VariogramModel(0, 1, 0)


def test_empirical_variogram_bins():
    s = SamplePoints.from_grid(np.random.default_rng(3).normal(size=(8, 8)), spacing=1)
    h, gamma, counts = empirical_variogram(s)
    assert len(h) <= 15 and np.all(counts > 0) and h.max() <= 0.5 * np.sqrt(2 * 7 ** 2)


def test_fit_recovers_exponential_structure():
    # Gaussian fields with covariance 2 exp(-d / 4); single realisations are noisy, so compare medians
    n = 24
    r, c = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    pts = np.column_stack([r.ravel(), c.ravel()]).astype(float)
    d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    chol = np.linalg.cholesky(2.0 * np.exp(-d / 4.0) + 1e-10 * np.eye(len(pts)))
    fits = [fit_variogram(SamplePoints(pts, chol @ np.random.default_rng(seed).normal(size=len(pts))))
            for seed in range(8)]
    assert 1.2 < np.median([m.nugget + m.sill for m in fits]) < 3.0
    assert 2.0 < np.median([m.range for m in fits]) < 8.0
    assert all(m.nugget < 0.5 * m.sill for m in fits)


def test_fit_constant_field_is_degenerate():
    m = fit_variogram(SamplePoints.from_grid(np.full((4, 4), 3.0)))
    assert m.degenerate
    with pytest.raises(ValueError):
        fit_variogram(SamplePoints.from_grid(np.zeros((3, 3))))


# kriging -------------------------------------------------------------------

@pytest.mark.parametrize("drift", ["none", "linear"])
def test_kriging_matches_dense_solve(drift):
    rng = np.random.default_rng(5)
    for _ in range(20):
        s = random_samples(rng, int(rng.integers(4, 11)))
        m = VariogramModel(float(rng.uniform(0, 0.3)), float(rng.uniform(0.5, 2)), float(rng.uniform(1, 8)))
        q = rng.uniform(0, 19, size=2)
        expect, lam = kriging_dense(s.coords, s.values, q, m, drift)
        assert abs(kriging(s, q, m, drift) - expect) < 1e-8
        assert np.max(np.abs(kriging_weights(s, q, m, drift) - lam)) < 1e-8


def test_ok_weights_sum_to_one():
    rng = np.random.default_rng(6)
    for _ in range(20):
        s = random_samples(rng, 8)
        w = kriging_weights(s, rng.uniform(0, 19, size=2), VariogramModel(0.0, 1.0, 3.0))
        assert abs(w.sum() - 1.0) < 1e-10


@pytest.mark.parametrize("drift", ["none", "linear"])
def test_kriging_exact_without_nugget(drift):
    s = random_samples(np.random.default_rng(7), 9)
    m = VariogramModel(0.0, 1.0, 5.0)
    for k in range(9):
        assert abs(kriging(s, s.coords[k], m, drift) - s.values[k]) < 1e-9


def test_kriging_errors():
    m = VariogramModel(0.0, 1.0, 2.0)
    with pytest.raises(ValueError):
        kriging(SamplePoints([[0, 0]], [1.0]), [1, 1], m)
    with pytest.raises(ValueError):
        kriging(random_samples(np.random.default_rng(8), 4), [1, 1], m, drift="quadratic")
    # collinear samples make the linear-drift system singular
    line = SamplePoints([[0, 0], [0, 1], [0, 2], [0, 3]], [1.0, 2.0, 0.0, 1.0])
    with pytest.raises(SingularKrigingError, match="condition"):
        kriging(line, [1.0, 1.0], m, drift="linear")


def test_degenerate_model_uses_least_squares():
    s = SamplePoints.from_grid(np.full((3, 3), 4.0))
    assert abs(kriging(s, [1.0, 1.0], VariogramModel(0.0, 0.0, 1.0)) - 4.0) < 1e-10


@pytest.mark.parametrize("drift", ["none", "linear"])
def test_local_kriging_matches_per_query_solve(drift):
    rng = np.random.default_rng(9)
    g = rng.normal(size=(12, 12))
    s = SamplePoints.from_grid(g)
    m = fit_variogram(s)
    queries = np.array([[1.0, 1.0], [5.0, 6.0], [23.0, 0.0], [12.0, 12.0], [3.0, 20.0]])
    fast = kriging_many(s, queries, m, drift, n_neighbors=16)
    for q, v in zip(queries, fast):
        d = np.sqrt(((s.coords - q) ** 2).sum(1))
        order = np.lexsort((s.coords[:, 1] - q[1], s.coords[:, 0] - q[0], np.round(d, 9)))[:16]
        local = SamplePoints(s.coords[order], s.values[order])
        assert abs(kriging(local, q, m, drift) - v) < 1e-9


# grid driver ---------------------------------------------------------------

@pytest.mark.parametrize("method", bl.METHODS)
def test_constant_input_gives_constant_output(method):
    out = interpolate_grid(np.full((8, 8), -1.25), method)
    assert out.shape == (16, 16)
    assert np.max(np.abs(out + 1.25)) < 1e-9


@pytest.mark.parametrize("method", bl.METHODS)
def test_methods_are_exact_at_even_cells(method):
    g = np.random.default_rng(10).normal(size=(8, 8))
    assert np.max(np.abs(interpolate_grid(g, method)[::2, ::2] - g)) < 1e-9


def test_identity_task_rmse_zero():
    hi = np.full((64, 64), 0.3)
    out = interpolate_grid(downsample_strided(hi), "bicubic")
    assert np.sqrt(np.mean((out - hi) ** 2)) == 0.0


def test_unknown_method():
    with pytest.raises(ValueError):
        interpolate_grid(np.zeros((4, 4)), "spline")
