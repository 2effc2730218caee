import numpy as np
import pytest

from sxl.grid import (DatasetSplit, GridStack, as_grid, avg_pool, downsample_strided, make_neighborhood,
                      split_dataset, tile_id, upsample_nn)


def test_as_grid_rejects_bad_input():
    with pytest.raises(ValueError):
        as_grid(np.zeros(3))
    with pytest.raises(ValueError):
        as_grid([[1.0, np.nan]])
    assert as_grid([[1, 2]]).dtype == np.float64


def test_gridstack_defaults_and_validation():
    s = GridStack(np.zeros((3, 4, 4)))
    assert s.factors == (1, 2, 4) and s.shape == (3, 4, 4) and len(s) == 3
    assert GridStack(np.ones((2, 2))).shape == (1, 2, 2)
    with pytest.raises(ValueError):
        GridStack(np.zeros((2, 4, 4)), factors=(2, 4))
    with pytest.raises(ValueError):
        GridStack(np.zeros((2, 4, 4)), factors=(1, 1))
    with pytest.raises(ValueError):
        GridStack(np.zeros((2, 4, 4)), factors=(1,))


def test_queen_neighbourhood_counts():
    nb = make_neighborhood(3, 4)
    counts = nb.neighbor_counts()
    assert counts[0, 0] == 3 and counts[0, 1] == 5 and counts[1, 1] == 8
    w = nb.weight_matrix()
    assert np.array_equal(w, w.T) and np.all(np.diag(w) == 0)
    assert np.array_equal(w.sum(1).reshape(3, 4), counts)
    assert sorted(nb.neighbors(0)) == [1, 4, 5]
    with pytest.raises(ValueError):
        make_neighborhood(0, 3)
    with pytest.raises(ValueError):
        make_neighborhood(3, 3, "rook")


def test_single_cell_neighbourhood_is_empty():
    nb = make_neighborhood(1, 1)
    assert nb.neighbor_counts()[0, 0] == 0


def test_avg_pool_values_and_errors():
    g = np.arange(16.0).reshape(4, 4)
    assert np.array_equal(avg_pool(g, 2), [[2.5, 4.5], [10.5, 12.5]])
    assert np.array_equal(avg_pool(g, 1), g)
    with pytest.raises(ValueError, match="rows"):
        avg_pool(np.zeros((3, 4)), 2)
    with pytest.raises(ValueError, match="cols"):
        avg_pool(np.zeros((4, 3)), 2)


def test_upsample_then_pool_is_identity():
    g = np.random.default_rng(0).normal(size=(3, 5))
    assert np.array_equal(avg_pool(upsample_nn(g, 4), 4), g)
    up = upsample_nn(g, 2)
    assert up[5, 9] == g[2, 4]


def test_downsample_strided():
    g = np.arange(16.0).reshape(4, 4)
    assert np.array_equal(downsample_strided(g), [[0, 2], [8, 10]])
    assert downsample_strided(np.zeros((5, 64, 64))).shape == (5, 32, 32)


def test_split_sizes_and_determinism():
    ids = [tile_id("t", k, 0) for k in range(1000)]
    a = split_dataset(ids, 7)
    b = split_dataset(ids, 7)
    assert (len(a.train), len(a.validation), len(a.test)) == (600, 200, 200)
    assert a == b
    assert set(a.train) | set(a.validation) | set(a.test) == set(ids)
    assert not set(a.train) & set(a.test)
    assert split_dataset(ids, 8).train != a.train


def test_split_select_matches_indices():
    ids = [tile_id("t", k, 0) for k in range(10)]
    tiles = np.arange(10.0)[:, None, None] * np.ones((1, 2, 2))
    sp = split_dataset(ids, 1)
    tr, va, te = sp.select(tiles, ids)
    assert [int(t[0, 0]) for t in tr] == [ids.index(i) for i in sp.train]
    assert len(va) == 2 and len(te) == 2


def test_split_validation():
    with pytest.raises(ValueError):
        split_dataset(["a", "b", "c"], 0)
    with pytest.raises(ValueError):
        split_dataset(["a"] * 6, 0)
    with pytest.raises(ValueError):
        split_dataset([str(k) for k in range(6)], -1)


def test_tile_id_format():
    assert tile_id("dem", 3, 64) == "dem:3:64"
    assert isinstance(split_dataset([str(k) for k in range(5)], 0), DatasetSplit)
