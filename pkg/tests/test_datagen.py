import numpy as np
import pytest

from sxl.datagen import ToyParams, tile_raster, toy_dataset, toy_params, toy_tile
from sxl.grid import GridStack


def test_centred_peak_cancels():
    assert np.array_equal(toy_tile(ToyParams(5, 5)), np.zeros((32, 32)))


def test_antisymmetry():
    for p in toy_params(50, 3):
        assert np.max(np.abs(toy_tile(p.mirrored()) + toy_tile(p))) < 1e-12
        assert p.d == 10 - p.a and p.e == 10 - p.b


def test_corner_value():
    t = toy_tile(ToyParams(0, 0, size=32, s=7.0))
    assert abs(t[0, 0] - 0.75 * (1 - np.exp(-200 / 7))) < 1e-12


def test_peak_location_uses_normalised_columns():
    t = toy_tile(ToyParams(9, 0, size=10))
    # the peak sits at c_x = 1 (last column), c_y = 0 (first row)
    assert np.unravel_index(np.argmax(t), t.shape) == (0, 9)


def test_dataset_determinism_and_range():
    a, ids = toy_dataset(30, 11)
    b, _ = toy_dataset(30, 11)
    assert np.array_equal(a, b) and a.shape == (30, 32, 32) and len(set(ids)) == 30
    assert np.all(np.abs(a) <= 0.75)
    assert not np.array_equal(a, toy_dataset(30, 12)[0])
    one, _ = toy_dataset(1, 0, size=8)
    assert one.shape == (1, 8, 8)
    with pytest.raises(ValueError):
        toy_dataset(0, 0)
    with pytest.raises(ValueError):
        ToyParams(1, 1, size=1)


def test_prefix_stability():
    # tile k depends only on (seed, k)
    assert np.array_equal(toy_dataset(5, 2)[0], toy_dataset(9, 2)[0][:5])


def test_tiling_counts_and_order():
    src = np.arange(64 * 64, dtype=float).reshape(64, 64)
    tiles, ids = tile_raster(src, 32)
    assert len(tiles) == 4 and ids == ["raster:0:0", "raster:0:32", "raster:32:0", "raster:32:32"]
    assert len(tile_raster(np.zeros((65, 64)), 32)[0]) == 4
    assert len(tile_raster(src, 32, stride=16)[0]) == 9
    with pytest.raises(ValueError):
        tile_raster(np.zeros((16, 16)), 32)
    with pytest.raises(ValueError):
        tile_raster(GridStack(np.zeros((2, 64, 64))), 32)


def test_tiles_reassemble_source():
    src = np.random.default_rng(0).normal(size=(70, 96))
    tiles, _ = tile_raster(GridStack(src[None]), 32)
    rows = [np.hstack(tiles[r * 3:(r + 1) * 3]) for r in range(2)]
    assert np.array_equal(np.vstack(rows), src[:64])
