import numpy as np
import pytest

from sxl import nn
from sxl.autodiff import Tensor
from sxl.datagen import toy_dataset
from sxl.grid import split_dataset
from sxl.interp.cnn import InterpCNN, InterpData, load_model, train_interp_run
from sxl.moran import local_moran_batch


@pytest.fixture(scope="module")
def data():
    tiles, ids = toy_dataset(60, 3, size=16)
    return InterpData.from_tiles(*split_dataset(ids, 0).select(tiles, ids))


def test_data_pairs_and_standardised_moran(data):
    assert data.x_train.shape[1:] == (8, 8) and data.y_train.shape[1:] == (16, 16)
    np.testing.assert_array_equal(data.x_val, data.y_val[:, ::2, ::2])
    raw = local_moran_batch(data.y_train)
    np.testing.assert_allclose(data.moran_train * data.moran_scale, raw, atol=1e-12)
    assert abs(data.moran_train.std() - 1.0) < 1e-12


def test_runs_are_deterministic(data):
    a = train_interp_run(data, "mat", "uw", seed=4, epochs=2, batch_size=8)
    b = train_interp_run(data, "mat", "uw", seed=4, epochs=2, batch_size=8)
    assert a.rmse_no_selection == b.rmse_no_selection and a.rmse_selected == b.rmse_selected
    assert a.val_rmse == b.val_rmse and a.sigmas == b.sigmas
    c = train_interp_run(data, "mat", "uw", seed=5, epochs=2, batch_size=8)
    assert c.rmse_no_selection != a.rmse_no_selection


def test_result_fields(data):
    r = train_interp_run(data, "none", "uw", seed=0, epochs=3, batch_size=8)
    assert r.weighting == "none" and r.sigmas == []
    assert len(r.val_rmse) == 3 and r.best_epoch == int(np.argmin(r.val_rmse)) + 1
    assert np.isfinite(r.rmse_no_selection) and np.isfinite(r.rmse_selected)
    model = load_model(r.best_state)
    assert model.aux is None
    m = train_interp_run(data, "mat", "lambda:0.1", seed=0, epochs=1, batch_size=8)
    assert m.sigmas == []
    with pytest.raises(ValueError):
        train_interp_run(data, "mres", "uw")


def test_best_state_reproduces_selected_rmse(data):
    from sxl.metrics import rmse
    r = train_interp_run(data, "mat", "uw", seed=1, epochs=3, batch_size=8)
    model = load_model(r.best_state, aux=True)
    assert rmse(data.y_test, model.predict(data.x_test)) == r.rmse_selected


def _grads(module):
    return {name: p.grad.copy() for name, p in module.named_parameters()}


def test_trunk_shared_heads_separate():
    model = InterpCNN(np.random.default_rng(0), width=4, aux=True)
    x = Tensor(np.random.default_rng(1).normal(size=(3, 1, 6, 6)))
    main, aux = model(x)
    assert main.shape == aux.shape == (3, 1, 12, 12)

    model.zero_grad()
    nn.l1_loss(aux, Tensor(np.zeros(aux.shape))).backward()
    assert all(not g.any() for g in _grads(model.main).values())
    assert all(g.any() for n, g in _grads(model.trunk).items() if "weight" in n)

    model.zero_grad()
    main, aux = model(x)
    nn.mse_loss(main, Tensor(np.zeros(main.shape))).backward()
    assert all(not g.any() for g in _grads(model.aux).values())
    assert all(g.any() for n, g in _grads(model.trunk).items() if "weight" in n)
