import numpy as np
import pytest

from oracles import numeric_grad, rel_error
from sxl import autodiff as ad
from sxl import nn
from sxl.autodiff import Tensor


def test_square_gradient():
    x = Tensor(3.0, requires_grad=True)
    (x * x).backward()
    assert x.grad == 6.0


def test_diamond_graph_accumulates_both_paths():
    x = Tensor(2.5, requires_grad=True)
    (x * x + x).backward()
    assert x.grad == 2 * 2.5 + 1


def test_backward_twice_doubles():
    rng = np.random.default_rng(0)
    layer = nn.Linear(3, 2, rng)
    x = Tensor(rng.normal(size=(4, 3)))
    loss = (layer(x) * layer(x)).sum()
    loss.backward()
    first = [p.grad.copy() for p in layer.parameters()]
    loss.backward()
    for p, g in zip(layer.parameters(), first):
        assert np.array_equal(p.grad, 2 * g)


def test_non_scalar_backward_rejected():
    with pytest.raises(ValueError):
        Tensor(np.ones(3), requires_grad=True).backward()


def test_broadcast_gradients_reduce_to_shape():
    a = Tensor(np.ones((3, 4)), requires_grad=True)
    b = Tensor(np.ones((1, 4)), requires_grad=True)
    (a * b + b).sum().backward()
    assert b.grad.shape == (1, 4) and np.all(b.grad == 6)


def test_detach_stops_gradient():
    x = Tensor(2.0, requires_grad=True)
    y = x.detach() * x
    y.backward()
    assert x.grad == 2.0


@pytest.mark.parametrize("op", ["exp", "log", "abs", "relu", "leaky", "sigmoid", "tanh", "pow", "div",
                                "transpose", "matmul", "upsample", "clip"])
def test_elementwise_and_shape_ops(op):
    rng = np.random.default_rng(hash(op) % 2 ** 32)
    x = Tensor(rng.uniform(0.2, 2.0, size=(2, 3, 4, 4)) * rng.choice([-1, 1], size=(2, 3, 4, 4)),
               requires_grad=True)
    if op in ("log", "pow"):
        x.value[...] = np.abs(x.value)
    w = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
    proj = None
    fns = {
        "exp": lambda: ad.exp(x), "log": lambda: ad.log(x), "abs": lambda: ad.tabs(x),
        "relu": lambda: ad.relu(x), "leaky": lambda: ad.leaky_relu(x, 0.2),
        "sigmoid": lambda: ad.sigmoid(x), "tanh": lambda: ad.tanh(x), "pow": lambda: x ** 1.7,
        "div": lambda: 1.0 / (x * x + 1.0), "transpose": lambda: x.transpose(3, 1, 0, 2),
        "matmul": lambda: x.reshape(24, 4) @ w, "upsample": lambda: ad.upsample_nn(x, 2),
        "clip": lambda: ad.clip(x, -1.0, 1.0),
    }
    out = fns[op]()
    proj = rng.normal(size=out.shape)

    def f():
        return float((fns[op]().value * proj).sum())

    x.zero_grad()
    w.zero_grad()
    (fns[op]() * proj).sum().backward()
    for leaf in (x, w) if op == "matmul" else (x,):
        assert rel_error(leaf.grad, numeric_grad(f, leaf.value)) < 1e-4
