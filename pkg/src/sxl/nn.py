"""Layers, losses and containers on top of :mod:`sxl.autodiff`."""
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

BCE_CLAMP = 1e-7


def parameter(value, name=None):
    return Tensor(value, requires_grad=True, name=name)


class Module:
    """Base class. Parameters are leaf tensors with ``requires_grad``; buffers are
    plain arrays listed in ``_buffer_names``. Submodules are discovered from
    attributes (including lists of modules) in assignment order."""

    training = True
    _buffer_names = ()

    def __call__(self, *args):
        return self.forward(*args)

    def forward(self, x):
        raise NotImplementedError

    def children(self):
        for key, val in vars(self).items():
            if isinstance(val, Module):
                yield key, val
            elif isinstance(val, (list, tuple)) and val and all(isinstance(m, Module) for m in val):
                for i, m in enumerate(val):
                    yield f"{key}.{i}", m

    def named_parameters(self, prefix=""):
        for key, val in vars(self).items():
            if isinstance(val, Tensor) and val.requires_grad:
                yield prefix + key, val
        for key, child in self.children():
            yield from child.named_parameters(f"{prefix}{key}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for key in self._buffer_names:
            yield prefix + key, getattr(self, key)
        for key, child in self.children():
            yield from child.named_buffers(f"{prefix}{key}.")

    def train(self, mode=True):
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self, prefix=""):
        out = OrderedDict()
        for name, p in self.named_parameters(prefix):
            out[name] = p.value.copy()
        for name, b in self.named_buffers(prefix):
            out[name] = np.array(b, dtype=np.float64, copy=True)
        return out

    def load_state_dict(self, state, prefix=""):
        for name, p in self.named_parameters(prefix):
            if state[name].shape != p.shape:
                raise ValueError(f"{name}: shape {state[name].shape} != {p.shape}")
            p.value[...] = state[name]
        for name, owner, key in self._buffer_slots(prefix):
            setattr(owner, key, np.array(state[name], dtype=np.float64, copy=True))

    def _buffer_slots(self, prefix=""):
        for key in self._buffer_names:
            yield prefix + key, self, key
        for key, child in self.children():
            yield from child._buffer_slots(f"{prefix}{key}.")


class Linear(Module):
    def __init__(self, in_features, out_features, rng):
        bound = 1.0 / np.sqrt(in_features)
        self.in_features, self.out_features = in_features, out_features
        self.weight = parameter(rng.uniform(-bound, bound, (in_features, out_features)))
        self.bias = parameter(np.zeros(out_features))

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(f"linear expects (N, {self.in_features}), got {x.shape}")
        return x @ self.weight + self.bias


class Conv2d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, rng, stride=1, padding=0):
        fan_in = in_channels * kernel_size * kernel_size
        bound = 1.0 / np.sqrt(fan_in)
        self.in_channels = in_channels
        self.stride, self.padding = stride, padding
        self.weight = parameter(
            rng.uniform(-bound, bound, (out_channels, in_channels, kernel_size, kernel_size)))
        self.bias = parameter(np.zeros(out_channels))

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(f"conv2d expects (N, {self.in_channels}, H, W), got {x.shape}")
        return ad.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose2d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, rng, stride=1, padding=0):
        fan_in = in_channels * kernel_size * kernel_size
        bound = 1.0 / np.sqrt(fan_in)
        self.in_channels = in_channels
        self.stride, self.padding = stride, padding
        self.weight = parameter(
            rng.uniform(-bound, bound, (in_channels, out_channels, kernel_size, kernel_size)))
        self.bias = parameter(np.zeros(out_channels))

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(f"deconv2d expects (N, {self.in_channels}, H, W), got {x.shape}")
        return ad.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding)


class _BatchNorm(Module):
    _buffer_names = ("running_mean", "running_var")
    _axes = None
    _bshape = None

    def __init__(self, num_features, momentum=0.1, eps=1e-5):
        self.num_features = num_features
        self.momentum, self.eps = momentum, eps
        shape = self._bshape(num_features)
        self.weight = parameter(np.ones(shape))
        self.bias = parameter(np.zeros(shape))
        self.running_mean = np.zeros(shape)
        self.running_var = np.ones(shape)

    def _check(self, x):
        raise NotImplementedError

    def forward(self, x):
        self._check(x)
        if not self.training:
            scale = 1.0 / np.sqrt(self.running_var + self.eps)
            return (x - self.running_mean) * scale * self.weight + self.bias
        axes = self._axes
        count = x.value.size // self.num_features
        if count < 2:
            raise ValueError("batch norm in training mode needs more than one value per channel")
        out, mean, var = ad.batch_norm(x, self.weight, self.bias, axes, self.eps)
        m = self.momentum
        self.running_mean = (1 - m) * self.running_mean + m * mean
        self.running_var = (1 - m) * self.running_var + m * var * count / (count - 1)
        return out


class BatchNorm1d(_BatchNorm):
    _axes = (0,)

    @staticmethod
    def _bshape(n):
        return (1, n)

    def _check(self, x):
        if x.ndim != 2 or x.shape[1] != self.num_features:
            raise ValueError(f"batchnorm1d expects (N, {self.num_features}), got {x.shape}")


class BatchNorm2d(_BatchNorm):
    _axes = (0, 2, 3)

    @staticmethod
    def _bshape(n):
        return (1, n, 1, 1)

    def _check(self, x):
        if x.ndim != 4 or x.shape[1] != self.num_features:
            raise ValueError(f"batchnorm2d expects (N, {self.num_features}, H, W), got {x.shape}")


class ReLU(Module):
    def forward(self, x):
        return ad.relu(x)


class LeakyReLU(Module):
    def __init__(self, slope=0.2):
        self.slope = slope

    def forward(self, x):
        return ad.leaky_relu(x, self.slope)


class Sigmoid(Module):
    def forward(self, x):
        return ad.sigmoid(x)


class Tanh(Module):
    def forward(self, x):
        return ad.tanh(x)


class UpsampleNN(Module):
    def __init__(self, factor=2):
        self.factor = factor

    def forward(self, x):
        return ad.upsample_nn(x, self.factor)


class Reshape(Module):
    """Reshape keeping the batch axis: ``(N, ...) -> (N, *shape)``."""

    def __init__(self, *shape):
        self.target = tuple(shape)

    def forward(self, x):
        return x.reshape((x.shape[0],) + self.target)


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def forward(self, x):
        for i, layer in enumerate(self.layers):
            try:
                x = layer(x)
            except ValueError as exc:
                raise ValueError(f"layer {i} ({type(layer).__name__}): {exc}") from None
        return x

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, i):
        return self.layers[i]


@dataclass(frozen=True)
class LayerSpec:
    """Declarative layer description, e.g. ``LayerSpec("conv2d", {"in": 1, "out": 8, "kernel": 3})``."""

    kind: str
    params: dict = field(default_factory=dict)


def conv_output_size(size, kernel, stride=1, padding=0):
    return (size + 2 * padding - kernel) // stride + 1


def build_layer(spec, rng):
    k, p = spec.kind, spec.params
    if k == "linear":
        return Linear(p["in"], p["out"], rng)
    if k == "conv2d":
        return Conv2d(p["in"], p["out"], p["kernel"], rng, p.get("stride", 1), p.get("padding", 0))
    if k == "deconv2d":
        return ConvTranspose2d(p["in"], p["out"], p["kernel"], rng,
                               p.get("stride", 1), p.get("padding", 0))
    if k == "batchnorm1d":
        return BatchNorm1d(p["features"])
    if k == "batchnorm2d":
        return BatchNorm2d(p["features"])
    if k == "relu":
        return ReLU()
    if k == "leaky_relu":
        return LeakyReLU(p.get("slope", 0.2))
    if k == "sigmoid":
        return Sigmoid()
    if k == "tanh":
        return Tanh()
    if k == "upsample_nn":
        return UpsampleNN(p.get("factor", 2))
    if k == "reshape":
        return Reshape(*p["shape"])
    raise ValueError(f"unknown layer kind {k!r}")


def build(specs, rng):
    return Sequential(*(build_layer(s, rng) for s in specs))


def forward(layers, x):
    if not isinstance(x, Tensor):
        x = Tensor(x)
    return layers(x)


# losses ------------------------------------------------------------------

def _check_pair(pred, target, name):
    if pred.shape != target.shape:
        raise ValueError(f"{name}: prediction shape {pred.shape} != target shape {target.shape}")


def mse_loss(pred, target):
    target = ad._wrap(target)
    _check_pair(pred, target, "mse")
    d = pred - target
    return (d * d).mean()


def l1_loss(pred, target):
    target = ad._wrap(target)
    _check_pair(pred, target, "l1")
    return (pred - target).abs().mean()


def bce_loss(prob, label):
    """Mean binary cross-entropy; probabilities are clamped to [1e-7, 1 - 1e-7]."""
    if not isinstance(label, Tensor):
        label = Tensor(np.broadcast_to(np.asarray(label, dtype=np.float64), prob.shape))
    _check_pair(prob, label, "bce")
    p = ad.clip(prob, BCE_CLAMP, 1.0 - BCE_CLAMP)
    y = label.value
    return -(ad.log(p) * y + ad.log(1.0 - p) * (1.0 - y)).mean()
