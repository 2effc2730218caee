"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every operation returns a new :class:`Tensor` holding the forward value and a
closure mapping the output gradient to one gradient per parent. ``backward``
walks the graph once in reverse topological order. Only leaf tensors created
with ``requires_grad=True`` accumulate into ``.grad``; intermediate gradients
live for the duration of one backward call.
"""
import numpy as np

from . import kernels


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, value, requires_grad=False, name=None, _parents=(), _backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.value) if self.requires_grad and not _parents else None
        self._parents = _parents
        self._backward = _backward
        self.name = name

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def is_leaf(self):
        return not self._parents

    def item(self):
        return float(self.value.reshape(-1)[0]) if self.value.size == 1 else float(self.value)

    def numpy(self):
        return self.value

    def detach(self):
        return Tensor(self.value.copy())

    def zero_grad(self):
        if self.grad is not None:
            self.grad.fill(0.0)

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable leaf that requires grad."""
        if self.value.size != 1:
            raise ValueError(f"backward needs a scalar output, got shape {self.shape}")
        order = _topo_order(self)
        grads = {id(self): np.ones_like(self.value)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                if node.requires_grad:
                    node.grad += g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # arithmetic -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        other = _wrap(other)
        return mul(self, power(other, -1.0))

    def __rtruediv__(self, other):
        return mul(_wrap(other), power(self, -1.0))

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def abs(self):
        return tabs(self)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value, parents, backward):
    if any(p.requires_grad for p in parents):
        return Tensor(value, requires_grad=True, _parents=tuple(parents), _backward=backward)
    return Tensor(value)


def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# elementwise -------------------------------------------------------------

def add(a, b):
    a, b = _wrap(a), _wrap(b)
    return _make(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def neg(a):
    return _make(-a.value, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    return _make(a.value * b.value, (a, b),
                 lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def power(a, p):
    p = float(p)
    return _make(a.value ** p, (a,), lambda g: (g * p * a.value ** (p - 1.0),))


def exp(a):
    out = np.exp(a.value)
    return _make(out, (a,), lambda g: (g * out,))


def log(a):
    return _make(np.log(a.value), (a,), lambda g: (g / a.value,))


def tabs(a):
    # subgradient convention: d|x|/dx = 0 at x = 0
    return _make(np.abs(a.value), (a,), lambda g: (g * np.sign(a.value),))


def clip(a, lo, hi):
    inside = (a.value >= lo) & (a.value <= hi)
    return _make(np.clip(a.value, lo, hi), (a,), lambda g: (g * inside,))


def relu(a):
    mask = a.value > 0
    return _make(a.value * mask, (a,), lambda g: (g * mask,))


def leaky_relu(a, slope=0.2):
    scale = np.where(a.value > 0, 1.0, slope)
    return _make(a.value * scale, (a,), lambda g: (g * scale,))


def sigmoid(a):
    out = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a):
    out = np.tanh(a.value)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


# reductions and shape ----------------------------------------------------

def tsum(a, axis=None, keepdims=False):
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), back)


def tmean(a, axis=None, keepdims=False):
    n = a.value.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / n)


def reshape(a, shape):
    return _make(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None):
    inv = None if axes is None else np.argsort(axes)
    return _make(a.value.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    return _make(a.value @ b.value, (a, b), lambda g: (g @ b.value.T, a.value.T @ g))


def upsample_nn(a, factor):
    """Nearest-neighbour upsampling of the last two axes."""
    f = int(factor)
    out = np.repeat(np.repeat(a.value, f, axis=-2), f, axis=-1)

    def back(g):
        h, w = a.shape[-2:]
        return (g.reshape(*g.shape[:-2], h, f, w, f).sum(axis=(-3, -1)),)

    return _make(out, (a,), back)


# convolutions ------------------------------------------------------------

def conv2d(x, w, b=None, stride=1, padding=0):
    """Cross-correlation of ``x`` (N, C, H, W) with ``w`` (F, C, k, k)."""
    n, c, h, wd = x.shape
    f, cw, k, k2 = w.shape
    if cw != c or k != k2:
        raise ValueError(f"conv2d weight {w.shape} incompatible with input {x.shape}")
    p, s = int(padding), int(stride)
    xp = np.pad(x.value, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.value
    oh = (h + 2 * p - k) // s + 1
    ow = (wd + 2 * p - k) // s + 1
    if oh < 1 or ow < 1:
        raise ValueError(f"conv2d kernel {k} too large for input {x.shape} with padding {p}")
    cols = kernels.im2col(xp, k, s)
    wm = w.value.reshape(f, -1)
    out = wm @ cols
    if b is not None:
        out += b.value[:, None]
    out = out.reshape(f, n, oh, ow).transpose(1, 0, 2, 3)

    def back(g):
        g2 = g.transpose(1, 0, 2, 3).reshape(f, -1)
        dw = (g2 @ cols.T).reshape(w.shape)
        dx = None
        if x.requires_grad:
            dxp = kernels.col2im(wm.T @ g2, xp.shape, k, s)
            dx = dxp[:, :, p:p + h, p:p + wd] if p else dxp
        grads = (dx, dw)
        return grads + ((g2.sum(axis=1),) if b is not None else ())

    parents = (x, w) + ((b,) if b is not None else ())
    return _make(np.ascontiguousarray(out), parents, back)


def conv_transpose2d(x, w, b=None, stride=1, padding=0):
    """Transposed convolution of ``x`` (N, Cin, H, W) with ``w`` (Cin, Cout, k, k)."""
    n, cin, h, wd = x.shape
    cw, cout, k, k2 = w.shape
    if cw != cin or k != k2:
        raise ValueError(f"deconv2d weight {w.shape} incompatible with input {x.shape}")
    p, s = int(padding), int(stride)
    hf, wf = (h - 1) * s + k, (wd - 1) * s + k
    oh, ow = hf - 2 * p, wf - 2 * p
    if oh < 1 or ow < 1:
        raise ValueError(f"deconv2d padding {p} too large for input {x.shape}")
    x2 = x.value.transpose(1, 0, 2, 3).reshape(cin, -1)
    wm = w.value.reshape(cin, -1)
    full = kernels.col2im(wm.T @ x2, (n, cout, hf, wf), k, s)
    out = full[:, :, p:p + oh, p:p + ow]
    if b is not None:
        out = out + b.value.reshape(1, -1, 1, 1)

    def back(g):
        gf = np.pad(g, ((0, 0), (0, 0), (p, p), (p, p))) if p else g
        gcols = kernels.im2col(gf, k, s)
        dx = (wm @ gcols).reshape(cin, n, h, wd).transpose(1, 0, 2, 3)
        dw = (x2 @ gcols.T).reshape(w.shape)
        grads = (dx, dw)
        return grads + ((g.sum(axis=(0, 2, 3)),) if b is not None else ())

    parents = (x, w) + ((b,) if b is not None else ())
    return _make(np.ascontiguousarray(out), parents, back)


# normalisation -----------------------------------------------------------

def batch_norm(x, weight, bias, axes, eps):
    """Training-mode batch normalisation as one node; returns (out, batch mean, biased var)."""
    mean = x.value.mean(axis=axes, keepdims=True)
    centered = x.value - mean
    var = np.mean(centered * centered, axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat * weight.value + bias.value

    def back(g):
        dw = (g * xhat).sum(axis=axes, keepdims=True)
        db = g.sum(axis=axes, keepdims=True)
        dx = None
        if x.requires_grad:
            m = x.value.size // weight.value.size
            dx = (weight.value * inv / m) * (m * g - db - xhat * dw)
        return dx, dw, db

    return _make(out, (x, weight, bias), back), mean, var
