"""Pure-numpy implementations of the hot inner loops."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.spatial.distance import cdist


def queen_neighbor_sum(z):
    """Sum of the 8 queen neighbours of every cell, for a (batch, rows, cols) stack."""
    b, h, w = z.shape
    p = np.zeros((b, h + 2, w + 2), dtype=np.float64)
    p[:, 1:-1, 1:-1] = z
    out = np.zeros_like(z, dtype=np.float64)
    for di in (0, 1, 2):
        for dj in (0, 1, 2):
            if di == 1 and dj == 1:
                continue
            out += p[:, di:di + h, dj:dj + w]
    return out


def im2col(xp, k, stride):
    """Patches of a padded (N, C, H, W) array as a (C*k*k, N*OH*OW) matrix."""
    n, c, h, w = xp.shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    win = win[:, :, :oh, :ow]
    return np.ascontiguousarray(win.transpose(1, 4, 5, 0, 2, 3)).reshape(c * k * k, n * oh * ow)


def col2im(cols, shape, k, stride):
    """Adjoint of :func:`im2col`: scatter-add patch gradients back onto the padded input."""
    n, c, h, w = shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    cols = cols.reshape(c, k, k, n, oh, ow)
    out = np.zeros(shape, dtype=np.float64)
    for ki in range(k):
        for kj in range(k):
            out[:, :, ki:ki + stride * oh:stride, kj:kj + stride * ow:stride] += (
                cols[:, ki, kj].transpose(1, 0, 2, 3)
            )
    return out


def sq_dists(x, y):
    return cdist(x, y, "sqeuclidean")


def idw_predict(coords, values, queries, power, tol):
    d = cdist(queries, coords)
    out = np.empty(len(queries), dtype=np.float64)
    hit = d < tol
    exact = hit.any(axis=1)
    if exact.any():
        out[exact] = values[np.argmax(hit[exact], axis=1)]
    rest = ~exact
    if rest.any():
        wts = d[rest] ** (-power)
        out[rest] = (wts @ values) / wts.sum(axis=1)
    return out
