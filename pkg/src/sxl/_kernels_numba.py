"""numba-compiled versions of the kernels in ``_kernels_numpy``.

Signatures and results match the numpy path; the numpy path stays the reference.
"""
import numpy as np
from numba import njit

_opts = {"nogil": True, "cache": True, "fastmath": False}


@njit(**_opts)
def queen_neighbor_sum(z):
    b, h, w = z.shape
    out = np.zeros((b, h, w))
    for t in range(b):
        for i in range(h):
            for j in range(w):
                acc = 0.0
                for di in range(-1, 2):
                    ii = i + di
                    if ii < 0 or ii >= h:
                        continue
                    for dj in range(-1, 2):
                        jj = j + dj
                        if jj < 0 or jj >= w or (di == 0 and dj == 0):
                            continue
                        acc += z[t, ii, jj]
                out[t, i, j] = acc
    return out


@njit(**_opts)
def im2col(xp, k, stride):
    n, c, h, w = xp.shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    cols = np.empty((c * k * k, n * oh * ow))
    for ch in range(c):
        for ki in range(k):
            for kj in range(k):
                row = (ch * k + ki) * k + kj
                for s in range(n):
                    for i in range(oh):
                        base = (s * oh + i) * ow
                        src = i * stride + ki
                        if stride == 1:
                            cols[row, base:base + ow] = xp[s, ch, src, kj:kj + ow]
                        else:
                            for j in range(ow):
                                cols[row, base + j] = xp[s, ch, src, j * stride + kj]
    return cols


@njit(**_opts)
def _col2im(cols, n, c, h, w, k, stride):
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    out = np.zeros((n, c, h, w))
    for ch in range(c):
        for ki in range(k):
            for kj in range(k):
                row = (ch * k + ki) * k + kj
                for s in range(n):
                    for i in range(oh):
                        base = (s * oh + i) * ow
                        dst = i * stride + ki
                        if stride == 1:
                            out[s, ch, dst, kj:kj + ow] += cols[row, base:base + ow]
                        else:
                            for j in range(ow):
                                out[s, ch, dst, j * stride + kj] += cols[row, base + j]
    return out


def col2im(cols, shape, k, stride):
    n, c, h, w = shape
    return _col2im(np.ascontiguousarray(cols), n, c, h, w, k, stride)


@njit(**_opts)
def sq_dists(x, y):
    n, d = x.shape
    m = y.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(d):
                diff = x[i, t] - y[j, t]
                acc += diff * diff
            out[i, j] = acc
    return out


@njit(**_opts)
def idw_predict(coords, values, queries, power, tol):
    m = queries.shape[0]
    n = coords.shape[0]
    out = np.empty(m)
    for q in range(m):
        num = 0.0
        den = 0.0
        hit = -1
        for i in range(n):
            dr = queries[q, 0] - coords[i, 0]
            dc = queries[q, 1] - coords[i, 1]
            d = np.sqrt(dr * dr + dc * dc)
            if d < tol:
                hit = i
                break
            wt = d ** (-power)
            num += wt * values[i]
            den += wt
        out[q] = values[hit] if hit >= 0 else num / den
    return out
