"""Backend selection for the numeric hot loops.

numba is used when importable unless ``SXL_DISABLE_NUMBA`` is set to a truthy
value, in which case the pure-numpy path is used. Both backends expose the same
functions: ``queen_neighbor_sum``, ``im2col``, ``col2im``, ``sq_dists`` and
``idw_predict``. The module-level wrappers route each call to the backend that
measured faster in ``benchmarks/bench_kernels.py``: the compiled neighbour sum,
and numpy's vectorised gathers and scipy's distance routines for the rest. Both
full backends stay available through :func:`get_backend`.
"""
import os

import numpy as np

from . import _kernels_numpy

_TRUTHY = {"1", "true", "yes", "on"}


def _load_numba():
    try:
        from . import _kernels_numba
    except ImportError:
        return None
    return _kernels_numba


def numba_disabled():
    return os.environ.get("SXL_DISABLE_NUMBA", "").strip().lower() in _TRUTHY


def get_backend(name=None):
    """Return the kernel module for ``name`` ("numpy", "numba" or None for the default)."""
    if name is None:
        name = "numpy" if numba_disabled() else "numba"
    if name == "numpy":
        return _kernels_numpy
    if name == "numba":
        mod = _load_numba()
        if mod is None:
            raise ImportError("numba backend requested but numba is not installed")
        return mod
    raise ValueError(f"unknown kernel backend {name!r}")


def _default():
    mod = _load_numba() if not numba_disabled() else None
    return mod or _kernels_numpy


_impl = _default()
BACKEND = "numba" if _impl is not _kernels_numpy else "numpy"


def queen_neighbor_sum(z):
    return _impl.queen_neighbor_sum(np.ascontiguousarray(z, dtype=np.float64))


def im2col(xp, k, stride):
    return _kernels_numpy.im2col(np.ascontiguousarray(xp, dtype=np.float64), k, stride)


def col2im(cols, shape, k, stride):
    return _kernels_numpy.col2im(cols, tuple(shape), k, stride)


def sq_dists(x, y):
    return _kernels_numpy.sq_dists(np.ascontiguousarray(x, dtype=np.float64),
                                   np.ascontiguousarray(y, dtype=np.float64))


def idw_predict(coords, values, queries, power=2.0, tol=1e-12):
    return _kernels_numpy.idw_predict(
        np.ascontiguousarray(coords, dtype=np.float64),
        np.ascontiguousarray(values, dtype=np.float64),
        np.ascontiguousarray(queries, dtype=np.float64),
        float(power),
        float(tol),
    )
