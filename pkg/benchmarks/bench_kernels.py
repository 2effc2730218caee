"""Time the numba and numpy kernel backends on representative shapes.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from sxl import _kernels_numpy
from sxl.kernels import get_backend


def cases(rng):
    tiles = rng.normal(size=(32, 64, 64))
    padded = rng.normal(size=(16, 8, 66, 66))
    k, stride = 3, 1
    cols = _kernels_numpy.im2col(padded, k, stride)
    pts = rng.uniform(0, 64, size=(1024, 2))
    queries = rng.uniform(0, 64, size=(4096, 2))
    vals = rng.normal(size=len(pts))
    flat = rng.normal(size=(200, 1024))
    return {
        "queen_neighbor_sum 32x64x64": lambda m: m.queen_neighbor_sum(tiles),
        "im2col 16x8x66x66 k3": lambda m: m.im2col(padded, k, stride),
        "col2im 16x8x66x66 k3": lambda m: m.col2im(cols, padded.shape, k, stride),
        "sq_dists 200x200 d1024": lambda m: m.sq_dists(flat, flat),
        "idw_predict 1024 -> 4096": lambda m: m.idw_predict(pts, vals, queries, 2.0, 1e-12),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = {"numpy": get_backend("numpy")}
    try:
        backends["numba"] = get_backend("numba")
    except ImportError:
        print("numba not installed; timing numpy only")
    print(f"{'kernel':<28}" + "".join(f"{name:>12}" for name in backends) + f"{'ratio':>8}")
    for name, fn in cases(np.random.default_rng(0)).items():
        times = {}
        for label, mod in backends.items():
            fn(mod)  # warm-up (JIT compilation for numba)
            times[label] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        ratio = times["numpy"] / times["numba"] if "numba" in times else float("nan")
        print(f"{name:<28}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times.values()) + f"{ratio:>8.2f}")


if __name__ == "__main__":
    main()
