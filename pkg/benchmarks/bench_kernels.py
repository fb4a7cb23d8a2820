"""Compare the numba kernels with their pure-numpy fallbacks.

    python benchmarks/bench_kernels.py [--n 2000] [--density 0.005] [--repeat 5]

Each kernel runs once untimed (so JIT compilation is excluded), then the
best of ``--repeat`` timings is reported. Outputs are checked for bit
equality between the two paths before timing.
"""
import argparse
import time

import numpy as np

from oocgemm._jit import HAVE_NUMBA
from oocgemm.datasets import random_sparse
from oocgemm.kernels import fnv1a64, robw_bounds, spgemm_arrays, spmm_dense
from oocgemm.sparse import csr_to_bytes, csr_to_csc


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernels(n, density, features, seed):
    a = random_sparse(n, n, density, seed)
    b = csr_to_csc(random_sparse(n, features, 0.1, seed + 1))
    w = np.random.default_rng(seed).standard_normal((n, 32))
    blob = csr_to_bytes(a)
    m_a = 16 * int(np.diff(a.row_ptr).max()) * 8 + 64
    return {
        "spgemm": lambda be: spgemm_arrays(a.row_ptr, a.col_idx, a.values, b.col_ptr, b.row_idx, b.values,
                                           b.n_rows, backend=be)[:4],
        "spmm_dense": lambda be: (spmm_dense(a.row_ptr, a.col_idx, a.values, w, backend=be),),
        "robw_bounds": lambda be: (robw_bounds(a.row_ptr, m_a, 8, 16, backend=be),),
        "fnv1a64": lambda be: (np.uint64(fnv1a64(blob, backend=be)),),
    }


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--density", type=float, default=0.005)
    p.add_argument("--features", type=int, default=64)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    print(f"n={args.n} density={args.density} features={args.features}")
    print(f"{'kernel':<12} {'numpy_s':>10} {'numba_s':>10} {'speedup':>8}")
    for name, fn in kernels(args.n, args.density, args.features, args.seed).items():
        ref, got = fn("numpy"), fn("numba")
        for x, y in zip(ref, got):
            if np.asarray(x).tobytes() != np.asarray(y).tobytes():
                raise SystemExit(f"{name}: backends disagree")
        t_np = best_of(lambda: fn("numpy"), args.repeat)
        t_nb = best_of(lambda: fn("numba"), args.repeat)
        print(f"{name:<12} {t_np:>10.5f} {t_nb:>10.5f} {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
