"""Side-by-side timing of the compiled and pure-numpy kernel paths.

Run:  python benchmarks/bench_kernels.py [--nodes N] [--edges M] [--dim D]

The same functions back both paths (see chainrec.backend); CHAINREC_NUMBA=0
selects the numpy fallback at import time, so this script calls the private
implementations directly to compare them inside one process.
"""

import argparse
import time

import numpy as np

from chainrec import backend
from chainrec.sparse import build_struct


def timeit(fn, repeats=20):
    fn()  # warm (and JIT-compile on the numba path)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--nodes", type=int, default=30_000)
    parser.add_argument("--edges", type=int, default=120_000)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    half = args.nodes // 2
    u = rng.integers(0, half, size=args.edges)
    v = rng.integers(half, args.nodes, size=args.edges)
    pairs = np.unique(u * np.int64(args.nodes) + v)
    struct = build_struct(args.nodes, pairs // args.nodes, pairs % args.nodes)
    x = rng.normal(size=(args.nodes, args.dim))
    vals = rng.normal(size=struct.nnz)
    g = rng.normal(size=(args.nodes, args.dim))
    idx = rng.integers(0, args.nodes, size=4096)
    rows_grad = rng.normal(size=(idx.shape[0], args.dim))
    seg_idx = struct.rows
    seg_vals = rng.normal(size=struct.nnz)

    if not backend.numba_enabled():
        print("numba path unavailable (CHAINREC_NUMBA=0 or import failure); "
              "timing numpy only")

    cases = [
        ("spmm", lambda: backend._spmm_numpy(struct.indptr, struct.cols, vals, x),
         (lambda: backend._spmm_numba(struct.indptr, struct.cols, vals, x))
         if backend.numba_enabled() else None),
        ("spmm_grad_vals",
         lambda: backend._spmm_grad_vals_numpy(struct.rows, struct.cols, g, x),
         (lambda: backend._spmm_grad_vals_numba(struct.rows, struct.cols, g, x))
         if backend.numba_enabled() else None),
        ("scatter_add_rows",
         lambda: backend._scatter_add_rows_numpy(idx, rows_grad, args.nodes),
         (lambda: backend._scatter_add_rows_numba(idx, rows_grad, args.nodes))
         if backend.numba_enabled() else None),
        ("segment_sum",
         lambda: backend._segment_sum_numpy(seg_idx, seg_vals, args.nodes),
         (lambda: backend._segment_sum_numba(seg_idx, seg_vals, args.nodes))
         if backend.numba_enabled() else None),
    ]

    print(f"nodes={args.nodes} directed-nnz={struct.nnz} dim={args.dim} "
          f"repeats={args.repeats}")
    print(f"{'kernel':<18}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for name, slow, fast in cases:
        t_np = timeit(slow, args.repeats)
        if fast is None:
            print(f"{name:<18}{t_np * 1e3:>10.2f}ms{'-':>12}{'-':>10}")
            continue
        t_nb = timeit(fast, args.repeats)
        out_np, out_nb = slow(), fast()
        assert np.allclose(out_np, out_nb, rtol=1e-10, atol=1e-10)
        print(f"{name:<18}{t_np * 1e3:>10.2f}ms{t_nb * 1e3:>10.2f}ms"
              f"{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
