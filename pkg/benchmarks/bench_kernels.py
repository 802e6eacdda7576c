"""Timing comparison of the compiled and pure-numpy entrywise kernels.

Usage: python benchmarks/bench_kernels.py [--sizes 20000,80000,320000]

Times `tucker_gather` (sparse evaluation) and `gradient_blocks` (the four
partial-derivative blocks) on the same random workloads for both backends
and prints a table with the speedup. The compiled backend is skipped when
the extension is not built.
"""

import argparse
import sys
import time

import numpy as np

from tuckercomp.kernels import _sparse_np

try:
    from tuckercomp.kernels import _sparse_cy
except ImportError:
    _sparse_cy = None


def _workload(rng, n, dims=(120, 110, 100), rank=(6, 5, 4)):
    core = np.ascontiguousarray(rng.standard_normal(rank))
    us = [np.ascontiguousarray(rng.standard_normal((d, r))) for d, r in zip(dims, rank)]
    i1 = rng.integers(0, dims[0], n).astype(np.int64)
    i2 = rng.integers(0, dims[1], n).astype(np.int64)
    i3 = rng.integers(0, dims[2], n).astype(np.int64)
    w = rng.standard_normal(n)
    return core, us, i1, i2, i3, w


def _best_of(fn, reps=5):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="20000,80000,320000")
    parser.add_argument("--reps", type=int, default=5)
    args = parser.parse_args(argv)
    sizes = [int(s) for s in args.sizes.split(",")]

    rng = np.random.default_rng(0)
    backends = [("numpy", _sparse_np)]
    if _sparse_cy is not None:
        backends.insert(0, ("cython", _sparse_cy))
    else:
        print("compiled backend not built; timing numpy only", file=sys.stderr)

    print("%-18s %10s" % ("kernel/nnz", "") + "".join("%14s" % name for name, _ in backends)
          + ("%10s" % "speedup" if len(backends) == 2 else ""))
    for n in sizes:
        core, us, i1, i2, i3, w = _workload(rng, n)
        for label, call in (
            ("tucker_gather", lambda impl: impl.tucker_gather(core, *us, i1, i2, i3)),
            ("gradient_blocks", lambda impl: impl.gradient_blocks(core, *us, i1, i2, i3, w)),
        ):
            times = [_best_of(lambda impl=impl: call(impl), args.reps) for _, impl in backends]
            row = "%-18s %10d" % (label, n)
            row += "".join("%12.2f ms" % (t * 1e3) for t in times)
            if len(times) == 2:
                row += "%9.1fx" % (times[1] / times[0])
            print(row)
    if len(backends) == 2:
        core, us, i1, i2, i3, w = _workload(rng, 10000)
        a = _sparse_cy.tucker_gather(core, *us, i1, i2, i3)
        b = _sparse_np.tucker_gather(core, *us, i1, i2, i3)
        print("max |cython - numpy| on tucker_gather: %.3e" % np.abs(a - b).max())
    return 0


if __name__ == "__main__":
    sys.exit(main())
