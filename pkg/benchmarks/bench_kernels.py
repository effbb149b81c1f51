"""Time the numba kernels against their pure-numpy fallbacks.

Run:  python benchmarks/bench_kernels.py
The active package path is whatever HETODE_DISABLE_NUMBA selects; this
script always times both flavours explicitly.
"""

import time

import numpy as np

from hetode import _kernels


def bench(label, fn, reps):
    fn()  # warm-up (and numba compile)
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    dt = (time.perf_counter() - t0) / reps
    print(f"  {label:<12} {dt * 1e3:9.3f} ms")
    return dt


def compare(name, numba_fn, numpy_fn, reps=20):
    print(f"{name}:")
    if _kernels.HAVE_NUMBA:
        a = bench("numba", numba_fn, reps)
    else:
        a = None
        print("  numba        (not installed)")
    b = bench("numpy", numpy_fn, reps)
    if a:
        print(f"  speedup      {b / a:9.1f}x")


def main():
    rng = np.random.default_rng(0)

    t500 = np.linspace(1.0, 4000.0, 500)
    compare(
        "rbf_covariance n=500",
        lambda: _kernels._rbf_covariance_numba(t500, 800.0, 900.0),
        lambda: _kernels.rbf_covariance_numpy(t500, 800.0, 900.0),
    )

    compare(
        "sir_rk4 53 weeks @ 0.01",
        lambda: _kernels._sir_rk4_numba(0.19, 1.4, 8.5, 0.02, 53.0, 0.01),
        lambda: _kernels.sir_rk4_numpy(0.19, 1.4, 8.5, 0.02, 53.0, 0.01),
        reps=5,
    )

    x = rng.normal(size=(2000, 2))
    z = rng.normal(size=(2000, 2))
    compare(
        "mmd_sums 2000x2000",
        lambda: _kernels._mmd_sums_numba(x, z, 1.0),
        lambda: _kernels.mmd_sums_numpy(x, z, 1.0),
        reps=3,
    )

    pooled = rng.normal(size=(3000, 2))
    compare(
        "pairwise_distances n=3000",
        lambda: _kernels._pairwise_distances_numba(pooled),
        lambda: _kernels.pairwise_distances_numpy(pooled),
        reps=3,
    )


if __name__ == "__main__":
    print(f"numba available: {_kernels.HAVE_NUMBA}; package using numba: {_kernels.USING_NUMBA}")
    main()
