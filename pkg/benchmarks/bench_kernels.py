"""Time the numba kernels against the numpy/scipy fallbacks on pipeline-sized inputs.

    python benchmarks/bench_kernels.py [--nodes 5000] [--repeat 5]

Each kernel is run once first so JIT compilation is excluded from the timings.
"""

import argparse
import time

import numpy as np
import scipy.sparse as sp

from ggad import kernels


def best_of(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n, rng):
    a = sp.random(n, n, density=8.0 / n, random_state=rng, format="csr")
    a = (a + a.T).tocsr()
    x = rng.standard_normal((n, 64))
    r = rng.standard_normal((n, 192))
    s = r[rng.choice(n, 256, replace=False)]
    samples = rng.random(min(n, 10_000))
    grid = np.linspace(-0.1, 1.1, 512)
    return {
        "spmm": ((kernels.spmm_numba, kernels.spmm_numpy),
                 (a.indptr.astype(np.int64), a.indices.astype(np.int64), a.data, x)),
        "mean_sq_dist": ((kernels.mean_sq_dist_numba, kernels.mean_sq_dist_numpy), (r, s)),
        "kde_eval": ((kernels.kde_eval_numba, kernels.kde_eval_numpy), (samples, grid, 0.02)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=5000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args(argv)
    if not kernels.HAS_NUMBA:
        print("numba is not importable; only the numpy path exists")
        return
    print(f"N={a.nodes}  best of {a.repeat}")
    print(f"{'kernel':14s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, ((fast, ref), args) in cases(a.nodes, np.random.default_rng(a.seed)).items():
        t_fast, t_ref = best_of(fast, args, a.repeat), best_of(ref, args, a.repeat)
        diff = float(np.max(np.abs(fast(*args) - ref(*args))))
        print(f"{name:14s} {t_fast * 1e3:10.2f} {t_ref * 1e3:10.2f} {t_ref / t_fast:8.2f} {diff:11.2e}")


if __name__ == "__main__":
    main()
