"""Hot numeric kernels with a numba path and a numpy/scipy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``GGAD_DISABLE_NUMBA`` is unset (or ``0``). Both paths are always
importable as ``*_numba`` / ``*_numpy`` so they can be compared directly.
"""

from __future__ import annotations

import os

import numpy as np
import scipy.sparse as sp

_DISABLE = os.environ.get("GGAD_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not _DISABLE


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy / scipy reference paths


def spmm_numpy(indptr, indices, data, x):
    n = len(indptr) - 1
    a = sp.csr_matrix((data, indices, indptr), shape=(n, x.shape[0]))
    return np.asarray(a @ x)


def mean_sq_dist_numpy(r, s, chunk=32):
    """Mean over rows of ``s`` of the squared distance to each row of ``r``."""
    out = np.zeros(r.shape[0])
    for start in range(0, s.shape[0], chunk):
        blk = s[start:start + chunk]
        diff = r[:, None, :] - blk[None, :, :]
        out += np.einsum("ijk,ijk->i", diff, diff)
    return out / s.shape[0]


def kde_eval_numpy(samples, grid, h, chunk=2048):
    dens = np.zeros(grid.shape[0])
    for start in range(0, samples.shape[0], chunk):
        blk = samples[start:start + chunk]
        z = (grid[:, None] - blk[None, :]) / h
        dens += np.exp(-0.5 * z * z).sum(axis=1)
    return dens / (samples.shape[0] * h * np.sqrt(2.0 * np.pi))


# ---------------------------------------------------------------------------
# numba paths

if HAS_NUMBA:

    @njit(cache=True)
    def spmm_numba(indptr, indices, data, x):
        n = indptr.shape[0] - 1
        d = x.shape[1]
        out = np.zeros((n, d))
        for i in range(n):
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                v = data[p]
                for k in range(d):
                    out[i, k] += v * x[j, k]
        return out

    @njit(cache=True)
    def mean_sq_dist_numba(r, s):
        n, d = r.shape
        m = s.shape[0]
        out = np.zeros(n)
        for i in range(n):
            acc = 0.0
            for j in range(m):
                for k in range(d):
                    t = r[i, k] - s[j, k]
                    acc += t * t
            out[i] = acc / m
        return out

    @njit(cache=True)
    def kde_eval_numba(samples, grid, h):
        g = grid.shape[0]
        n = samples.shape[0]
        dens = np.zeros(g)
        for a in range(g):
            acc = 0.0
            x = grid[a]
            for b in range(n):
                z = (x - samples[b]) / h
                acc += np.exp(-0.5 * z * z)
            dens[a] = acc
        return dens / (n * h * np.sqrt(2.0 * np.pi))

else:  # pragma: no cover
    spmm_numba = spmm_numpy
    mean_sq_dist_numba = mean_sq_dist_numpy
    kde_eval_numba = kde_eval_numpy


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def spmm(indptr, indices, data, x):
    """CSR matrix times dense matrix."""
    x = _f64(x)
    if USE_NUMBA:
        return spmm_numba(np.ascontiguousarray(indptr, dtype=np.int64),
                          np.ascontiguousarray(indices, dtype=np.int64), _f64(data), x)
    return spmm_numpy(indptr, indices, data, x)


def mean_sq_dist(r, s):
    if USE_NUMBA:
        return mean_sq_dist_numba(_f64(r), _f64(s))
    return mean_sq_dist_numpy(_f64(r), _f64(s))


def kde_eval(samples, grid, h):
    if USE_NUMBA:
        return kde_eval_numba(_f64(samples), _f64(grid), float(h))
    return kde_eval_numpy(_f64(samples), _f64(grid), float(h))
