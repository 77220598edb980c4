# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Same contracts as ``bglrf._pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef void _index_tables(Py_ssize_t n, Py_ssize_t start, Py_ssize_t step, Py_ssize_t size,
                        Py_ssize_t p, Py_ssize_t[:, ::1] out):
    cdef Py_ssize_t i, a, c = p // 2, v
    for i in range(out.shape[0]):
        for a in range(p):
            v = (start + i * step - (a - c)) % size
            if v < 0:
                v += size
            out[i, a] = v


def normal_apply(const double[:, :, ::1] x, const double[:, ::1] kernel, Py_ssize_t ratio,
                 Py_ssize_t r0, Py_ssize_t c0):
    """C(K)^* P^* P C(K) x evaluated only at the decimation samples."""
    cdef Py_ssize_t B = x.shape[0], H = x.shape[1], W = x.shape[2], p = kernel.shape[0]
    cdef Py_ssize_t h = H // ratio, w = W // ratio
    cdef Py_ssize_t l, i, j, a, b, rr
    cdef double v, ka
    out_arr = np.zeros((B, H, W))
    cdef double[:, :, ::1] out = out_arr
    rows_arr = np.empty((h, p), dtype=np.intp)
    cols_arr = np.empty((w, p), dtype=np.intp)
    cdef Py_ssize_t[:, ::1] rows = rows_arr
    cdef Py_ssize_t[:, ::1] cols = cols_arr
    _index_tables(h, r0, ratio, H, p, rows)
    _index_tables(w, c0, ratio, W, p, cols)
    with nogil:
        for l in range(B):
            for i in range(h):
                for j in range(w):
                    v = 0.0
                    for a in range(p):
                        rr = rows[i, a]
                        for b in range(p):
                            v = v + kernel[a, b] * x[l, rr, cols[j, b]]
                    for a in range(p):
                        rr = rows[i, a]
                        for b in range(p):
                            out[l, rr, cols[j, b]] += kernel[a, b] * v
    return out_arr


def kernel_gram(const double[:, :, ::1] x, const double[:, :, ::1] y, Py_ssize_t p, Py_ssize_t ratio,
                Py_ssize_t r0, Py_ssize_t c0):
    cdef Py_ssize_t B = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t h = y.shape[1], w = y.shape[2], q = p * p
    cdef Py_ssize_t l, i, j, a, b, u, t
    cdef double yv, pu
    gram_arr = np.zeros((q, q))
    rhs_arr = np.zeros(q)
    patch_arr = np.empty(q)
    cdef double[:, ::1] gram = gram_arr
    cdef double[::1] rhs = rhs_arr
    cdef double[::1] patch = patch_arr
    rows_arr = np.empty((h, p), dtype=np.intp)
    cols_arr = np.empty((w, p), dtype=np.intp)
    cdef Py_ssize_t[:, ::1] rows = rows_arr
    cdef Py_ssize_t[:, ::1] cols = cols_arr
    _index_tables(h, r0, ratio, H, p, rows)
    _index_tables(w, c0, ratio, W, p, cols)
    with nogil:
        for l in range(B):
            for i in range(h):
                for j in range(w):
                    for a in range(p):
                        for b in range(p):
                            patch[a * p + b] = x[l, rows[i, a], cols[j, b]]
                    yv = y[l, i, j]
                    for u in range(q):
                        pu = patch[u]
                        rhs[u] += pu * yv
                        for t in range(u, q):
                            gram[u, t] += pu * patch[t]
        for u in range(q):
            for t in range(u + 1, q):
                gram[t, u] = gram[u, t]
    return gram_arr, rhs_arr


cdef int _cholesky_inverse(double[:, ::1] m, double[:, ::1] inv, double[:, ::1] low) noexcept nogil:
    """Invert SPD ``m`` into ``inv`` via Cholesky; ``low`` is scratch. Returns 0 on success."""
    cdef Py_ssize_t n = m.shape[0], i, j, k
    cdef double s
    for i in range(n):
        for j in range(i + 1):
            s = m[i, j]
            for k in range(j):
                s -= low[i, k] * low[j, k]
            if i == j:
                if s <= 0.0:
                    return 1
                low[i, i] = sqrt(s)
            else:
                low[i, j] = s / low[j, j]
    # inv = L^-T L^-1, column by column
    for j in range(n):
        for i in range(n):
            s = 1.0 if i == j else 0.0
            for k in range(i):
                s -= low[i, k] * inv[k, j]
            inv[i, j] = s / low[i, i]
        for i in range(n - 1, -1, -1):
            s = inv[i, j]
            for k in range(i + 1, n):
                s -= low[k, i] * inv[k, j]
            inv[i, j] = s / low[i, i]
    return 0


def matting_triplets(const double[:, :, ::1] z, Py_ssize_t radius, double eps):
    cdef Py_ssize_t B = z.shape[0], H = z.shape[1], W = z.shape[2]
    cdef Py_ssize_t wsz = 2 * radius + 1, n = wsz * wsz
    cdef Py_ssize_t nwr = H - wsz + 1, nwc = W - wsz + 1
    cdef Py_ssize_t nwin = nwr * nwc if nwr > 0 and nwc > 0 else 0
    cdef Py_ssize_t k, wi, wj, ii, jj, a, b, base, pos, r, c
    cdef double s, inv_n = 1.0 / n
    rows_arr = np.empty(nwin * n * n, dtype=np.int64)
    cols_arr = np.empty(nwin * n * n, dtype=np.int64)
    vals_arr = np.empty(nwin * n * n)
    cdef long long[::1] rows = rows_arr
    cdef long long[::1] cols = cols_arr
    cdef double[::1] vals = vals_arr
    idx_arr = np.empty(n, dtype=np.int64)
    dev_arr = np.empty((n, B))
    mu_arr = np.empty(B)
    cov_arr = np.empty((B, B))
    inv_arr = np.empty((B, B))
    low_arr = np.zeros((B, B))
    tmp_arr = np.empty((n, B))
    cdef long long[::1] idx = idx_arr
    cdef double[:, ::1] dev = dev_arr
    cdef double[::1] mu = mu_arr
    cdef double[:, ::1] cov = cov_arr
    cdef double[:, ::1] inv = inv_arr
    cdef double[:, ::1] low = low_arr
    cdef double[:, ::1] tmp = tmp_arr
    cdef int failed = 0
    with nogil:
        k = 0
        for wi in range(nwr):
            for wj in range(nwc):
                for a in range(B):
                    mu[a] = 0.0
                for r in range(wsz):
                    for c in range(wsz):
                        ii = r * wsz + c
                        idx[ii] = (wi + r) * W + (wj + c)
                        for a in range(B):
                            dev[ii, a] = z[a, wi + r, wj + c]
                            mu[a] += dev[ii, a]
                for a in range(B):
                    mu[a] *= inv_n
                for ii in range(n):
                    for a in range(B):
                        dev[ii, a] -= mu[a]
                for a in range(B):
                    for b in range(B):
                        s = 0.0
                        for ii in range(n):
                            s += dev[ii, a] * dev[ii, b]
                        cov[a, b] = s * inv_n
                    cov[a, a] += eps * inv_n
                if _cholesky_inverse(cov, inv, low):
                    failed = 1
                    break
                for ii in range(n):
                    for b in range(B):
                        s = 0.0
                        for a in range(B):
                            s += dev[ii, a] * inv[a, b]
                        tmp[ii, b] = s
                base = k * n * n
                for ii in range(n):
                    for jj in range(n):
                        s = 0.0
                        for b in range(B):
                            s += tmp[ii, b] * dev[jj, b]
                        pos = base + ii * n + jj
                        rows[pos] = idx[ii]
                        cols[pos] = idx[jj]
                        vals[pos] = (1.0 if ii == jj else 0.0) - (1.0 + s) * inv_n
                k += 1
            if failed:
                break
    if failed:
        raise ArithmeticError("window covariance is not positive definite")
    return rows_arr, cols_arr, vals_arr
