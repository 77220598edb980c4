"""Pure numpy implementations of the hot kernels.

These are the reference fallbacks for ``_ckernels``. Signatures and output
ordering match exactly so the two can be swapped at import time.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import spatial


def sample_index_tables(H, W, p, ratio, r0, c0):
    """rows[i, a] / cols[j, b]: fine-grid source index of kernel tap (a, b) for sample (i, j)."""
    off = np.arange(p) - p // 2
    sr = np.arange(r0, H, ratio)
    sc = np.arange(c0, W, ratio)
    rows = (sr[:, None] - off[None, :]) % H
    cols = (sc[:, None] - off[None, :]) % W
    return rows, cols


def normal_apply(x, kernel, ratio, r0, c0):
    """C(K)^* P^* P C(K) x for a (B, H, W) stack."""
    spec = spatial.DownsampleSpec(ratio, (r0, c0))
    return spatial.degradation_normal(x, kernel, spec)


def kernel_gram(x, y, p, ratio, r0, c0):
    """Gram matrix and right-hand side of the kernel least-squares problem.

    Row ``s`` of the per-band design matrix holds the patch of ``x`` that a
    p x p kernel reads when producing low-resolution sample ``s``, so
    ``||P C(K) x_l - y_l||^2 = ||A_l vec(K) - y_l||^2``.
    """
    B, H, W = x.shape
    rows, cols = sample_index_tables(H, W, p, ratio, r0, c0)
    q = p * p
    gram = np.zeros((q, q))
    rhs = np.zeros(q)
    for l in range(B):
        A = x[l][rows[:, None, :, None], cols[None, :, None, :]].reshape(-1, q)
        gram += A.T @ A
        rhs += A.T @ y[l].ravel()
    return gram, rhs


def matting_triplets(z, radius, eps):
    """(rows, cols, vals) of every interior window's matting-Laplacian block.

    ``z`` is a band-major (B, H, W) stack. Windows are visited in row-major
    order of their centers; within a window, entries run over (i, j) pixel
    pairs in row-major window order.
    """
    B, H, W = z.shape
    w = 2 * radius + 1
    n = w * w
    idx = np.arange(H * W).reshape(H, W)
    win_idx = sliding_window_view(idx, (w, w)).reshape(-1, n)
    pix = z.reshape(B, -1).T[win_idx]                      # (nwin, n, B)
    mu = pix.mean(axis=1, keepdims=True)
    dev = pix - mu
    cov = np.einsum("kia,kib->kab", dev, dev) / n
    cov += (eps / n) * np.eye(B)
    inv = np.linalg.inv(cov)
    quad = np.einsum("kia,kab,kjb->kij", dev, inv, dev)
    vals = np.eye(n)[None] - (1.0 + quad) / n
    rows = np.repeat(win_idx, n, axis=1).ravel()
    cols = np.tile(win_idx, (1, n)).ravel()
    return rows.astype(np.int64), cols.astype(np.int64), vals.ravel()
