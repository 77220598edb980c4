"""Matting Laplacian on MSI pixel vectors and the graph-Laplacian regularizer.

For every fully interior ``(2r+1) x (2r+1)`` window ``w`` with pixel vectors
``p_i``, mean ``mu_w`` and population covariance ``S_w``::

    L[i, j] += delta_ij - (1 + (p_i - mu_w)^T (S_w + eps/|w| I)^-1 (p_j - mu_w)) / |w|

The result is symmetric, positive semidefinite and annihilates constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .cube import Cube
from .errors import ValidationError


@dataclass(frozen=True)
class LaplacianConfig:
    radius: int = 1
    eps: float = 1e-7

    def __post_init__(self):
        if int(self.radius) != self.radius or self.radius < 1:
            raise ValidationError(f"window radius must be an integer >= 1, got {self.radius}")
        if not self.eps > 0:
            raise ValidationError(f"eps must be positive, got {self.eps}")


def build_matting_laplacian(z, cfg: LaplacianConfig = LaplacianConfig()) -> sp.csr_matrix:
    """Assemble L(Z) as a CSR matrix of size (H*W, H*W).

    ``z`` is a :class:`Cube` or a band-major ``(B, H, W)`` array.
    """
    data = z.data if isinstance(z, Cube) else np.asarray(z, dtype=np.float64)
    if data.ndim == 2:
        data = data[None]
    B, H, W = data.shape
    w = 2 * cfg.radius + 1
    if H < w or W < w:
        raise ValidationError(f"image {H}x{W} smaller than the {w}x{w} window")
    rows, cols, vals = _kernels.matting_triplets(np.ascontiguousarray(data), cfg.radius, cfg.eps)
    n = H * W
    # coo -> csr sums duplicates in a fixed order, so the result is deterministic
    L = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    L.sum_duplicates()
    L.sort_indices()
    return L


def _as_pixel_matrix(x, n):
    X = np.asarray(x, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != n:
        raise ValidationError(f"matrix has {X.shape[0]} rows, Laplacian has dimension {n}")
    return X


def apply_laplacian(L, x) -> np.ndarray:
    """L X for a matricized ``(pixels, bands)`` X."""
    X = _as_pixel_matrix(x, L.shape[0])
    return L @ X


def quadratic_form(L, x) -> float:
    """Tr(X^T L X)."""
    X = _as_pixel_matrix(x, L.shape[0])
    return float(np.sum(X * (L @ X)))


def pairwise_form(L, x) -> float:
    """1/2 sum_{i != j} w_ij ||X_i - X_j||^2 with w_ij = -L_ij.

    Equal to :func:`quadratic_form` whenever the rows of L sum to zero.
    """
    X = _as_pixel_matrix(x, L.shape[0])
    C = sp.coo_matrix(L)
    off = C.row != C.col
    i, j, w = C.row[off], C.col[off], -C.data[off]
    diff = X[i] - X[j]
    return float(0.5 * np.sum(w * np.sum(diff * diff, axis=1)))


def write_triplets(L, path) -> None:
    """Debug export: one ``row col value`` line per stored entry."""
    C = sp.coo_matrix(L)
    with open(path, "w") as fh:
        for r, c, v in zip(C.row, C.col, C.data):
            fh.write(f"{int(r)} {int(c)} {float(v)!r}\n")
