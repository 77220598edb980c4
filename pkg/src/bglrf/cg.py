"""Conjugate gradient over an abstract symmetric positive definite operator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericalError


@dataclass
class LinearOperator:
    """A symmetric PSD map on flat vectors of length ``n``."""

    n: int
    apply: Callable[[np.ndarray], np.ndarray]

    def __call__(self, v):
        return self.apply(v)


@dataclass
class CgReport:
    iterations: int
    residual: float
    converged: bool

    def as_dict(self):
        return {"iterations": self.iterations, "residual": self.residual,
                "converged": self.converged}


def cg_solve(A, b, x0=None, tol=1e-8, max_iter=500, callback=None):
    """Solve ``A x = b`` by conjugate gradients.

    ``A`` is a :class:`LinearOperator` or any callable on flat vectors.
    Stops once ``||b - A x|| <= tol * ||b||``. Returns the iterate with the
    smallest residual seen together with a :class:`CgReport`; hitting
    ``max_iter`` is reported, not raised. ``callback(it, x, rel_residual)``
    is called after every iteration.
    """
    apply = A.apply if isinstance(A, LinearOperator) else A
    b = np.asarray(b, dtype=np.float64).ravel()
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64).ravel()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), CgReport(0, 0.0, True)

    r = b - apply(x)
    rr = float(r @ r)
    if not np.isfinite(rr):
        raise NumericalError("non-finite residual at CG start")
    best_x, best_res = x.copy(), np.sqrt(rr) / bnorm
    d = r.copy()
    it = 0
    while best_res > tol and it < max_iter:
        Ad = apply(d)
        dAd = float(d @ Ad)
        if not np.isfinite(dAd):
            raise NumericalError("non-finite curvature in CG")
        if dAd <= 0.0:
            # operator lost positive definiteness on the Krylov space
            break
        step = rr / dAd
        x += step * d
        r -= step * Ad
        rr_new = float(r @ r)
        if not np.isfinite(rr_new):
            raise NumericalError("non-finite residual in CG")
        it += 1
        res = np.sqrt(rr_new) / bnorm
        if callback is not None:
            callback(it, x, res)
        if res < best_res:
            best_x[:] = x
            best_res = res
        d *= rr_new / rr
        d += r
        rr = rr_new

    true_res = float(np.linalg.norm(b - apply(best_x)) / bnorm)
    return best_x, CgReport(it, true_res, true_res <= tol)


@dataclass(frozen=True)
class CgConfig:
    tol: float = 1e-8
    max_iter: int = 500
