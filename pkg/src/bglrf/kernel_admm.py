"""Blur-kernel update: least squares + isotropic TV + simplex, solved by ADMM.

For a fixed SRI estimate X the kernel solves::

    min_K  sum_l ||P C(X_l) J(K) - Y_l||^2 + beta TV(K) + I_S(K) + tau ||K - K_prev||^2

Splitting ``G = D(K)`` and a simplex copy ``K_s = K`` with scaled multipliers
``L1``, ``L2`` gives the sweep

    K   <- CG solve of (A^T A + mu D^T D + (tau + mu) I) K
                        = A^T y + mu D^T (G + L1) + mu (K_s + L2) + tau K_prev
    G   <- soft(D(K) - L1, beta / (2 mu))
    K_s <- proj_S(K - L2)
    L1  <- L1 + G - D(K);   L2 <- L2 + K_s - K
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels, spatial
from .cg import CgConfig, LinearOperator, cg_solve
from .errors import NumericalError, ValidationError


# --- difference operator -------------------------------------------------

def diff_forward(K) -> np.ndarray:
    """Forward differences on the kernel grid, replicate boundary.

    Returns a (p*p, 2) array; row ``a*p + b`` holds the horizontal difference
    ``K[a, b+1] - K[a, b]`` and the vertical one ``K[a+1, b] - K[a, b]``,
    zero on the last column / row respectively.
    """
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValidationError(f"kernel must be square, got {K.shape}")
    if K.shape[0] < 2:
        raise ValidationError("difference operator needs p >= 2")
    dx = np.zeros_like(K)
    dy = np.zeros_like(K)
    dx[:, :-1] = K[:, 1:] - K[:, :-1]
    dy[:-1, :] = K[1:, :] - K[:-1, :]
    return np.stack([dx.ravel(), dy.ravel()], axis=1)


def diff_adjoint(G, p: int) -> np.ndarray:
    """Adjoint of :func:`diff_forward` (negative divergence)."""
    G = np.asarray(G, dtype=np.float64)
    if p < 2:
        raise ValidationError("difference operator needs p >= 2")
    if G.shape != (p * p, 2):
        raise ValidationError(f"expected shape {(p * p, 2)}, got {G.shape}")
    dx = G[:, 0].reshape(p, p)
    dy = G[:, 1].reshape(p, p)
    out = np.zeros((p, p))
    out[:, :-1] -= dx[:, :-1]
    out[:, 1:] += dx[:, :-1]
    out[:-1, :] -= dy[:-1, :]
    out[1:, :] += dy[:-1, :]
    return out


def total_variation(K) -> float:
    """Isotropic TV: sum of per-pixel gradient norms."""
    if np.shape(K)[0] < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(diff_forward(K), axis=1)))


def group_soft_threshold(G, t: float) -> np.ndarray:
    """Shrink each row of G toward zero by ``t`` in Euclidean norm."""
    if t < 0:
        raise ValidationError(f"threshold must be nonnegative, got {t}")
    G = np.asarray(G, dtype=np.float64)
    norms = np.linalg.norm(G, axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > 0, np.maximum(1.0 - t / norms, 0.0), 0.0)
    return G * scale


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = 1}, any input shape.

    Sort-based: with u sorted descending, rho is the largest j such that
    u_j + (1 - sum_{i<=j} u_i) / j > 0 and the shift is that same quantity's
    offset at rho.
    """
    arr = np.asarray(v, dtype=np.float64)
    flat = arr.ravel()
    u = np.sort(flat)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, flat.size + 1)
    cond = u + (1.0 - css) / j > 0
    rho = np.nonzero(cond)[0][-1]
    shift = (1.0 - css[rho]) / (rho + 1)
    out = np.maximum(flat + shift, 0.0)
    # renormalize the support to remove rounding drift in the sum
    out /= out.sum()
    return out.reshape(arr.shape)


# --- data term ------------------------------------------------------------

class KernelSystem:
    """Quadratic data term ``sum_l ||P C(X_l) J(K) - Y_l||^2`` for fixed X.

    The normal matrix ``sum_l J^* C(X_l)^* P^* P C(X_l) J`` is only p^2 x p^2,
    so it is assembled once; :meth:`apply_fft` evaluates the same operator
    through FFTs as an independent route.
    """

    def __init__(self, x, y, p: int, spec: spatial.DownsampleSpec):
        x = np.ascontiguousarray(x, dtype=np.float64)
        y = np.ascontiguousarray(y, dtype=np.float64)
        if x.ndim == 2:
            x, y = x[None], y[None]
        B, H, W = x.shape
        spec.check(H, W)
        if y.shape != (B, H // spec.ratio, W // spec.ratio):
            raise ValidationError(
                f"HSI shape {y.shape} inconsistent with SRI {x.shape} at ratio {spec.ratio}"
            )
        if p % 2 == 0 or p > min(H, W):
            raise ValidationError(f"kernel size {p} must be odd and fit in {H}x{W}")
        self.x, self.y, self.p, self.spec = x, y, p, spec
        self.gram, rhs = _kernels.kernel_gram(x, y, p, spec.ratio, *spec.phase)
        self.rhs = rhs.reshape(p, p)
        self.yy = float(np.sum(y * y))

    def apply(self, K) -> np.ndarray:
        return (self.gram @ np.ravel(K)).reshape(self.p, self.p)

    def data_term(self, K) -> float:
        k = np.ravel(K)
        return float(max(k @ (self.gram @ k) - 2.0 * self.rhs.ravel() @ k + self.yy, 0.0))

    def data_term_direct(self, K) -> float:
        r = spatial.apply_degradation(self.x, K, self.spec) - self.y
        return float(np.sum(r * r))

    def apply_fft(self, K) -> np.ndarray:
        H, W = self.x.shape[-2:]
        e = spatial.embed_kernel(K, (H, W))
        fwd = spatial.convolve_image(self.x, e)
        back = spatial.correlate_image(self.x, spatial.upsample_zero(
            spatial.downsample(fwd, self.spec), self.spec))
        return spatial.embed_adjoint(back.sum(axis=0), self.p)

    def rhs_fft(self) -> np.ndarray:
        back = spatial.correlate_image(self.x, spatial.upsample_zero(self.y, self.spec))
        return spatial.embed_adjoint(back.sum(axis=0), self.p)


# --- ADMM -------------------------------------------------------------------

@dataclass(frozen=True)
class AdmmConfig:
    mu: float = 1.0
    max_iters: int = 100
    tol: float = 1e-6          # early stop: primal and dual residuals all < tol * p

    def __post_init__(self):
        if not self.mu > 0:
            raise ValidationError(f"ADMM penalty must be positive, got {self.mu}")


@dataclass
class AdmmReport:
    sweeps: int = 0
    residual_tv: list = field(default_factory=list)
    residual_simplex: list = field(default_factory=list)
    residual_dual: list = field(default_factory=list)
    cg_iterations: list = field(default_factory=list)
    objective_before: float = float("nan")
    objective_after: float = float("nan")
    tau: float = 0.0
    kept_previous: bool = False

    def as_dict(self):
        return {
            "sweeps": self.sweeps,
            "final_residual_tv": self.residual_tv[-1] if self.residual_tv else None,
            "final_residual_simplex": self.residual_simplex[-1] if self.residual_simplex else None,
            "cg_iterations_total": int(sum(self.cg_iterations)),
            "objective_before": self.objective_before,
            "objective_after": self.objective_after,
            "tau": self.tau,
            "kept_previous": self.kept_previous,
        }


def kernel_objective(system: KernelSystem, K, beta, tau=0.0, K_prev=None) -> float:
    """Kernel-update objective; +inf outside the simplex."""
    if not spatial.is_feasible(K, atol=1e-9):
        return float("inf")
    val = system.data_term(K) + beta * total_variation(K)
    if K_prev is not None and tau:
        val += tau * float(np.sum((np.asarray(K) - K_prev) ** 2))
    return val


def default_tau(data_value, reference) -> float:
    """1e-3 * data / (||reference||^2 + 1), clamped to [1e-8, 1]."""
    t = 1e-3 * data_value / (float(np.sum(np.square(reference))) + 1.0)
    return float(np.clip(t, 1e-8, 1.0))


def solve_kernel_subproblem(x, y, K_prev, beta, tau=None, admm: AdmmConfig = AdmmConfig(),
                            cg_cfg: CgConfig = CgConfig(max_iter=200),
                            spec: spatial.DownsampleSpec = spatial.DownsampleSpec(),
                            p=None, system=None):
    """Run ADMM sweeps on the kernel subproblem and return ``(K, report)``.

    ``K_prev=None`` drops the inertia term (first outer iteration) and starts
    from the uniform kernel; ``p`` must then be given. ``tau=None`` picks
    :func:`default_tau`. The returned kernel is the simplex copy, and if it
    does not improve on a feasible ``K_prev`` the previous kernel is kept.
    """
    if beta < 0:
        raise ValidationError(f"beta must be nonnegative, got {beta}")
    if K_prev is not None:
        K_prev = spatial.as_kernel(K_prev)
        p = K_prev.shape[0]
    elif p is None:
        raise ValidationError("kernel size p is required when K_prev is None")
    if system is None:
        system = KernelSystem(x, y, p, spec)
    mu = admm.mu

    if K_prev is None:
        tau = 0.0
        K = np.full((p, p), 1.0 / (p * p))
        ref = np.zeros((p, p))
    else:
        if tau is None:
            tau = default_tau(system.data_term(K_prev), K_prev)
        if tau < 0:
            raise ValidationError(f"tau must be nonnegative, got {tau}")
        K = K_prev.copy()
        ref = K_prev
    report = AdmmReport(tau=float(tau))

    if p == 1:
        # the only kernel in the 1x1 simplex
        K1 = np.ones((1, 1))
        report.objective_after = kernel_objective(system, K1, beta)
        return K1, report

    prev_feasible = K_prev is not None and spatial.is_feasible(K_prev, atol=1e-9)
    if prev_feasible:
        report.objective_before = kernel_objective(system, K_prev, beta, tau, K_prev)

    G = diff_forward(K)
    Ks = project_simplex(K)
    L1 = np.zeros_like(G)
    L2 = np.zeros_like(K)

    def op(v):
        Kv = v.reshape(p, p)
        out = system.apply(Kv) + mu * diff_adjoint(diff_forward(Kv), p) + (tau + mu) * Kv
        return out.ravel()

    A = LinearOperator(p * p, op)
    stop = admm.tol * p
    for _ in range(admm.max_iters):
        b = system.rhs + mu * diff_adjoint(G + L1, p) + mu * (Ks + L2) + tau * ref
        k, rep = cg_solve(A, b.ravel(), K.ravel(), tol=cg_cfg.tol, max_iter=cg_cfg.max_iter)
        K = k.reshape(p, p)
        if not np.all(np.isfinite(K)):
            raise NumericalError("kernel update produced non-finite values")
        DK = diff_forward(K)
        G_old, Ks_old = G, Ks
        G = group_soft_threshold(DK - L1, beta / (2.0 * mu))
        Ks = project_simplex(K - L2)
        L1 += G - DK
        L2 += Ks - K
        report.sweeps += 1
        report.cg_iterations.append(rep.iterations)
        r_tv = float(np.linalg.norm(G - DK))
        r_s = float(np.linalg.norm(Ks - K))
        report.residual_tv.append(r_tv)
        report.residual_simplex.append(r_s)
        # dual residual: movement of the split variables, scaled by mu
        dual = mu * (np.linalg.norm(G - G_old) + np.linalg.norm(Ks - Ks_old))
        report.residual_dual.append(float(dual))
        if r_tv < stop and r_s < stop and dual < stop:
            break

    report.objective_after = kernel_objective(system, Ks, beta, tau, K_prev)
    if prev_feasible and report.objective_after > report.objective_before:
        report.kept_previous = True
        report.objective_after = report.objective_before
        return K_prev.copy(), report
    return Ks, report
