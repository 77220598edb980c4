"""Outer fusion loop, non-blind solve, bicubic initialization and objective."""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, spatial
from .cg import CgConfig, LinearOperator, cg_solve
from .cube import Cube
from .errors import NumericalError, ValidationError
from .kernel_admm import (
    AdmmConfig,
    KernelSystem,
    default_tau,
    solve_kernel_subproblem,
    total_variation,
)
from .laplacian import LaplacianConfig, build_matting_laplacian, quadratic_form

log = logging.getLogger(__name__)

MODES = ("blind", "nonblind", "no-glr")


@dataclass
class FusionConfig:
    alpha: float = 10.0
    beta: float = 10.0
    tau_k: float | None = None     # None: proportional default, see default_tau
    tau_x: float | None = None
    kernel_size: int = 13
    ratio: int = 4
    phase: tuple = (0, 0)
    outer_iters: int = 30
    outer_tol: float = 1e-5
    mode: str = "blind"
    init_kernel: str = "none"      # "none" or "centered"
    admm: AdmmConfig = field(default_factory=AdmmConfig)
    cg_x: CgConfig = field(default_factory=lambda: CgConfig(tol=1e-8, max_iter=500))
    cg_k: CgConfig = field(default_factory=lambda: CgConfig(tol=1e-8, max_iter=200))
    laplacian: LaplacianConfig = field(default_factory=LaplacianConfig)

    def __post_init__(self):
        self.phase = tuple(int(v) for v in self.phase)
        self.validate()

    def validate(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.init_kernel not in ("none", "centered"):
            raise ValidationError(f"init_kernel must be 'none' or 'centered', got {self.init_kernel!r}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValidationError(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if self.ratio < 1:
            raise ValidationError(f"ratio must be >= 1, got {self.ratio}")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValidationError(f"{name} must be finite and nonnegative, got {v}")
        for name in ("tau_k", "tau_x"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be positive, got {v}")
        if self.outer_iters < 1:
            raise ValidationError("outer_iters must be >= 1")
        spatial.DownsampleSpec(self.ratio, self.phase)

    @property
    def downsample(self):
        return spatial.DownsampleSpec(self.ratio, self.phase)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["phase"] = list(self.phase)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown fusion config keys: {sorted(unknown)}")
        nested = {"admm": AdmmConfig, "cg_x": CgConfig, "cg_k": CgConfig,
                  "laplacian": LaplacianConfig}
        defaults = cls()
        for key, typ in nested.items():
            if key in d and isinstance(d[key], dict):
                base = dataclasses.asdict(getattr(defaults, key))
                extra = set(d[key]) - set(base)
                if extra:
                    raise ValidationError(f"unknown keys in {key}: {sorted(extra)}")
                base.update(d[key])
                d[key] = typ(**base)
        try:
            return cls(**d)
        except TypeError as exc:
            raise ValidationError(str(exc)) from exc


@dataclass
class FusionResult:
    x: Cube
    kernel: np.ndarray
    objective: list
    mode: str
    x_reports: list = field(default_factory=list)
    k_reports: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def centroid(self):
        return spatial.kernel_centroid(self.kernel)


# --- bicubic initialization ----------------------------------------------

def _keys(s, a=-0.5):
    s = np.abs(s)
    out = np.zeros_like(s)
    m1 = s <= 1
    m2 = (s > 1) & (s < 2)
    out[m1] = (a + 2) * s[m1] ** 3 - (a + 3) * s[m1] ** 2 + 1
    out[m2] = a * s[m2] ** 3 - 5 * a * s[m2] ** 2 + 8 * a * s[m2] - 4 * a
    return out


def _cubic_matrix(n, d, phase):
    """(n*d, n) interpolation matrix; fine index u reads coarse position (u - phase) / d."""
    t = (np.arange(n * d) - phase) / d
    base = np.floor(t).astype(int)
    M = np.zeros((n * d, n))
    rows = np.arange(n * d)
    for k in range(-1, 3):
        idx = base + k
        w = _keys(t - idx)
        np.add.at(M, (rows, np.clip(idx, 0, n - 1)), w)
    return M


def bicubic_upsample(y, d: int, phase=(0, 0)) -> Cube:
    """Keys cubic (a = -0.5) upscaling of every band, replicate boundary.

    Fine pixel ``(d*i + phase_r, d*j + phase_c)`` coincides with coarse
    sample ``(i, j)``.
    """
    data = y.data if isinstance(y, Cube) else np.asarray(y, dtype=np.float64)
    if data.ndim == 2:
        data = data[None]
    if d < 1:
        raise ValidationError(f"ratio must be >= 1, got {d}")
    if d == 1:
        return Cube(data)
    _, h, w = data.shape
    Mr = _cubic_matrix(h, d, phase[0])
    Mc = _cubic_matrix(w, d, phase[1])
    return Cube(np.einsum("ri,bij,cj->brc", Mr, data, Mc))


# --- objective and X-system ------------------------------------------------

def _laplacian_term(L, x):
    B = x.shape[0]
    return quadratic_form(L, x.reshape(B, -1).T)


def objective_value(K, x, y, L, alpha, beta, spec=spatial.DownsampleSpec()) -> float:
    """||P C(K) X - Y||^2 + alpha Tr(X^T L X) + beta TV(K) + I_S(K)."""
    if not spatial.is_feasible(K, atol=1e-9):
        return float("inf")
    xd = x.data if isinstance(x, Cube) else np.asarray(x, dtype=np.float64)
    yd = y.data if isinstance(y, Cube) else np.asarray(y, dtype=np.float64)
    r = spatial.apply_degradation(xd, K, spec) - yd
    val = float(np.sum(r * r))
    if alpha and L is not None:
        val += alpha * _laplacian_term(L, xd)
    if beta:
        val += beta * total_variation(K)
    return val


def x_operator(K, shape, spec, L=None, alpha=0.0, tau=0.0) -> LinearOperator:
    """C(K)^* P^* P C(K) + alpha L + tau I on flattened band-major cubes."""
    B, H, W = shape
    K = np.ascontiguousarray(K, dtype=np.float64)
    use_l = L is not None and alpha != 0.0

    def apply(v):
        x = v.reshape(B, H, W)
        out = _kernels.normal_apply(x, K, spec.ratio, *spec.phase)
        if use_l:
            out += alpha * (L @ x.reshape(B, -1).T).T.reshape(B, H, W)
        if tau:
            out += tau * x
        return out.ravel()

    return LinearOperator(B * H * W, apply)


def solve_x(y, K, spec, L, alpha, tau, x_prev, cg_cfg: CgConfig, x0=None):
    """Solve (C^* P^* P C + alpha L + tau I) X = C^* P^* Y + tau X_prev by CG."""
    shape = x_prev.shape
    rhs = spatial.degradation_adjoint(y, K, spec)
    if tau:
        rhs = rhs + tau * x_prev
    op = x_operator(K, shape, spec, L, alpha, tau)
    start = x_prev if x0 is None else x0
    v, rep = cg_solve(op, rhs.ravel(), start.ravel(), tol=cg_cfg.tol, max_iter=cg_cfg.max_iter)
    x = v.reshape(shape)
    if not np.all(np.isfinite(x)):
        raise NumericalError("X update produced non-finite values")
    return x, rep


def _check_pair(y: Cube, z: Cube, d: int):
    if z.height != d * y.height or z.width != d * y.width:
        raise ValidationError(
            f"MSI {z.height}x{z.width} is not {d}x the HSI {y.height}x{y.width}"
        )


def fuse_nonblind(y: Cube, L, K, cfg: FusionConfig, x0=None):
    """Solve the known-kernel problem (C^* P^* P C + alpha L) X = C^* P^* Y.

    Returns ``(X, CgReport)``; CG failure is reported, not raised.
    """
    K = spatial.as_kernel(K)
    if not spatial.is_feasible(K, atol=1e-9):
        raise ValidationError("non-blind fusion needs a simplex-feasible kernel")
    spec = cfg.downsample
    if x0 is None:
        x0 = bicubic_upsample(y, cfg.ratio, cfg.phase)
    x0d = x0.data if isinstance(x0, Cube) else np.asarray(x0)
    alpha = cfg.alpha if L is not None else 0.0
    x, rep = solve_x(y.data, K, spec, L, alpha, 0.0, np.array(x0d), cfg.cg_x)
    return Cube(x), rep


def bglrf(y: Cube, z: Cube | None, cfg: FusionConfig, kernel=None, laplacian=None) -> FusionResult:
    """Blind fusion by proximal alternating minimization.

    Mode ``nonblind`` needs ``kernel``; ``no-glr`` ignores ``z`` and the
    Laplacian. A prebuilt ``laplacian`` may be passed to skip construction.
    """
    cfg.validate()
    spec = cfg.downsample
    timings = {"laplacian": 0.0, "init": 0.0, "kernel_update": 0.0, "x_update": 0.0}
    use_glr = cfg.mode != "no-glr" and cfg.alpha > 0
    alpha = cfg.alpha if use_glr else 0.0

    if use_glr:
        if z is None:
            raise ValidationError("graph Laplacian regularization needs the MSI")
        _check_pair(y, z, cfg.ratio)
        t0 = time.perf_counter()
        L = laplacian if laplacian is not None else build_matting_laplacian(z, cfg.laplacian)
        timings["laplacian"] = time.perf_counter() - t0
    else:
        L = None

    t0 = time.perf_counter()
    x = np.array(bicubic_upsample(y, cfg.ratio, cfg.phase).data)
    timings["init"] = time.perf_counter() - t0
    yd = y.data

    if cfg.mode == "nonblind":
        if kernel is None:
            raise ValidationError("nonblind mode needs a kernel")
        K = spatial.as_kernel(kernel)
        t0 = time.perf_counter()
        xc, rep = fuse_nonblind(y, L, K, dataclasses.replace(cfg, alpha=alpha), x0=x)
        timings["x_update"] = time.perf_counter() - t0
        obj = objective_value(K, xc, y, L, alpha, 0.0, spec)
        return FusionResult(xc, K, [obj], cfg.mode, [rep.as_dict()], [], timings)

    p = cfg.kernel_size
    if p > min(x.shape[1:]):
        raise ValidationError(f"kernel size {p} exceeds the SRI grid {x.shape[1]}x{x.shape[2]}")
    K_prev = spatial.delta_kernel(p) if cfg.init_kernel == "centered" else None
    trace, x_reports, k_reports = [], [], []
    K = K_prev

    for it in range(cfg.outer_iters):
        t0 = time.perf_counter()
        system = KernelSystem(x, yd, p, spec)
        K, krep = solve_kernel_subproblem(
            x, yd, K_prev, cfg.beta, cfg.tau_k, cfg.admm, cfg.cg_k, spec, p=p, system=system)
        timings["kernel_update"] += time.perf_counter() - t0
        k_reports.append(krep.as_dict())

        t0 = time.perf_counter()
        if cfg.tau_x is None:
            r = spatial.apply_degradation(x, K, spec) - yd
            tau_x = default_tau(float(np.sum(r * r)), x)
        else:
            tau_x = cfg.tau_x
        x, xrep = solve_x(yd, K, spec, L, alpha, tau_x, x, cfg.cg_x)
        timings["x_update"] += time.perf_counter() - t0
        xd = xrep.as_dict()
        xd["tau"] = tau_x
        x_reports.append(xd)

        obj = objective_value(K, x, yd, L, alpha, cfg.beta, spec)
        if not math.isfinite(obj):
            raise NumericalError(f"objective became non-finite at outer iteration {it}")
        trace.append(obj)
        log.info("outer %d: objective %.10g, kernel centroid %s", it, obj,
                 spatial.kernel_centroid(K))
        K_prev = K
        if it > 0 and abs(trace[-2] - obj) <= cfg.outer_tol * max(abs(trace[-2]), 1e-300):
            break

    return FusionResult(Cube(x), K, trace, cfg.mode, x_reports, k_reports, timings)


def run_report(result: FusionResult, cfg: FusionConfig, extra=None) -> dict:
    """JSON-ready summary of a fusion run."""
    rep = {
        "config": cfg.to_dict(),
        "mode": result.mode,
        "backend": _kernels.BACKEND,
        "objective_trace": [float(v) for v in result.objective],
        "outer_iterations": len(result.objective) if result.mode != "nonblind" else 0,
        "timings_sec": {k: round(v, 6) for k, v in result.timings.items()},
        "kernel_size": int(result.kernel.shape[0]),
        "kernel_centroid": list(result.centroid),
        "cg_x_iterations": [r["iterations"] for r in result.x_reports],
        "cg_x": result.x_reports,
        "admm": result.k_reports,
    }
    if extra:
        rep.update(extra)
    return rep
