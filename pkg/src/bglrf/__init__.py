"""Blind graph-Laplacian-regularized fusion of hyperspectral and multispectral cubes."""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .cube import Cube, read_cube, write_cube
from .driver import FusionConfig, FusionResult, bglrf, bicubic_upsample
from .metrics import MetricReport, evaluate
from .simulate import DegradeSpec, degrade, gaussian_kernel, make_phantom, synthetic_srf

__all__ = [
    "BACKEND", "Cube", "read_cube", "write_cube", "FusionConfig", "FusionResult",
    "bglrf", "bicubic_upsample", "MetricReport", "evaluate", "DegradeSpec", "degrade",
    "gaussian_kernel", "make_phantom", "synthetic_srf",
]
