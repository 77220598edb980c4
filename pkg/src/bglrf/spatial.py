"""Periodic blur, kernel embedding and decimation operators with adjoints.

Images are 2-D ``(H, W)`` arrays or stacks ``(..., H, W)``; every operator
acts on the last two axes so a whole band-major cube goes through in one call.

Kernel convention: a ``p x p`` kernel (``p`` odd) has its center at
``(p // 2, p // 2)``. Entry ``K[a, b]`` sits at offset ``(a - c, b - c)`` and

    (C(K) x)[n] = sum_{a,b} K[a, b] * x[n - (a - c, b - c)]   (indices mod H, W)

so a kernel whose mass lies right of center moves image content right.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class DownsampleSpec:
    """Pure decimation by ``ratio`` keeping samples at ``phase`` (row, col)."""

    ratio: int = 1
    phase: tuple = (0, 0)

    def __post_init__(self):
        if int(self.ratio) != self.ratio or self.ratio < 1:
            raise ValidationError(f"downsampling ratio must be a positive integer, got {self.ratio}")
        r0, c0 = self.phase
        if not (0 <= r0 < self.ratio and 0 <= c0 < self.ratio):
            raise ValidationError(f"phase {self.phase} outside [0, {self.ratio})")
        object.__setattr__(self, "phase", (int(r0), int(c0)))

    def check(self, height, width):
        if height % self.ratio or width % self.ratio:
            raise ValidationError(
                f"image {height}x{width} is not divisible by ratio {self.ratio}"
            )

    def sample_rows(self, height):
        return np.arange(self.phase[0], height, self.ratio)

    def sample_cols(self, width):
        return np.arange(self.phase[1], width, self.ratio)


def as_kernel(kernel) -> np.ndarray:
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] % 2 == 0:
        raise ValidationError(f"kernel must be square with odd size, got shape {k.shape}")
    return k


def is_feasible(kernel, atol=1e-12) -> bool:
    """Simplex membership: nonnegative entries summing to one."""
    k = np.asarray(kernel, dtype=np.float64)
    return bool(np.all(k >= 0.0) and abs(k.sum() - 1.0) <= atol)


def kernel_centroid(kernel):
    """Center of mass as a (row, col) offset from the kernel center."""
    k = as_kernel(kernel)
    c = k.shape[0] // 2
    off = np.arange(k.shape[0]) - c
    total = k.sum()
    return (float(off @ k.sum(axis=1) / total), float(off @ k.sum(axis=0) / total))


def delta_kernel(p: int, shift=(0, 0)) -> np.ndarray:
    k = np.zeros((p, p))
    k[p // 2 + shift[0], p // 2 + shift[1]] = 1.0
    return k


def _kernel_offsets(p):
    return np.arange(p) - p // 2


def embed_kernel(kernel, shape) -> np.ndarray:
    """Zero-pad to ``shape`` and circularly shift so the kernel center is at (0, 0)."""
    k = as_kernel(kernel)
    H, W = shape
    p = k.shape[0]
    if p > min(H, W):
        raise ValidationError(f"kernel size {p} exceeds image {H}x{W}")
    out = np.zeros((H, W))
    off = _kernel_offsets(p)
    out[np.ix_(off % H, off % W)] = k
    return out


def embed_adjoint(image, p: int) -> np.ndarray:
    """Read back the p x p window that ``embed_kernel`` writes to."""
    img = np.asarray(image, dtype=np.float64)
    H, W = img.shape[-2:]
    if p % 2 == 0 or p < 1:
        raise ValidationError(f"kernel size must be odd and positive, got {p}")
    if p > min(H, W):
        raise ValidationError(f"kernel size {p} exceeds image {H}x{W}")
    off = _kernel_offsets(p)
    return img[..., (off % H)[:, None], (off % W)[None, :]]


def kernel_transfer(kernel, shape) -> np.ndarray:
    """Half-spectrum transfer function of C(K) on an image of ``shape``."""
    return np.fft.rfft2(embed_kernel(kernel, shape))


def _check_image(x, kernel):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 2:
        raise ValidationError("image must have at least two dimensions")
    p = np.shape(kernel)[0]
    if p > min(x.shape[-2:]):
        raise ValidationError(f"kernel size {p} exceeds image {x.shape[-2]}x{x.shape[-1]}")
    return x


def convolve_circular(x, kernel) -> np.ndarray:
    """C(K) x via FFT, applied to the trailing two axes."""
    x = _check_image(x, kernel)
    H, W = x.shape[-2:]
    otf = kernel_transfer(kernel, (H, W))
    return np.fft.irfft2(np.fft.rfft2(x) * otf, s=(H, W))


def correlate_circular(x, kernel) -> np.ndarray:
    """C(K)^* x, the adjoint of :func:`convolve_circular`."""
    x = _check_image(x, kernel)
    H, W = x.shape[-2:]
    otf = kernel_transfer(kernel, (H, W))
    return np.fft.irfft2(np.fft.rfft2(x) * np.conj(otf), s=(H, W))


def convolve_image(x, v) -> np.ndarray:
    """C(x) v: circular convolution of ``v`` by a full-size image ``x`` (no recentering)."""
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    H, W = x.shape[-2:]
    return np.fft.irfft2(np.fft.rfft2(x) * np.fft.rfft2(v), s=(H, W))


def correlate_image(x, v) -> np.ndarray:
    """C(x)^* v."""
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    H, W = x.shape[-2:]
    return np.fft.irfft2(np.conj(np.fft.rfft2(x)) * np.fft.rfft2(v), s=(H, W))


def downsample(x, spec: DownsampleSpec) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    spec.check(*x.shape[-2:])
    r0, c0 = spec.phase
    return x[..., r0::spec.ratio, c0::spec.ratio].copy()


def upsample_zero(y, spec: DownsampleSpec) -> np.ndarray:
    """P^*: place samples back on the fine grid, zeros elsewhere."""
    y = np.asarray(y, dtype=np.float64)
    h, w = y.shape[-2:]
    out = np.zeros(y.shape[:-2] + (h * spec.ratio, w * spec.ratio))
    r0, c0 = spec.phase
    out[..., r0::spec.ratio, c0::spec.ratio] = y
    return out


def apply_degradation(x, kernel, spec: DownsampleSpec) -> np.ndarray:
    """P C(K) x per band; ``x`` is (H, W) or (B, H, W)."""
    return downsample(convolve_circular(x, kernel), spec)


def degradation_adjoint(y, kernel, spec: DownsampleSpec) -> np.ndarray:
    """C(K)^* P^* y."""
    return correlate_circular(upsample_zero(y, spec), kernel)


def degradation_normal(x, kernel, spec: DownsampleSpec) -> np.ndarray:
    """C(K)^* P^* P C(K) x through the FFT route."""
    x = np.asarray(x, dtype=np.float64)
    H, W = x.shape[-2:]
    spec.check(H, W)
    otf = kernel_transfer(kernel, (H, W))
    blurred = np.fft.irfft2(np.fft.rfft2(x) * otf, s=(H, W))
    r0, c0 = spec.phase
    masked = np.zeros_like(blurred)
    masked[..., r0::spec.ratio, c0::spec.ratio] = blurred[..., r0::spec.ratio, c0::spec.ratio]
    return np.fft.irfft2(np.fft.rfft2(masked) * np.conj(otf), s=(H, W))
