"""Synthetic ground truth and HSI/MSI degradation.

Noise and phantom draws come from numpy's PCG64 bit generator seeded through
``SeedSequence(seed, spawn_key=(label,))``; each consumer uses its own label
so the streams are independent and reproducible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import spatial
from .cube import Cube
from .errors import ValidationError

RNG_ALGORITHM = f"numpy.random.PCG64 via SeedSequence(seed, spawn_key=(label,)); numpy {np.__version__}"

STREAM_PHANTOM = 0
STREAM_HSI_NOISE = 1
STREAM_MSI_NOISE = 2

FWHM_TO_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


def rng_for(seed: int, label: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(label),))
    return np.random.Generator(np.random.PCG64(ss))


def gaussian_kernel(d: int, shift=(0, 0)) -> np.ndarray:
    """(2d+1)-tap isotropic Gaussian with FWHM = d, displaced by ``shift``.

    A displaced kernel keeps its full (2d+1)^2 footprint: the support grows to
    ``2d + 1 + 2 * max(|shift|)`` so that the centroid sits exactly at
    ``center + shift``. Samples are taken at pixel centers and normalized.
    """
    if int(d) != d or d < 1:
        raise ValidationError(f"d must be a positive integer, got {d}")
    dr, dc = (int(s) for s in shift)
    if abs(dr) > d or abs(dc) > d:
        raise ValidationError(f"shift {shift} exceeds the kernel half-width {d}")
    s = max(abs(dr), abs(dc))
    size = 2 * d + 1 + 2 * s
    c = size // 2
    sigma = d / FWHM_TO_SIGMA
    t = np.arange(-d, d + 1)
    g = np.exp(-(t[:, None] ** 2 + t[None, :] ** 2) / (2.0 * sigma ** 2))
    k = np.zeros((size, size))
    k[c + dr - d:c + dr + d + 1, c + dc - d:c + dc + d + 1] = g
    return k / k.sum()


def smooth_signatures(m: int, B: int, rng) -> np.ndarray:
    """m positive, smooth spectra of length B (rows), peak value <= 1."""
    grid = np.arange(B, dtype=np.float64)
    sig = np.empty((m, B))
    for i in range(m):
        s = np.full(B, rng.uniform(0.05, 0.3))
        for _ in range(3):
            centre = rng.uniform(0, B)
            width = rng.uniform(max(B / 8.0, 1.0), max(B / 3.0, 1.5))
            s += rng.uniform(0.1, 0.6) * np.exp(-0.5 * ((grid - centre) / width) ** 2)
        sig[i] = s / max(1.0, s.max())
    return sig


def make_phantom(H: int, W: int, B: int, materials: int, seed: int, mix: float = 0.2) -> Cube:
    """Piecewise-material scene following the linear mixture model.

    The image is split into periodic Voronoi cells, each owned by one
    material. Every pixel is a convex combination ``(1 - e) * dominant +
    e * Dirichlet`` with ``e`` drawn uniformly in ``[0, mix]``.
    """
    if materials < 1:
        raise ValidationError("need at least one material")
    rng = rng_for(seed, STREAM_PHANTOM)
    sig = smooth_signatures(materials, B, rng)

    ncell = 3 * materials
    centres = rng.uniform(0, 1, size=(ncell, 2)) * (H, W)
    owner = rng.permutation(np.arange(ncell) % materials)
    rr, cc = np.mgrid[0:H, 0:W]
    dist = np.empty((ncell, H, W))
    for k, (cr, ccol) in enumerate(centres):
        dy = np.abs(rr - cr)
        dx = np.abs(cc - ccol)
        dy = np.minimum(dy, H - dy)
        dx = np.minimum(dx, W - dx)
        dist[k] = dy * dy + dx * dx
    label = owner[np.argmin(dist, axis=0)].ravel()

    abund = np.zeros((H * W, materials))
    abund[np.arange(H * W), label] = 1.0
    if materials > 1 and mix > 0:
        e = rng.uniform(0, mix, size=(H * W, 1))
        abund = (1 - e) * abund + e * rng.dirichlet(np.ones(materials), size=H * W)
    X = abund @ sig
    return Cube(X.T.reshape(B, H, W))


def synthetic_srf(msi_bands: int, sri_bands: int) -> np.ndarray:
    """Gaussian bumps evenly spaced over the SRI bands, rows summing to one."""
    if msi_bands < 1 or sri_bands < 1:
        raise ValidationError("band counts must be positive")
    spacing = sri_bands / msi_bands
    centres = (np.arange(msi_bands) + 0.5) * spacing
    grid = np.arange(sri_bands)
    R = np.exp(-0.5 * ((grid[None, :] - centres[:, None]) / (0.5 * spacing)) ** 2)
    return check_srf(R / R.sum(axis=1, keepdims=True))


def check_srf(R) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    if R.ndim != 2:
        raise ValidationError("spectral response must be a 2-D matrix")
    if np.any(R < 0) or not np.all(np.isfinite(R)):
        raise ValidationError("spectral response has negative or non-finite entries")
    if not np.allclose(R.sum(axis=1), 1.0, atol=1e-12, rtol=0):
        raise ValidationError("spectral response rows must sum to one")
    return R


def load_srf_csv(path) -> np.ndarray:
    """Read an (MSI bands x SRI bands) CSV and row-normalize it."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(v.strip() for v in r)]
    if not rows:
        raise ValidationError(f"{path}: empty spectral response")
    if len({len(r) for r in rows}) != 1:
        raise ValidationError(f"{path}: ragged rows in spectral response")
    try:
        R = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric entry ({exc})") from exc
    if np.any(R < 0):
        raise ValidationError(f"{path}: negative spectral response entries")
    sums = R.sum(axis=1)
    if np.any(sums == 0):
        raise ValidationError(f"{path}: all-zero row in spectral response")
    return check_srf(R / sums[:, None])


def apply_srf(x: Cube, R) -> Cube:
    """Spectral synthesis: every pixel vector is mapped through R."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape[1] != x.bands:
        raise ValidationError(f"response has {R.shape[1]} columns, cube has {x.bands} bands")
    return Cube(np.tensordot(R, x.data, axes=(1, 0)))


def add_noise(signal, snr_db, rng) -> np.ndarray:
    """White Gaussian noise at a global SNR; ``None`` or inf leaves ``signal`` untouched."""
    signal = np.asarray(signal, dtype=np.float64)
    if snr_db is None or math.isinf(snr_db):
        return signal.copy()
    if not math.isfinite(snr_db):
        raise ValidationError(f"SNR must be finite or inf, got {snr_db}")
    var = float(np.sum(signal * signal)) / (signal.size * 10.0 ** (snr_db / 10.0))
    return signal + rng.normal(0.0, math.sqrt(var), size=signal.shape)


@dataclass(frozen=True)
class DegradeSpec:
    ratio: int = 4
    kernel: np.ndarray = None
    hsi_snr_db: float = 30.0
    msi_snr_db: float = 40.0
    seed: int = 0
    phase: tuple = (0, 0)

    def __post_init__(self):
        k = gaussian_kernel(self.ratio) if self.kernel is None else spatial.as_kernel(self.kernel)
        if not spatial.is_feasible(k):
            raise ValidationError("degradation kernel must lie on the simplex")
        object.__setattr__(self, "kernel", k)
        for v in (self.hsi_snr_db, self.msi_snr_db):
            if v is not None and math.isnan(v):
                raise ValidationError("SNR must not be NaN")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")

    @property
    def downsample(self) -> spatial.DownsampleSpec:
        return spatial.DownsampleSpec(self.ratio, self.phase)


def degrade(x: Cube, R, spec: DegradeSpec):
    """Return ``(Y, Z)``: the blurred, decimated, noisy HSI and the noisy MSI."""
    ds = spec.downsample
    ds.check(x.height, x.width)
    if spec.kernel.shape[0] > min(x.height, x.width):
        raise ValidationError("kernel larger than the image")
    clean_y = spatial.apply_degradation(x.data, spec.kernel, ds)
    clean_z = apply_srf(x, R).data
    y = add_noise(clean_y, spec.hsi_snr_db, rng_for(spec.seed, STREAM_HSI_NOISE))
    z = add_noise(clean_z, spec.msi_snr_db, rng_for(spec.seed, STREAM_MSI_NOISE))
    return Cube(y), Cube(z)
