"""Fusion quality metrics: ERGAS, SAM, UIQI and SNR."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .cube import Cube
from .errors import ValidationError

UIQI_WINDOW = 32


def _pair(x, truth):
    xd = x.data if isinstance(x, Cube) else np.asarray(x, dtype=np.float64)
    td = truth.data if isinstance(truth, Cube) else np.asarray(truth, dtype=np.float64)
    if xd.shape != td.shape:
        raise ValidationError(f"cube shapes differ: {xd.shape} vs {td.shape}")
    return xd, td


def ergas(x, truth, d) -> float:
    """100 d sqrt( sum_l ||X_l - T_l||^2 / mu_l^2 / (N1 N2 N3) ), mu_l the band mean of T."""
    xd, td = _pair(x, truth)
    mu = td.mean(axis=(1, 2))
    if np.any(mu == 0):
        raise ValidationError("ERGAS undefined: ground truth has a zero-mean band")
    err = np.sum((xd - td) ** 2, axis=(1, 2))
    return float(100.0 * d * math.sqrt(np.sum(err / mu ** 2) / xd.size))


def sam_map(x, truth):
    """Per-pixel spectral angle in degrees; NaN where either vector is zero.

    Uses the half-angle form 2 atan2(|u - v|, |u + v|) on unit vectors, which
    stays accurate near zero where arccos of the cosine does not.
    """
    xd, td = _pair(x, truth)
    nx = np.linalg.norm(xd, axis=0)
    nt = np.linalg.norm(td, axis=0)
    valid = (nx > 0) & (nt > 0)
    ang = np.full(nx.shape, np.nan)
    u = xd[:, valid] / nx[valid]
    v = td[:, valid] / nt[valid]
    ang[valid] = np.degrees(2.0 * np.arctan2(np.linalg.norm(u - v, axis=0),
                                             np.linalg.norm(u + v, axis=0)))
    return ang


def sam(x, truth) -> float:
    """Mean spectral angle (degrees) over pixels with nonzero vectors in both cubes."""
    ang = sam_map(x, truth)
    valid = ~np.isnan(ang)
    if not valid.any():
        return float("nan")
    return float(ang[valid].mean())


def sam_skipped(x, truth) -> int:
    return int(np.isnan(sam_map(x, truth)).sum())


def _uiqi_windows(a, b, win):
    """UIQI of every fully interior ``win x win`` window of two images."""
    A = sliding_window_view(a, (win, win))
    B = sliding_window_view(b, (win, win))
    n = win * win
    ma = A.mean(axis=(-2, -1))
    mb = B.mean(axis=(-2, -1))
    da = A - ma[..., None, None]
    db = B - mb[..., None, None]
    # unbiased (n - 1) estimators, as in the original index definition
    va = np.sum(da * da, axis=(-2, -1)) / (n - 1)
    vb = np.sum(db * db, axis=(-2, -1)) / (n - 1)
    cab = np.sum(da * db, axis=(-2, -1)) / (n - 1)
    return _uiqi_formula(ma, mb, va, vb, cab)


def _uiqi_formula(ma, mb, va, vb, cab):
    vsum = va + vb
    msum = ma * ma + mb * mb
    q = np.ones_like(ma)
    full = (vsum > 0) & (msum > 0)
    q[full] = 4 * cab[full] * ma[full] * mb[full] / (vsum[full] * msum[full])
    only_mean = (vsum == 0) & (msum > 0)
    q[only_mean] = 2 * ma[only_mean] * mb[only_mean] / msum[only_mean]
    only_var = (vsum > 0) & (msum == 0)
    q[only_var] = 2 * cab[only_var] / vsum[only_var]
    return q


def uiqi_bands(x, truth, window=UIQI_WINDOW):
    """Per-band mean UIQI over ``window``-sized sliding windows (stride 1).

    Images smaller than the window use one whole-image window. Degenerate
    windows follow the usual convention: zero variance in both falls back to
    the luminance term, zero means to the correlation term, and all-zero
    content scores 1.
    """
    xd, td = _pair(x, truth)
    H, W = xd.shape[1:]
    if window < 2:
        raise ValidationError("UIQI window must be at least 2")
    out = []
    for l in range(xd.shape[0]):
        if H < window or W < window:
            if xd[l].size < 2:
                raise ValidationError("UIQI needs at least two pixels")
            out.append(float(_uiqi_whole(xd[l], td[l])))
        else:
            out.append(float(_uiqi_windows(xd[l], td[l], window).mean()))
    return np.array(out)


def _uiqi_whole(a, b):
    n = a.size
    ma, mb = a.mean(), b.mean()
    va = np.sum((a - ma) ** 2) / (n - 1)
    vb = np.sum((b - mb) ** 2) / (n - 1)
    cab = np.sum((a - ma) * (b - mb)) / (n - 1)
    return _uiqi_formula(*(np.array([v]) for v in (ma, mb, va, vb, cab)))[0]


def uiqi(x, truth, window=UIQI_WINDOW) -> float:
    return float(uiqi_bands(x, truth, window).mean())


def snr_db(x, truth) -> float:
    """10 log10(||T||^2 / ||X - T||^2); +inf for identical cubes."""
    xd, td = _pair(x, truth)
    err = float(np.sum((xd - td) ** 2))
    if err == 0.0:
        return float("inf")
    return float(10.0 * math.log10(float(np.sum(td * td)) / err))


@dataclass
class MetricReport:
    ergas: float
    uiqi: float
    sam_degrees: float
    snr_db: float
    sam_skipped_pixels: int = 0
    ergas_bands: list = field(default_factory=list)
    uiqi_bands: list = field(default_factory=list)
    snr_bands: list = field(default_factory=list)

    def as_dict(self):
        """JSON-safe dict; infinite SNR is written as the string ``"inf"``."""
        def clean(v):
            if isinstance(v, float) and math.isinf(v):
                return "inf" if v > 0 else "-inf"
            return v
        return {
            "ergas": self.ergas,
            "uiqi": self.uiqi,
            "sam_degrees": self.sam_degrees,
            "snr_db": clean(self.snr_db),
            "sam_skipped_pixels": self.sam_skipped_pixels,
            "per_band": {
                "ergas": self.ergas_bands,
                "uiqi": self.uiqi_bands,
                "snr_db": [clean(v) for v in self.snr_bands],
            },
        }

    def csv_line(self, header=True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(["ergas", "uiqi", "sam_degrees", "snr_db"])
        w.writerow([repr(self.ergas), repr(self.uiqi), repr(self.sam_degrees), repr(self.snr_db)])
        return buf.getvalue()


def evaluate(x, truth, d, window=UIQI_WINDOW) -> MetricReport:
    xd, td = _pair(x, truth)
    bands_q = uiqi_bands(xd, td, window)
    per_ergas = [ergas(xd[l:l + 1], td[l:l + 1], d) for l in range(xd.shape[0])]
    per_snr = [snr_db(xd[l], td[l]) for l in range(xd.shape[0])]
    return MetricReport(
        ergas=ergas(xd, td, d),
        uiqi=float(bands_q.mean()),
        sam_degrees=sam(xd, td),
        snr_db=snr_db(xd, td),
        sam_skipped_pixels=sam_skipped(xd, td),
        ergas_bands=per_ergas,
        uiqi_bands=[float(v) for v in bands_q],
        snr_bands=per_snr,
    )
