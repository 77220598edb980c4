"""Image cubes, matricization and the HXC1 on-disk format.

A cube is stored band-major: ``data[band, row, col]``. Each band is a
contiguous image plane so per-band FFTs need no copies.

HXC1 layout (all little-endian)::

    offset  size  field
    0       4     magic b"HXC1"
    4       4     height   (uint32)
    8       4     width    (uint32)
    12      4     bands    (uint32)
    16      1     dtype code (0 = float32, 1 = float64)
    17      ...   payload, band-major samples
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    CubeFormatError,
    TruncatedPayloadError,
    UnknownDtypeError,
    ValidationError,
)

MAGIC = b"HXC1"
_HEADER = struct.Struct("<4sIIIB")
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {"float32": 0, "float64": 1}


@dataclass(frozen=True, eq=False)
class Cube:
    """Immutable H x W x B cube held as a read-only float64 (B, H, W) array."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, order="C", copy=True)
        if arr.ndim != 3:
            raise ValidationError(f"cube data must be 3-D (bands, H, W), got shape {arr.shape}")
        if 0 in arr.shape:
            raise ValidationError(f"cube dimensions must be nonzero, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("cube contains non-finite samples")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_hwb(cls, arr) -> "Cube":
        """Build from an (H, W, B) array, the usual layout of image libraries."""
        arr = np.asarray(arr)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        return cls(np.moveaxis(arr, -1, 0))

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self):
        """(height, width, bands)."""
        return (self.height, self.width, self.bands)

    def to_hwb(self) -> np.ndarray:
        return np.moveaxis(self.data, 0, -1).copy()

    def band(self, l: int) -> np.ndarray:
        return self.data[l]

    def __eq__(self, other):
        if not isinstance(other, Cube):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"Cube(height={self.height}, width={self.width}, bands={self.bands})"


def matricize(cube: Cube) -> np.ndarray:
    """Unfold to an (H*W, B) matrix; row n is pixel (n // W, n % W)."""
    return cube.data.reshape(cube.bands, -1).T.copy()


def dematricize(mat, height: int, width: int) -> Cube:
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != height * width:
        raise ValidationError(
            f"matrix of shape {mat.shape} does not unfold to {height}x{width} pixels"
        )
    return Cube(mat.T.reshape(mat.shape[1], height, width))


def write_cube(cube: Cube, path, dtype: str = "float64") -> None:
    if dtype not in _CODES:
        raise ValidationError(f"dtype must be one of {sorted(_CODES)}, got {dtype!r}")
    code = _CODES[dtype]
    header = _HEADER.pack(MAGIC, cube.height, cube.width, cube.bands, code)
    payload = cube.data.astype(_DTYPES[code], copy=False).tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_cube(path) -> Cube:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        if raw[:4] != MAGIC[: len(raw[:4])]:
            raise BadMagicError(f"{path}: bad magic {raw[:4]!r}")
        raise TruncatedPayloadError(f"{path}: file shorter than the {_HEADER.size}-byte header")
    magic, h, w, b, code = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if code not in _DTYPES:
        raise UnknownDtypeError(f"{path}: unknown dtype code {code}")
    if h == 0 or w == 0 or b == 0:
        raise CubeFormatError(f"{path}: zero dimension in header ({h}, {w}, {b})")
    dt = _DTYPES[code]
    expected = h * w * b * dt.itemsize
    payload = raw[_HEADER.size:]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(payload)} bytes, header requires {expected}"
        )
    if len(payload) > expected:
        raise CubeFormatError(f"{path}: {len(payload) - expected} trailing bytes after payload")
    data = np.frombuffer(payload, dtype=dt).reshape(b, h, w)
    try:
        return Cube(data)
    except ValidationError as exc:
        raise CubeFormatError(f"{path}: {exc}") from exc


def write_grid_csv(grid, path) -> None:
    """Write a 2-D array as CSV, one row per array row, full float precision."""
    grid = np.asarray(grid, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in grid:
            writer.writerow([repr(float(v)) for v in row])


def read_grid_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        try:
            rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
        except ValueError as exc:
            raise ValidationError(f"{path}: non-numeric CSV entry ({exc})") from exc
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValidationError(f"{path}: ragged or empty CSV grid")
    return np.array(rows, dtype=np.float64)


def write_band_csv(cube: Cube, band: int, path) -> None:
    """Debug export of a single band."""
    write_grid_csv(cube.band(band), path)
