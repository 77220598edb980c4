import itertools
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bglrf.cube import (
    Cube,
    dematricize,
    matricize,
    read_cube,
    read_grid_csv,
    write_band_csv,
    write_cube,
    write_grid_csv,
)
from bglrf.errors import (
    BadMagicError,
    CubeFormatError,
    TruncatedPayloadError,
    UnknownDtypeError,
    ValidationError,
)


def test_matricize_single_sample():
    c = Cube(np.array([[[5.0]]]))
    np.testing.assert_array_equal(matricize(c), [[5.0]])


def test_matricize_is_row_major():
    c = Cube(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
    np.testing.assert_array_equal(matricize(c), [[1.0], [2.0], [3.0], [4.0]])


def test_matricize_pixel_rows_hold_spectra(rng):
    hwb = rng.normal(size=(3, 4, 2))
    c = Cube.from_hwb(hwb)
    M = matricize(c)
    assert M.shape == (12, 2)
    np.testing.assert_array_equal(M[1 * 4 + 2], hwb[1, 2])
    np.testing.assert_array_equal(c.to_hwb(), hwb)


def test_round_trip_random_3x4x2(rng):
    c = Cube.from_hwb(rng.normal(size=(3, 4, 2)))
    back = dematricize(matricize(c), 3, 4)
    assert back == c


def test_round_trip_exhaustive_small_dims():
    rng = np.random.default_rng(0)
    for h, w, b in itertools.product(range(1, 9), repeat=3):
        c = Cube(rng.normal(size=(b, h, w)))
        assert np.array_equal(dematricize(matricize(c), h, w).data, c.data)


def test_dematricize_rejects_wrong_pixel_count():
    with pytest.raises(ValidationError):
        dematricize(np.zeros((5, 2)), 2, 3)


@pytest.mark.parametrize("bad", [np.zeros((2, 2)), np.zeros((0, 2, 2)), np.array([[[np.nan]]])])
def test_cube_validation(bad):
    with pytest.raises(ValidationError):
        Cube(bad)


def test_cube_is_read_only(rng):
    c = Cube(rng.normal(size=(2, 3, 3)))
    with pytest.raises(ValueError):
        c.data[0, 0, 0] = 1.0


def test_file_round_trip_2x2x2(tmp_path):
    c = Cube(np.arange(8, dtype=np.float64).reshape(2, 2, 2) / 3.0)
    write_cube(c, tmp_path / "c.hxc")
    assert np.array_equal(read_cube(tmp_path / "c.hxc").data, c.data)


@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 5), st.integers(1, 5)),
              elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_file_round_trip_float64_bit_exact(tmp_path_factory, data):
    path = tmp_path_factory.mktemp("rt") / "c.hxc"
    c = Cube(data)
    write_cube(c, path)
    assert read_cube(path).data.tobytes() == c.data.tobytes()


def test_file_round_trip_float32(tmp_path, rng):
    c = Cube(rng.normal(size=(3, 4, 5)))
    write_cube(c, tmp_path / "c.hxc", dtype="float32")
    back = read_cube(tmp_path / "c.hxc")
    np.testing.assert_array_equal(back.data, c.data.astype(np.float32).astype(np.float64))


def test_header_layout_little_endian(tmp_path):
    c = Cube(np.ones((3, 2, 5)))
    write_cube(c, tmp_path / "c.hxc")
    raw = (tmp_path / "c.hxc").read_bytes()
    assert raw[:4] == b"HXC1"
    assert struct.unpack("<III", raw[4:16]) == (2, 5, 3)
    assert raw[16] == 1
    assert len(raw) == 17 + 30 * 8
    assert raw[17:25] == struct.pack("<d", 1.0)


def _good_file(tmp_path):
    write_cube(Cube(np.ones((2, 2, 2))), tmp_path / "c.hxc")
    return (tmp_path / "c.hxc").read_bytes()


def test_bad_magic(tmp_path):
    raw = _good_file(tmp_path)
    (tmp_path / "b.hxc").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(BadMagicError):
        read_cube(tmp_path / "b.hxc")


def test_truncated_payload(tmp_path):
    raw = _good_file(tmp_path)
    (tmp_path / "b.hxc").write_bytes(raw[:-1])
    with pytest.raises(TruncatedPayloadError):
        read_cube(tmp_path / "b.hxc")


def test_truncated_header(tmp_path):
    (tmp_path / "b.hxc").write_bytes(b"HXC1\x01")
    with pytest.raises(TruncatedPayloadError):
        read_cube(tmp_path / "b.hxc")


def test_unknown_dtype(tmp_path):
    raw = bytearray(_good_file(tmp_path))
    raw[16] = 7
    (tmp_path / "b.hxc").write_bytes(bytes(raw))
    with pytest.raises(UnknownDtypeError):
        read_cube(tmp_path / "b.hxc")


def test_trailing_bytes_and_zero_dims(tmp_path):
    raw = _good_file(tmp_path)
    (tmp_path / "t.hxc").write_bytes(raw + b"\0")
    with pytest.raises(CubeFormatError):
        read_cube(tmp_path / "t.hxc")
    (tmp_path / "z.hxc").write_bytes(struct.pack("<4sIIIB", b"HXC1", 0, 2, 2, 1))
    with pytest.raises(CubeFormatError):
        read_cube(tmp_path / "z.hxc")


def test_non_finite_payload(tmp_path):
    raw = bytearray(_good_file(tmp_path))
    raw[17:25] = struct.pack("<d", float("inf"))
    (tmp_path / "n.hxc").write_bytes(bytes(raw))
    with pytest.raises(CubeFormatError):
        read_cube(tmp_path / "n.hxc")


def test_grid_csv_round_trip(tmp_path, rng):
    g = rng.normal(size=(4, 3))
    write_grid_csv(g, tmp_path / "g.csv")
    assert np.array_equal(read_grid_csv(tmp_path / "g.csv"), g)


@pytest.mark.parametrize("text", ["", "1,2\n3\n", "1,a\n"])
def test_grid_csv_rejects_bad_input(tmp_path, text):
    (tmp_path / "g.csv").write_text(text)
    with pytest.raises(ValidationError):
        read_grid_csv(tmp_path / "g.csv")


def test_band_csv(tmp_path, rng):
    c = Cube(rng.normal(size=(3, 2, 4)))
    write_band_csv(c, 1, tmp_path / "b.csv")
    assert np.array_equal(read_grid_csv(tmp_path / "b.csv"), c.band(1))
