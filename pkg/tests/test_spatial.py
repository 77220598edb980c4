import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bglrf import _pykernels, spatial
from bglrf.errors import ValidationError
from conftest import rel_err
from oracles import bccb_matrix, conv_direct, dense_operator


def _rand_kernel(rng, p, feasible=False):
    k = rng.random((p, p))
    return k / k.sum() if feasible else rng.normal(size=(p, p))


def test_delta_kernel_is_identity(rng):
    x = rng.normal(size=(6, 5))
    np.testing.assert_allclose(spatial.convolve_circular(x, spatial.delta_kernel(3)), x, atol=1e-14)


def test_delta_right_of_center_shifts_right(rng):
    x = rng.normal(size=(4, 4))
    out = spatial.convolve_circular(x, spatial.delta_kernel(3, (0, 1)))
    np.testing.assert_allclose(out, np.roll(x, 1, axis=1), atol=1e-14)


def test_fft_matches_direct_5x5_3x3(rng):
    x = rng.normal(size=(5, 5))
    k = rng.normal(size=(3, 3))
    assert rel_err(spatial.convolve_circular(x, k), conv_direct(x, k)) <= 1e-12


@given(st.integers(1, 8), st.integers(1, 8), st.sampled_from([1, 3, 5]), st.integers(0, 2**32 - 1))
def test_fft_matches_direct_all_small(h, w, p, seed):
    if p > min(h, w):
        return
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(h, w))
    k = rng.normal(size=(p, p))
    assert rel_err(spatial.convolve_circular(x, k), conv_direct(x, k)) <= 1e-12


def test_convolution_acts_on_every_band(rng):
    x = rng.normal(size=(3, 6, 6))
    k = _rand_kernel(rng, 3)
    out = spatial.convolve_circular(x, k)
    for l in range(3):
        assert rel_err(out[l], conv_direct(x[l], k)) <= 1e-12


def test_rfft_path_matches_complex_fft(rng):
    x = rng.normal(size=(7, 6))
    k = rng.normal(size=(5, 5))
    ref = np.real(np.fft.ifft2(np.fft.fft2(x) * np.fft.fft2(spatial.embed_kernel(k, x.shape))))
    assert rel_err(spatial.convolve_circular(x, k), ref) <= 1e-13


def test_embed_1x1():
    out = spatial.embed_kernel(np.array([[1.0]]), (4, 4))
    expect = np.zeros((4, 4))
    expect[0, 0] = 1.0
    np.testing.assert_array_equal(out, expect)


def test_embed_bottom_right_corner():
    k = np.zeros((3, 3))
    k[2, 2] = 1.0
    out = spatial.embed_kernel(k, (8, 8))
    assert out[1, 1] == 1.0 and out.sum() == 1.0


def test_embed_top_left_corner_wraps():
    k = np.zeros((3, 3))
    k[0, 0] = 1.0
    out = spatial.embed_kernel(k, (8, 8))
    assert out[7, 7] == 1.0


def test_embed_adjoint_window_of_ones():
    np.testing.assert_array_equal(spatial.embed_adjoint(np.ones((4, 4)), 3), np.ones((3, 3)))


@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 3, 5, 7]))
def test_embed_adjoint_inverts_embed(seed, p):
    rng = np.random.default_rng(seed)
    k = rng.normal(size=(p, p))
    np.testing.assert_array_equal(spatial.embed_adjoint(spatial.embed_kernel(k, (8, 9)), p), k)


def test_embed_rejects_oversize_and_even():
    with pytest.raises(ValidationError):
        spatial.embed_kernel(np.ones((5, 5)), (4, 4))
    with pytest.raises(ValidationError):
        spatial.embed_kernel(np.ones((2, 2)), (4, 4))


def test_downsample_identity_and_ramp():
    x = np.arange(16.0).reshape(4, 4)
    np.testing.assert_array_equal(spatial.downsample(x, spatial.DownsampleSpec(1)), x)
    out = spatial.downsample(x, spatial.DownsampleSpec(2, (0, 0)))
    np.testing.assert_array_equal(out, [[x[0, 0], x[0, 2]], [x[2, 0], x[2, 2]]])


def test_downsample_phase_and_validation():
    x = np.arange(16.0).reshape(4, 4)
    out = spatial.downsample(x, spatial.DownsampleSpec(2, (1, 0)))
    np.testing.assert_array_equal(out, [[4, 6], [12, 14]])
    with pytest.raises(ValidationError):
        spatial.downsample(np.zeros((5, 4)), spatial.DownsampleSpec(2))
    with pytest.raises(ValidationError):
        spatial.DownsampleSpec(2, (2, 0))
    with pytest.raises(ValidationError):
        spatial.DownsampleSpec(0)


def _dot_ok(Ax, y, x, Aty):
    return abs(np.vdot(Ax, y) - np.vdot(x, Aty)) <= 1e-10 * np.linalg.norm(x) * np.linalg.norm(y)


def test_adjoint_convolution_100_trials():
    rng = np.random.default_rng(1)
    for _ in range(100):
        h, w = rng.integers(3, 12, size=2)
        p = int(rng.choice([1, 3]))
        k = rng.normal(size=(p, p))
        x, y = rng.normal(size=(h, w)), rng.normal(size=(h, w))
        assert _dot_ok(spatial.convolve_circular(x, k), y, x, spatial.correlate_circular(y, k))


def test_adjoint_embedding_100_trials():
    rng = np.random.default_rng(2)
    for _ in range(100):
        p = int(rng.choice([1, 3, 5]))
        h, w = rng.integers(p, 12, size=2)
        k, m = rng.normal(size=(p, p)), rng.normal(size=(h, w))
        assert _dot_ok(spatial.embed_kernel(k, (h, w)), m, k, spatial.embed_adjoint(m, p))


def test_adjoint_decimation_100_trials():
    rng = np.random.default_rng(3)
    for _ in range(100):
        d = int(rng.integers(1, 4))
        spec = spatial.DownsampleSpec(d, tuple(int(v) for v in rng.integers(0, d, size=2)))
        h, w = d * rng.integers(1, 5, size=2)
        x, y = rng.normal(size=(h, w)), rng.normal(size=(h // d, w // d))
        assert _dot_ok(spatial.downsample(x, spec), y, x, spatial.upsample_zero(y, spec))


def test_adjoint_composite_100_trials():
    rng = np.random.default_rng(4)
    for _ in range(100):
        d = int(rng.integers(1, 4))
        spec = spatial.DownsampleSpec(d)
        h, w = d * rng.integers(max(2, 4 - d), 5, size=2)
        k = _rand_kernel(rng, 3)
        x, y = rng.normal(size=(h, w)), rng.normal(size=(h // d, w // d))
        assert _dot_ok(spatial.apply_degradation(x, k, spec), y, x,
                       spatial.degradation_adjoint(y, k, spec))


def test_dense_adjoint_is_transpose(rng):
    k = rng.normal(size=(3, 3))
    spec = spatial.DownsampleSpec(2)
    fwd = dense_operator(lambda v: spatial.apply_degradation(v.reshape(6, 4), k, spec), 24, 6)
    adj = dense_operator(lambda v: spatial.degradation_adjoint(v.reshape(3, 2), k, spec), 6, 24)
    np.testing.assert_allclose(adj, fwd.T, atol=1e-13)


def test_linearity(rng):
    k = rng.normal(size=(3, 3))
    spec = spatial.DownsampleSpec(2)
    x1, x2 = rng.normal(size=(2, 6, 6))
    a, b = 1.7, -0.3
    lhs = spatial.apply_degradation(a * x1 + b * x2, k, spec)
    rhs = a * spatial.apply_degradation(x1, k, spec) + b * spatial.apply_degradation(x2, k, spec)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 3, 5]))
def test_mean_preservation(seed, p):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(8, 7))
    k = _rand_kernel(rng, p, feasible=True)
    assert abs(spatial.convolve_circular(x, k).mean() - x.mean()) <= 1e-12 * max(1.0, np.abs(x).max())


def test_feasible_kernel_keeps_constant_cube(rng):
    k = _rand_kernel(rng, 5, feasible=True)
    out = spatial.convolve_circular(np.full((2, 8, 8), 3.5), k)
    np.testing.assert_allclose(out, 3.5, rtol=1e-14)


def test_delta_d1_degradation_is_identity(rng):
    x = rng.normal(size=(2, 5, 5))
    out = spatial.apply_degradation(x, spatial.delta_kernel(3), spatial.DownsampleSpec(1))
    np.testing.assert_allclose(out, x, atol=1e-14)


def test_commutation_identity_against_bccb(rng):
    for _ in range(5):
        h, w = rng.integers(3, 7, size=2)
        p = int(rng.choice([1, 3]))
        x = rng.normal(size=(h, w))
        k = rng.normal(size=(p, p))
        lhs = spatial.convolve_circular(x, k)
        rhs = (bccb_matrix(x) @ spatial.embed_kernel(k, (h, w)).ravel()).reshape(h, w)
        assert rel_err(lhs, rhs) <= 1e-12
        assert rel_err(spatial.convolve_image(x, spatial.embed_kernel(k, (h, w))), lhs) <= 1e-12


def test_correlate_image_is_adjoint_of_convolve_image(rng):
    x, v, u = rng.normal(size=(3, 6, 5))
    assert _dot_ok(spatial.convolve_image(x, v), u, v, spatial.correlate_image(x, u))


def test_kernel_centroid_and_feasibility():
    k = spatial.delta_kernel(5, (-2, 1))
    assert spatial.kernel_centroid(k) == (-2.0, 1.0)
    assert spatial.is_feasible(k)
    assert not spatial.is_feasible(-k)


def test_normal_operator_matches_composition(rng):
    x = rng.normal(size=(3, 12, 8))
    k = _rand_kernel(rng, 5, feasible=True)
    spec = spatial.DownsampleSpec(4, (1, 2))
    ref = spatial.degradation_adjoint(spatial.apply_degradation(x, k, spec), k, spec)
    assert rel_err(spatial.degradation_normal(x, k, spec), ref) <= 1e-13
    assert rel_err(_pykernels.normal_apply(x, k, 4, 1, 2), ref) <= 1e-13


def test_compiled_normal_operator_matches_fallback(rng):
    ck = pytest.importorskip("bglrf._ckernels")
    x = rng.normal(size=(3, 12, 16))
    k = _rand_kernel(rng, 7, feasible=True)
    for r0, c0 in [(0, 0), (1, 3)]:
        assert rel_err(ck.normal_apply(x, k, 4, r0, c0), _pykernels.normal_apply(x, k, 4, r0, c0)) <= 1e-12
