import dataclasses

import numpy as np
import pytest

from bglrf import simulate, spatial
from bglrf.cg import CgConfig
from bglrf.cube import Cube
from bglrf.driver import (
    FusionConfig,
    bglrf,
    bicubic_upsample,
    fuse_nonblind,
    objective_value,
    run_report,
)
from bglrf.errors import ValidationError
from bglrf.laplacian import build_matting_laplacian, quadratic_form
from bglrf.metrics import sam
from oracles import conv_direct, matting_laplacian_dense


def test_bicubic_d1_identity(rng):
    y = Cube(rng.random((2, 5, 6)))
    assert bicubic_upsample(y, 1) == y


def test_bicubic_constant(rng):
    out = bicubic_upsample(np.full((2, 4, 5), 0.7), 4)
    assert out.data.shape == (2, 16, 20)
    np.testing.assert_allclose(out.data, 0.7, rtol=1e-14)


@pytest.mark.parametrize("phase", [(0, 0), (1, 2)])
def test_bicubic_ramp(phase):
    d, h, w = 4, 8, 9
    i, j = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    y = (0.3 * i - 0.2 * j + 1.0)[None]
    out = bicubic_upsample(y, d, phase).data[0]
    u, v = np.meshgrid(np.arange(h * d), np.arange(w * d), indexing="ij")
    expect = 0.3 * (u - phase[0]) / d - 0.2 * (v - phase[1]) / d + 1.0
    inner = (slice(2 * d, (h - 2) * d), slice(2 * d, (w - 2) * d))
    np.testing.assert_allclose(out[inner], expect[inner], atol=1e-10)


def test_bicubic_hits_samples(rng):
    y = rng.random((1, 6, 6))
    out = bicubic_upsample(y, 3, (2, 1)).data
    np.testing.assert_allclose(out[:, 2::3, 1::3], y, atol=1e-14)


def test_nonblind_identity_system(rng):
    y = Cube(rng.random((3, 6, 6)))
    cfg = FusionConfig(alpha=0.0, ratio=1, mode="nonblind")
    x, rep = fuse_nonblind(y, None, spatial.delta_kernel(1), cfg)
    assert np.array_equal(x.data, y.data)


def _phantom_pair(seed=0, H=32, B=8, m=4, d=4, shift=(0, 0), snr=(None, None), msi=4):
    X = simulate.make_phantom(H, H, B, m, seed)
    K = simulate.gaussian_kernel(d, shift)
    R = simulate.synthetic_srf(msi, B)
    Y, Z = simulate.degrade(X, R, simulate.DegradeSpec(d, K, snr[0], snr[1], seed))
    return X, Y, Z, K


def test_nonblind_exact_kernel_beats_bicubic():
    X, Y, Z, K = _phantom_pair(snr=(30.0, 40.0))
    L = build_matting_laplacian(Z)
    cfg = FusionConfig(alpha=10.0, mode="nonblind")
    x, rep = fuse_nonblind(Y, L, K, cfg)
    assert sam(x, X) < sam(bicubic_upsample(Y, 4), X)


def test_nonblind_normal_equation_residual():
    X, Y, Z, K = _phantom_pair(H=24, B=4)
    L = build_matting_laplacian(Z)
    cfg = FusionConfig(alpha=10.0, mode="nonblind", cg_x=CgConfig(1e-8, 5000))
    x, rep = fuse_nonblind(Y, L, K, cfg)
    assert rep.converged and rep.residual <= 1e-8


def test_larger_alpha_never_increases_glr_energy():
    X, Y, Z, K = _phantom_pair(H=24, B=4, snr=(30.0, 40.0))
    L = build_matting_laplacian(Z)
    energies = []
    for alpha in (0.1, 1.0, 10.0):
        cfg = FusionConfig(alpha=alpha, mode="nonblind", cg_x=CgConfig(1e-11, 20000))
        x, rep = fuse_nonblind(Y, L, K, cfg)
        assert rep.converged
        energies.append(quadratic_form(L, x.data.reshape(4, -1).T))
    assert energies[0] >= energies[1] >= energies[2]


def test_objective_zero_case():
    K = np.full((3, 3), 1 / 9)
    L = build_matting_laplacian(np.random.default_rng(0).random((2, 8, 8)))
    val = objective_value(K, np.zeros((2, 8, 8)), np.zeros((2, 4, 4)), L, 10.0, 10.0,
                          spatial.DownsampleSpec(2))
    assert val == 0.0


def test_objective_infeasible_kernel_is_inf():
    K = np.full((3, 3), 1 / 9)
    K[1, 1] -= 0.2
    K[0, 0] += 0.2 - 0.3
    assert objective_value(K, np.ones((1, 4, 4)), np.ones((1, 2, 2)), None, 0, 0,
                           spatial.DownsampleSpec(2)) == np.inf


def test_objective_matches_independent_evaluation(rng):
    B, H, d, p = 2, 6, 2, 3
    x = rng.random((B, H, H))
    y = rng.random((B, H // d, H // d))
    z = rng.random((3, H, H))
    K = rng.random((p, p))
    K /= K.sum()
    alpha, beta = 2.5, 0.7
    L = build_matting_laplacian(z)
    got = objective_value(K, x, y, L, alpha, beta, spatial.DownsampleSpec(d))

    data = sum(np.sum((conv_direct(x[l], K)[::d, ::d] - y[l]) ** 2) for l in range(B))
    Ld = matting_laplacian_dense(np.moveaxis(z, 0, -1), 1, 1e-7)
    Xm = x.reshape(B, -1).T
    glr = np.trace(Xm.T @ Ld @ Xm)
    tv = 0.0
    for a in range(p):
        for b in range(p):
            h = K[a, b + 1] - K[a, b] if b + 1 < p else 0.0
            v = K[a + 1, b] - K[a, b] if a + 1 < p else 0.0
            tv += np.hypot(h, v)
    expect = data + alpha * glr + beta * tv
    assert abs(got - expect) <= 1e-10 * abs(expect)


def test_degenerate_identity_problem(rng):
    y = Cube(rng.random((3, 8, 8)) + 0.1)
    cfg = FusionConfig(alpha=0.0, beta=0.0, ratio=1, kernel_size=1, outer_iters=3)
    res = bglrf(y, None, cfg)
    r = np.linalg.norm(res.x.data - y.data) / np.linalg.norm(y.data)
    assert r <= cfg.cg_x.tol
    assert np.array_equal(res.kernel, [[1.0]])


def test_small_blind_run_invariants():
    X, Y, Z, K = _phantom_pair(H=32, B=8, d=2, shift=(1, 0), snr=(30.0, 40.0))
    cfg = FusionConfig(ratio=2, kernel_size=7, outer_iters=6, outer_tol=0.0)
    res = bglrf(Y, Z, cfg)
    assert len(res.objective) == 6
    for k_rep in res.k_reports:
        assert k_rep["objective_after"] <= k_rep["objective_before"] + 1e-8 or \
            k_rep["objective_before"] != k_rep["objective_before"]
    assert spatial.is_feasible(res.kernel)
    assert np.all(np.isfinite(res.x.data))
    tr = np.array(res.objective)
    assert np.all(tr[1:] <= tr[:-1] * (1 + 1e-6))
    rep = run_report(res, cfg)
    assert rep["outer_iterations"] == 6 and len(rep["cg_x"]) == 6


def test_config_round_trip_and_validation():
    cfg = FusionConfig(alpha=3.0, phase=(1, 2), ratio=4)
    d = cfg.to_dict()
    assert FusionConfig.from_dict(d) == cfg
    assert FusionConfig.from_dict({"admm": {"mu": 2.0}}).admm.mu == 2.0
    assert FusionConfig.from_dict({"admm": {"mu": 2.0}}).admm.max_iters == 100
    defaults = FusionConfig()
    assert (defaults.alpha, defaults.beta, defaults.kernel_size) == (10.0, 10.0, 13)
    for bad in ({"nope": 1}, {"mode": "fast"}, {"kernel_size": 4}, {"alpha": -1.0},
                {"admm": {"x": 1}}, {"phase": [4, 0]}, {"tau_x": 0.0}):
        with pytest.raises(ValidationError):
            FusionConfig.from_dict(bad)


def test_driver_validation(rng):
    y = Cube(rng.random((2, 4, 4)))
    z = Cube(rng.random((3, 16, 16)))
    with pytest.raises(ValidationError):
        bglrf(y, z, FusionConfig(mode="nonblind"))
    with pytest.raises(ValidationError):
        bglrf(y, None, FusionConfig())
    with pytest.raises(ValidationError):
        bglrf(y, Cube(rng.random((3, 12, 16))), FusionConfig())
    with pytest.raises(ValidationError):
        bglrf(y, z, FusionConfig(kernel_size=17))
    with pytest.raises(ValidationError):
        fuse_nonblind(y, None, -np.ones((3, 3)), FusionConfig(mode="nonblind"))
    cfg = dataclasses.replace(FusionConfig(), mode="no-glr", kernel_size=5, outer_iters=1)
    assert bglrf(y, None, cfg).mode == "no-glr"
