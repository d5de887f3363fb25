import numpy as np
import pytest

import oracles
from conftest import PI, cos1
from nlac.assembly.load import LoadFunctional, load_pairing
from nlac.convolution import SmoothedFunction, apply_Kdelta, convolution_error, smoothed_load_pairing
from nlac.femspace import DiscreteFunction, build_space, interpolate, w1p_seminorm, lp_norm
from nlac.geometry import build_mesh, interior_samples
from nlac.harness import observed_order
from nlac.kernels import make_kernel_config

F_COS = LoadFunctional(f0=lambda X: PI**2 * np.cos(PI * X[:, 0]))


@pytest.fixture
def setup(unit):
    cfg = make_kernel_config(unit, 2.0)
    sp = build_space(build_mesh(unit, 32), 1, "CG", "none")
    return cfg, sp


def test_constants_preserved(setup):
    cfg, sp = setup
    u = interpolate(sp, lambda X: np.full(len(X), -1.7))
    xs = np.linspace(0, 1, 33)[:, None]
    assert np.max(np.abs(apply_Kdelta(u, cfg, xs) + 1.7)) <= 1e-12


def test_constants_preserved_2d(square):
    cfg = make_kernel_config(square, 2.0)
    sp = build_space(build_mesh(square, 8), 1, "CG", "none")
    u = interpolate(sp, lambda X: np.full(len(X), 2.0))
    X = interior_samples(square, 64)
    assert np.max(np.abs(apply_Kdelta(u, cfg, X) - 2.0)) <= 1e-12


def test_linear_exact(setup):
    cfg, sp = setup
    u = interpolate(sp, lambda X: X[:, 0])
    xs = np.linspace(0, 1, 33)[:, None]
    assert np.max(np.abs(apply_Kdelta(u, cfg, xs) - xs[:, 0])) <= 1e-12


def test_trace_preserved(setup):
    cfg, sp = setup
    u = interpolate(sp, cos1)
    assert apply_Kdelta(u, cfg, 0.0) == u(np.array([[0.0]]))[0]
    assert apply_Kdelta(u, cfg, 1.0) == u(np.array([[1.0]]))[0]


def test_outside_rejected(setup):
    cfg, sp = setup
    with pytest.raises(ValueError):
        apply_Kdelta(interpolate(sp, cos1), cfg, 1.2)


def test_cos_oracle(unit):
    cfg = make_kernel_config(unit, 2.0)
    sp = build_space(build_mesh(unit, 16), 1, "CG", "none")
    u = interpolate(sp, cos1)
    nodes = sp.dof_coords[:, 0]
    for x in (0.02, 0.3, 0.5, 0.71, 0.97):
        ref = oracles.k_delta(nodes, u.coeffs, x, cfg.delta)
        assert apply_Kdelta(u, cfg, x) == pytest.approx(ref, rel=1e-6, abs=1e-13)


def test_gradient_fd(unit):
    cfg = make_kernel_config(unit, 2.0)
    sp = build_space(build_mesh(unit, 16), 1, "CG", "none")
    s = SmoothedFunction(interpolate(sp, lambda X: np.sin(2 * X[:, 0])), cfg)
    x = np.array([[0.013], [0.4], [0.66]])
    h = 1e-7
    fd = (s(x + h) - s(x - h)) / (2 * h)
    np.testing.assert_allclose(s.gradient(x)[:, 0], fd, rtol=1e-5)


def test_smoothed_pairing_compatible(setup):
    cfg, sp = setup
    one = interpolate(sp, lambda X: np.ones(len(X)))
    assert abs(smoothed_load_pairing(F_COS, one, cfg)) <= 1e-10


def test_smoothed_pairing_oracle(unit):
    cfg = make_kernel_config(unit, 2.0)
    sp = build_space(build_mesh(unit, 16), 1, "CG", "none")
    u = interpolate(sp, lambda X: np.cos(PI * X[:, 0]) + X[:, 0] ** 2)
    ref = oracles.pairing(lambda x: PI**2 * np.cos(PI * x), sp.dof_coords[:, 0], u.coeffs, cfg.delta)
    assert smoothed_load_pairing(F_COS, u, cfg) == pytest.approx(ref, rel=1e-6)


def test_smoothed_pairing_trend(unit):
    sp = build_space(build_mesh(unit, 64), 1, "CG", "none")
    u = interpolate(sp, cos1)
    plain = load_pairing(F_COS, u)
    d0 = make_kernel_config(unit, 2.0).delta0
    gaps = [abs(smoothed_load_pairing(F_COS, u, make_kernel_config(unit, 2.0, delta=d0 / 2**k)) - plain)
            for k in range(1, 5)]
    assert all(np.diff(gaps) < 0)


def test_error_constant(setup):
    cfg, sp = setup
    assert convolution_error(interpolate(sp, lambda X: np.full(len(X), 5.0)), cfg) <= 1e-10


def test_error_order(unit):
    fine = build_space(build_mesh(unit, 256), 1, "CG", "none")
    d0 = make_kernel_config(unit, 2.0).delta0
    deltas = [d0 / 2**k for k in range(1, 5)]
    errs = [convolution_error(cos1, make_kernel_config(unit, 2.0, delta=dl), 2.0, space=fine) for dl in deltas]
    assert all(np.diff(errs) < 0)
    assert min(observed_order(errs, deltas)) >= 0.8


def test_w1p_control(unit):
    sp = build_space(build_mesh(unit, 32), 1, "CG", "none")
    rng = np.random.default_rng(0)
    d0 = make_kernel_config(unit, 2.0).delta0
    ratios = []
    for k in range(1, 4):
        cfg = make_kernel_config(unit, 2.0, delta=d0 / 2**k)
        for _ in range(5):
            u = DiscreteFunction(sp, rng.standard_normal(sp.n_dofs))
            s = SmoothedFunction(u, cfg)
            elem, X, W = sp.quad_points(6)
            ks = (np.sum(W * s(X) ** 2) + np.sum(W * s.gradient(X)[:, 0] ** 2)) ** 0.5
            ratios.append(ks / (lp_norm(u, 2) + w1p_seminorm(u, 2)))
    assert np.all(np.isfinite(ratios)) and max(ratios) < 10
