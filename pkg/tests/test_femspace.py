import math

import numpy as np
import pytest

from conftest import PI, cos1, sin1
from nlac.femspace import (DiscreteFunction, build_space, embed_hat, hat_space, interpolate, lp_error,
                           lp_norm, mean_value, w1p_seminorm)
from nlac.geometry import Domain, build_inflated, build_mesh, interior_samples
from nlac.harness import observed_order


def test_zero_mean_counts(unit):
    sp = build_space(build_mesh(unit, 4), 1, "CG", "zero-mean")
    assert sp.n_dofs == 5 and sp.n_free == 5 and sp.constraint == "zero-mean"
    m = sp.mean_weights()
    assert m.sum() == pytest.approx(1.0, rel=1e-14)


def test_zero_trace_counts(unit):
    sp = build_space(build_mesh(unit, 4), 1, "CG", "zero-trace")
    assert sp.n_free == 3


def test_volume_layer_pinning(unit):
    sp = build_space(build_inflated(unit, 0.25, 4), 1, "CG", "zero-volume-layer")
    pinned = np.sort(sp.dof_coords[sp.pinned, 0])
    np.testing.assert_allclose(pinned, [-0.25, 0.0, 1.0, 1.25], atol=1e-15)


def test_p2_dof_count(square):
    sp = build_space(build_mesh(square, 3), 2, "CG", "none")
    assert sp.n_dofs == 7 * 7


def test_dg_rejects_trace(unit):
    with pytest.raises(ValueError):
        build_space(build_mesh(unit, 4), 1, "DG", "zero-trace")


def test_constant_into_zero_mean(unit):
    sp = build_space(build_mesh(unit, 8), 1, "CG", "zero-mean")
    u = interpolate(sp, lambda X: np.ones(len(X)))
    assert np.max(np.abs(u.coeffs)) <= 1e-15


def test_linear_interpolant(unit):
    sp = build_space(build_mesh(unit, 4), 1, "CG", "none")
    u = interpolate(sp, lambda X: X[:, 0])
    np.testing.assert_allclose(u.coeffs, [0, 0.25, 0.5, 0.75, 1], atol=1e-16)


def test_trace_pinning_exact(unit):
    sp = build_space(build_mesh(unit, 8), 1, "CG", "zero-trace")
    u = interpolate(sp, lambda X: np.sin(PI * X[:, 0]) + 1.0)
    assert np.all(u.coeffs[sp.pinned] == 0.0)


def test_mean_values(unit):
    sp = build_space(build_mesh(unit, 4), 1, "CG", "none")
    assert mean_value(sp.zeros()) == 0.0
    assert mean_value(interpolate(sp, lambda X: X[:, 0])) == pytest.approx(0.5, rel=1e-14)
    spm = build_space(build_mesh(unit, 16), 2, "CG", "zero-mean")
    assert abs(mean_value(interpolate(spm, lambda X: np.exp(X[:, 0])))) <= 1e-12


def test_norm_examples(unit):
    sp = build_space(build_mesh(unit, 4), 1, "CG", "none")
    assert lp_norm(interpolate(sp, lambda X: np.ones(len(X))), 2) == pytest.approx(1.0, rel=1e-14)
    assert w1p_seminorm(interpolate(sp, lambda X: X[:, 0]), 2) == pytest.approx(1.0, rel=1e-14)
    sp = build_space(build_mesh(unit, 64), 1, "CG", "none")
    assert w1p_seminorm(interpolate(sp, cos1), 2) == pytest.approx(PI / math.sqrt(2), abs=1e-2)


def test_non_even_p_norm(unit):
    # |x - 1/2|^3 integrates to 1/32 on (0, 1); the kink sits inside an element for n = 3
    sp = build_space(build_mesh(unit, 3), 1, "CG", "none")
    u = interpolate(sp, lambda X: X[:, 0] - 0.5)
    assert lp_norm(u, 3) ** 3 == pytest.approx(1 / 32, rel=1e-10)


def test_lp_error_exact_for_interpolated_linear(square):
    sp = build_space(build_mesh(square, 4), 1, "CG", "none")
    f = lambda X: 1 + X[:, 0] - 2 * X[:, 1]
    assert lp_error(interpolate(sp, f), f, 2) <= 1e-14


def test_point_evaluation(square):
    sp = build_space(build_mesh(square, 5), 2, "CG", "none")
    f = lambda X: X[:, 0] ** 2 - X[:, 0] * X[:, 1] + 3
    u = interpolate(sp, f)
    X = interior_samples(square, 256)
    np.testing.assert_allclose(u(X), f(X), rtol=1e-13)


def test_dg_projection_reproduces_quadratics(unit):
    sp = build_space(build_mesh(unit, 5), 2, "DG", "none")
    u = interpolate(sp, lambda X: 3 * X[:, 0] ** 2 - 1)
    np.testing.assert_allclose(u(np.linspace(0.01, 0.99, 17)[:, None]),
                               3 * np.linspace(0.01, 0.99, 17) ** 2 - 1, atol=1e-12)


def test_text_round_trip(unit):
    sp = build_space(build_mesh(unit, 6), 1, "CG", "none")
    u = interpolate(sp, sin1)
    v = DiscreteFunction.from_text(sp, u.to_text())
    np.testing.assert_array_equal(u.coeffs, v.coeffs)


def test_approximation_order(unit):
    errs, hs = [], []
    for n in (8, 16, 32, 64):
        sp = build_space(build_mesh(unit, n), 1, "CG", "none")
        u = interpolate(sp, cos1)
        elem, X, W = sp.quad_points(8)
        g = u.grads_on(elem, X)[:, 0] + PI * np.sin(PI * X[:, 0])
        errs.append(float(np.sum(W * g**2)) ** 0.5)
        hs.append(1 / n)
    assert min(observed_order(errs, hs)) >= 0.9


@pytest.mark.parametrize("deg,cont", [(1, "CG"), (2, "CG"), (1, "DG"), (2, "DG")])
@pytest.mark.parametrize("dom", [Domain.interval(), Domain.rectangle()])
def test_hat_containment(dom, deg, cont):
    sp = build_space(build_mesh(dom, 3), deg, cont, "none")
    hat = hat_space(sp)
    X = interior_samples(dom, 64)
    for i in range(hat.n_dofs):
        c = np.zeros(hat.n_dofs)
        c[i] = 1.0
        h = DiscreteFunction(hat, c)
        assert np.max(np.abs(embed_hat(h, sp)(X) - h(X))) <= 1e-12
