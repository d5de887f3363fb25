import numpy as np
import pytest

from conftest import PI, cos1, sin1
from nlac.assembly.energies import EnergyModel
from nlac.assembly.load import LoadFunctional
from nlac.cases import get_case
from nlac.femspace import build_space, interpolate, lp_error, mean_value
from nlac.geometry import build_inflated, build_mesh
from nlac.kernels import make_kernel_config
from nlac.solver import (SolverConfig, iteration_log_text, minimize, residual_norm,
                         solve_linear_p2)


def _neumann(unit, p=2.0, n=32, case="neumann-cos", load=None):
    cfg = make_kernel_config(unit, p)
    sp = build_space(build_mesh(unit, n), 1, "CG", "zero-mean")
    f = get_case(case).load() if load is None else load
    return EnergyModel("het-neumann", sp, p, f, kernel=cfg)


def _const(unit, n=200, delta=0.05):
    inf = build_inflated(unit, delta, n)
    sp = build_space(inf, 1, "CG", "zero-volume-layer")
    return EnergyModel("const-dirichlet", sp, 2.0, get_case("dirichlet-sin").load(), delta=inf.delta)


def test_zero_load_linear(unit):
    m = _neumann(unit, load=LoadFunctional())
    r = solve_linear_p2(m)
    assert np.max(np.abs(r.u.coeffs)) == 0.0


def test_het_neumann_manufactured(unit):
    r = solve_linear_p2(_neumann(unit, n=128))
    assert lp_error(r.u, cos1, 2) <= 0.05
    assert abs(mean_value(r.u)) <= 1e-12


def test_const_dirichlet_manufactured(unit):
    m = _const(unit)
    r = solve_linear_p2(m)
    assert lp_error(r.u, sin1, 2) <= 0.05
    assert np.all(r.u.coeffs[m.space.pinned] == 0.0)


def test_linear_needs_p2(unit):
    with pytest.raises(ValueError):
        solve_linear_p2(_neumann(unit, 3.0, case="neumann-cos-p4"))


@pytest.mark.parametrize("build", ["neumann", "const"])
def test_newton_matches_linear(unit, build):
    m = _neumann(unit) if build == "neumann" else _const(unit, n=40, delta=0.1)
    a = solve_linear_p2(m)
    b = minimize(m)
    assert b.converged
    assert np.max(np.abs(a.u.coeffs - b.u.coeffs)) <= 1e-8


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
def test_zero_load_random_start(unit, p):
    m = _neumann(unit, p, n=16, load=LoadFunctional())
    r = minimize(m, SolverConfig(initial="random", seed=5))
    assert r.converged and r.energy <= 1e-12


def test_p4_monotone_log(unit):
    m = _neumann(unit, 4.0, n=32, case="neumann-cos-p4")
    r = minimize(m)
    assert r.converged
    en = [e["energy"] for e in r.log]
    assert all(np.diff(en) < 0)
    grads = [e["grad_norm"] for e in r.log]
    assert grads[-1] <= 1e-10 and grads[-1] < grads[0]
    # residual also decreases across the tail of the run
    assert all(np.diff(grads[-4:]) < 0)
    assert abs(mean_value(r.u)) <= 1e-12


def test_residual_norm(unit):
    m = _neumann(unit)
    r = solve_linear_p2(m)
    assert residual_norm(r.u, m) <= 1e-10
    assert residual_norm(m.space.zeros(), m) == pytest.approx(1.0, rel=1e-14)


def test_uniqueness_p2(unit):
    m = _neumann(unit)
    a = minimize(m, SolverConfig(initial="zero"))
    b = minimize(m, SolverConfig(initial="random", seed=11))
    assert np.max(np.abs(a.u.coeffs - b.u.coeffs)) <= 1e-10


def test_warm_start_across_meshes(unit):
    coarse = minimize(_neumann(unit, 3.0, n=16, case="neumann-cos-p4"))
    fine_m = _neumann(unit, 3.0, n=32, case="neumann-cos-p4")
    cold = minimize(fine_m)
    warm = minimize(fine_m, SolverConfig(initial="warm"), warm=coarse.u)
    assert warm.converged and warm.iterations <= cold.iterations
    assert np.max(np.abs(warm.u.coeffs - cold.u.coeffs)) <= 1e-8


def test_solution_norms_bounded(unit):
    d0 = make_kernel_config(unit, 2.0).delta0
    norms = []
    for k in range(1, 5):
        cfg = make_kernel_config(unit, 2.0, delta=d0 / 2**k)
        sp = build_space(build_mesh(unit, 32), 1, "CG", "zero-mean")
        r = solve_linear_p2(EnergyModel("het-neumann", sp, 2.0, get_case("neumann-cos").load(), kernel=cfg))
        norms.append(float(np.linalg.norm(r.u.coeffs)))
    assert np.all(np.isfinite(norms)) and max(norms) / min(norms) < 1.1


def test_max_iter_not_converged(unit):
    m = _neumann(unit, 3.0, n=16, case="neumann-cos-p4")
    r = minimize(m, SolverConfig(max_iter=1))
    assert not r.converged and r.iterations == 1


def test_config_validation():
    for bad in (dict(gtol=0), dict(armijo=0.7), dict(backtrack=1.0), dict(initial="foo")):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


def test_warm_without_source_starts_at_zero(unit):
    # first level of a sweep has no previous solve
    m = _neumann(unit, 3.0, n=8, case="neumann-cos-p4")
    a = minimize(m, SolverConfig(initial="warm"))
    b = minimize(m)
    np.testing.assert_array_equal(a.u.coeffs, b.u.coeffs)


def test_dirichlet_het_pinned(unit):
    cfg = make_kernel_config(unit, 3.0)
    sp = build_space(build_mesh(unit, 16), 1, "CG", "zero-trace")
    m = EnergyModel("het-dirichlet", sp, 3.0, LoadFunctional(f0=lambda X: PI**2 * np.sin(PI * X[:, 0])),
                    kernel=cfg)
    r = minimize(m)
    assert r.converged and np.all(r.u.coeffs[sp.pinned] == 0.0)


def test_log_text(unit):
    r = minimize(_neumann(unit, 4.0, n=8, case="neumann-cos-p4"))
    lines = iteration_log_text(r).splitlines()
    assert lines[0].startswith("#") and len(lines) == len(r.log) + 1


def test_interpolated_exact_is_near(unit):
    m = _neumann(unit, n=64)
    r = solve_linear_p2(m)
    ref = interpolate(m.space, cos1)
    assert np.max(np.abs(r.u.coeffs - ref.coeffs)) <= 1e-2
