import numpy as np
import pytest

import oracles
from conftest import PI, cos1, sin1
from nlac import io
from nlac.assembly.energies import (EnergyInfinite, EnergyModel, assemble_stiffness_p2, energy_G_heterogeneous,
                                    energy_local, energy_total, first_variation, seminorm_const_horizon,
                                    seminorm_heterogeneous)
from nlac.assembly.load import CompatibilityError, LoadFunctional, load_pairing
from nlac.femspace import build_space, interpolate
from nlac.geometry import build_inflated, build_mesh
from nlac.kernels import make_kernel_config

F_COS = LoadFunctional(f0=lambda X: PI**2 * np.cos(PI * X[:, 0]))


def _het(unit, p=2.0, beta=0.0, n=16, constraint="zero-mean", load=F_COS):
    cfg = make_kernel_config(unit, p, beta)
    sp = build_space(build_mesh(unit, n), 1, "CG", constraint)
    fam = "het-neumann" if constraint == "zero-mean" else "het-dirichlet"
    return EnergyModel(fam, sp, p, load, kernel=cfg), cfg, sp


def _sorted(sp, u):
    x = sp.dof_coords[:, 0]
    o = np.argsort(x)
    return x[o], u.coeffs[o]


def test_het_constant_zero(unit):
    cfg = make_kernel_config(unit, 2.0)
    sp = build_space(build_mesh(unit, 16), 1, "CG", "none")
    one = interpolate(sp, lambda X: np.full(len(X), 3.0))
    # zero up to partition-of-unity roundoff in the pair rows
    assert seminorm_heterogeneous(one, cfg) <= 1e-12 and energy_G_heterogeneous(one, cfg) <= 1e-12


@pytest.mark.parametrize("beta,tol", [(0.0, 1e-4), (1.0, 1e-3)])
def test_linear_seminorm(unit, beta, tol):
    cfg = make_kernel_config(unit, 2.0, beta)
    sp = build_space(build_mesh(unit, 16), 1, "CG", "none")
    u = interpolate(sp, lambda X: X[:, 0])
    assert seminorm_heterogeneous(u, cfg) == pytest.approx(1.0, abs=tol)
    assert energy_G_heterogeneous(u, cfg) == pytest.approx(0.5, abs=tol)


@pytest.mark.parametrize("p,beta", [(2.0, 0.0), (3.0, 0.5), (4.0, 0.0)])
def test_p_homogeneity(unit, p, beta):
    cfg = make_kernel_config(unit, p, beta)
    sp = build_space(build_mesh(unit, 16), 1, "CG", "none")
    u = interpolate(sp, lambda X: np.sin(3 * X[:, 0]))
    g1 = energy_G_heterogeneous(u, cfg)
    assert energy_G_heterogeneous(2.0 * u, cfg) == pytest.approx(2**p * g1, rel=1e-12)
    assert energy_G_heterogeneous(-0.5 * u, cfg) == pytest.approx(0.5**p * g1, rel=1e-12)


def test_linear_2d_exact(square):
    cfg = make_kernel_config(square, 2.0)
    sp = build_space(build_mesh(square, 8), 1, "CG", "none")
    u = interpolate(sp, lambda X: X[:, 0] + 2 * X[:, 1])
    # [u]^2 = |grad u|^2 |Omega| and G = [u]^2 / 2 for linear u
    assert seminorm_heterogeneous(u, cfg) == pytest.approx(5.0, rel=1e-6)
    assert energy_G_heterogeneous(u, cfg) == pytest.approx(2.5, rel=1e-6)
    assert energy_local(u, 2.0) == pytest.approx(2.5, rel=1e-12)


def test_const_examples(unit):
    inf = build_inflated(unit, 0.125, 16)
    sp = build_space(inf, 1, "CG", "zero-volume-layer")
    assert seminorm_const_horizon(sp.zeros(), inf.delta) == 0.0
    v = seminorm_const_horizon(interpolate(sp, lambda X: X[:, 0]), inf.delta)
    assert np.isfinite(v) and v > 0


def test_const_sin_oracle(unit):
    inf = build_inflated(unit, 0.05, 200)
    sp = build_space(inf, 1, "CG", "zero-volume-layer")
    u = interpolate(sp, sin1)
    ref = 2 * oracles.const_energy(*_sorted(sp, u), 2.0, inf.delta)
    assert seminorm_const_horizon(u, inf.delta) == pytest.approx(ref, rel=1e-6)


def test_const_2d_below_local(square):
    inf = build_inflated(square, 0.125, 16)
    sp = build_space(inf, 1, "CG", "zero-volume-layer")
    w = interpolate(sp, lambda X: np.sin(PI * X[:, 0]) * np.sin(PI * X[:, 1]))
    v = seminorm_const_horizon(w, inf.delta)
    assert 0 < v < 2 * energy_local(w, 2.0)


def test_local_examples(unit):
    sp = build_space(build_mesh(unit, 64), 1, "CG", "none")
    assert energy_local(interpolate(sp, lambda X: np.full(len(X), 2.0)), 2.0) == 0.0
    assert energy_local(interpolate(sp, lambda X: X[:, 0]), 2.0) == pytest.approx(0.5, rel=1e-13)
    assert energy_local(interpolate(sp, cos1), 2.0) == pytest.approx(PI**2 / 4, abs=1e-2)


def test_energy_total_basic(unit):
    m, cfg, sp = _het(unit, 3.0, load=LoadFunctional())
    u = interpolate(sp, cos1)
    assert energy_total(u, m) == pytest.approx(energy_G_heterogeneous(u, cfg), rel=1e-14)
    m, _, sp = _het(unit)
    assert energy_total(sp.zeros(), m) == 0.0


def test_energy_total_oracle(unit):
    m, cfg, sp = _het(unit, n=128)
    u = interpolate(sp, cos1)
    nodes, vals = _sorted(sp, u)
    ref = oracles.het_energy(nodes, vals, 2.0, 0.0, cfg.delta) - oracles.pairing(
        lambda x: PI**2 * np.cos(PI * x), nodes, vals, cfg.delta)
    e = energy_total(u, m)
    assert e == pytest.approx(ref, rel=1e-4)
    assert e == pytest.approx(PI**2 / 4 - PI**2 / 2, rel=1e-3)


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
def test_first_variation_at_zero(unit, p):
    m, _, sp = _het(unit, p)
    F = first_variation(sp.zeros(), m)
    np.testing.assert_allclose(F.values, -m.b[sp.free], rtol=0, atol=1e-15)


@pytest.mark.parametrize("p,beta", [(2.0, 0.0), (3.0, 0.5), (4.0, 0.0), (3.0, 0.0)])
def test_first_variation_fd(unit, p, beta):
    m, _, sp = _het(unit, p, beta, n=12, load=LoadFunctional(f0=cos1))
    rng = np.random.default_rng(1)
    c, v = rng.standard_normal((2, sp.n_dofs))
    t = 1e-6
    fd = (m.E(c + t * v) - m.E(c - t * v)) / (2 * t)
    assert m.grad(c) @ v == pytest.approx(fd, rel=1e-6)


def test_first_variation_linear_p2(unit):
    m, _, sp = _het(unit)
    c = np.random.default_rng(2).standard_normal(sp.n_dofs)
    A = assemble_stiffness_p2(m)
    lhs = m.grad(c) - m.grad(np.zeros_like(c))
    assert np.linalg.norm(lhs - A @ c) <= 1e-10 * np.linalg.norm(A @ c)


@pytest.mark.parametrize("fam", ["het", "const", "local"])
def test_stiffness_properties(unit, fam):
    if fam == "het":
        m, _, sp = _het(unit)
    elif fam == "const":
        sp = build_space(build_inflated(unit, 0.125, 16), 1, "CG", "zero-volume-layer")
        m = EnergyModel("const-dirichlet", sp, 2.0, LoadFunctional(f0=sin1), delta=0.125)
    else:
        sp = build_space(build_mesh(unit, 16), 1, "CG", "zero-mean")
        m = EnergyModel("local-neumann", sp, 2.0, F_COS)
    A = m.stiffness()
    assert abs(A - A.T).max() == 0.0
    rows = np.abs(np.asarray(A.sum(axis=1)).ravel())
    assert np.all(rows <= 1e-8 * np.asarray(abs(A).sum(axis=1)).ravel())
    Af = A[sp.free][:, sp.free].toarray()
    lam = np.linalg.eigvalsh(Af)
    assert lam.min() >= -1e-10 * np.abs(lam).max()
    c = np.random.default_rng(3).standard_normal(sp.n_dofs)
    assert c @ (A @ c) == pytest.approx(2 * m.G(c), rel=1e-8)


def test_stiffness_only_p2(unit):
    m, _, _ = _het(unit, 3.0)
    with pytest.raises(ValueError):
        m.stiffness()


def test_hessian_fd(unit):
    m, _, sp = _het(unit, 4.0, n=12)
    rng = np.random.default_rng(4)
    c, v = rng.standard_normal((2, sp.n_dofs))
    t = 1e-6
    fd = (m.grad(c + t * v) - m.grad(c - t * v)) / (2 * t)
    Hv = m.hessian(c) @ v
    assert np.linalg.norm(fd - Hv) <= 1e-6 * np.linalg.norm(Hv)


def test_load_pairing_examples(unit):
    assert load_pairing(F_COS, cos1, mesh=build_mesh(unit, 256)) == pytest.approx(PI**2 / 2, abs=1e-6)
    sp = build_space(build_mesh(unit, 32), 1, "CG", "none")
    one = interpolate(sp, lambda X: np.ones(len(X)))
    assert abs(load_pairing(F_COS, one)) <= 1e-10
    g = LoadFunctional(g=lambda X: np.where(X[:, 0] < 0.5, 1.0, -1.0))
    assert abs(load_pairing(g, one)) <= 1e-15


def test_incompatible_neumann(unit):
    with pytest.raises(CompatibilityError):
        _het(unit, load=LoadFunctional(f0=lambda X: np.ones(len(X))))


def test_family_constraint_mismatch(unit):
    cfg = make_kernel_config(unit, 2.0)
    sp = build_space(build_mesh(unit, 8), 1, "CG", "none")
    with pytest.raises(ValueError):
        EnergyModel("het-neumann", sp, 2.0, kernel=cfg)


def test_sub2_guard(unit):
    cfg = make_kernel_config(unit, 1.5)
    sp = build_space(build_mesh(unit, 8), 1, "CG", "zero-mean")
    with pytest.raises(ValueError, match="experimental"):
        EnergyModel("het-neumann", sp, 1.5, kernel=cfg)
    m = EnergyModel("het-neumann", sp, 1.5, kernel=cfg, experimental_sub2=True)
    assert np.isfinite(m.G(interpolate(sp, cos1).coeffs))


def test_dg_energy_guard(unit):
    cfg = make_kernel_config(unit, 2.0, 1.0)
    sp = build_space(build_mesh(unit, 8), 1, "DG", "none")
    with pytest.raises(EnergyInfinite):
        seminorm_heterogeneous(interpolate(sp, cos1), cfg)


def test_coo_round_trip(tmp_path, unit):
    m, _, _ = _het(unit)
    A = m.stiffness()
    path = io.write_coo(tmp_path / "A.txt", A)
    B = io.read_coo(path)
    assert abs(A - B).max() == 0.0
