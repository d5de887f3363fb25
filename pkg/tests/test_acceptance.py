"""Fifteen acceptance criteria; each test registers one pass/fail summary line."""
import os
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import integrate

import oracles
from conftest import PI, cos1, sin1
from nlac.assembly.energies import (EnergyModel, energy_G_heterogeneous, energy_local, first_variation,
                                    seminorm_heterogeneous)
from nlac.assembly.load import LoadFunctional
from nlac.cases import get_case
from nlac.convolution import apply_Kdelta, convolution_error
from nlac.femspace import build_space, interpolate, mean_value
from nlac.geometry import Domain, build_inflated, build_mesh, interior_samples
from nlac.harness import (PathSpec, family_delta0, gamma_pointwise_check, inequality_suite, observed_order,
                          run_path)
from nlac.kernels import cbar, kernel_constant, make_kernel_config
from nlac.solver import minimize, solve_linear_p2

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
UNIT = Domain.interval()
D0 = family_delta0("het-neumann", UNIT)
DIAG = [D0 / 2 ** (k + 1) for k in range(4)]


def _sorted(sp, u):
    x = sp.dof_coords[:, 0]
    o = np.argsort(x)
    return x[o], u.coeffs[o]


def test_c01_normalization(criterion):
    criterion(1, "normalization identities")
    t0 = time.perf_counter()
    for d in (1, 2):
        for p in (2.0, 3.0, 4.0):
            for beta in (0.0, d / 2):
                c = kernel_constant(d, beta, p)
                s = p - beta
                if d == 1:
                    val = 2 * integrate.quad(lambda r: c * r**s, 0, 1, epsabs=0, epsrel=1e-13)[0]
                else:
                    val = integrate.dblquad(lambda y, x: c * (x * x + y * y) ** (s / 2), -1, 1,
                                            lambda x: -np.sqrt(1 - x * x), lambda x: np.sqrt(1 - x * x),
                                            epsabs=0, epsrel=1e-10)[0]
                assert val == pytest.approx(cbar(d, p), rel=1e-8), (d, p, beta)
        for p in (2.0, 3.0, 4.0):
            assert cbar(1, p) == pytest.approx(1.0, rel=1e-14)
    assert cbar(2, 2.0) == pytest.approx(2.0, rel=1e-14)
    assert time.perf_counter() - t0 < 1.0


@pytest.mark.parametrize("beta", [0.0, 1.0])
def test_c02_linear_seminorm(criterion, beta):
    criterion(2, "linear-function seminorm")
    cfg = make_kernel_config(UNIT, 2.0, beta, delta=D0 / 2)
    sp = build_space(build_mesh(UNIT, 16), 1, "CG", "none")
    u = interpolate(sp, lambda X: X[:, 0])
    assert seminorm_heterogeneous(u, cfg) == pytest.approx(1.0, abs=1e-3)
    assert energy_G_heterogeneous(u, cfg) == pytest.approx(0.5, abs=1e-3)


def test_c03_embedding(criterion):
    criterion(3, "embedding inequality")
    out = inequality_suite(p=2.0, samples=100, slack=1e-8)
    assert len(out["deltas"]) == 4
    assert out["embedding"]["violations"] == 0, out["embedding"]


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
def test_c04_gradient(criterion, p):
    criterion(4, "first variation vs finite differences")
    cfg = make_kernel_config(UNIT, p)
    sp = build_space(build_mesh(UNIT, 16), 1, "CG", "zero-mean")
    m = EnergyModel("het-neumann", sp, p, LoadFunctional(f0=cos1), kernel=cfg)
    rng = np.random.default_rng(int(p))
    for _ in range(10):
        c, v = rng.standard_normal((2, sp.n_dofs))
        u = sp.zeros()
        u.coeffs[:] = c
        t = 1e-6
        fd = (m.E(c + t * v) - m.E(c - t * v)) / (2 * t)
        F = first_variation(u, m)
        an = F.values @ v[sp.free]
        assert abs(an - fd) <= 1e-6 * abs(fd)


@pytest.mark.parametrize("family", ["het-neumann", "het-dirichlet", "const-dirichlet"])
def test_c05_newton_vs_linear(criterion, family):
    criterion(5, "p=2 Newton vs linear solve")
    if family == "const-dirichlet":
        inf = build_inflated(UNIT, 0.05, 200)
        sp = build_space(inf, 1, "CG", "zero-volume-layer")
        m = EnergyModel(family, sp, 2.0, get_case("dirichlet-sin").load(), delta=inf.delta)
    else:
        case = "neumann-cos" if family == "het-neumann" else "dirichlet-sin"
        cons = "zero-mean" if family == "het-neumann" else "zero-trace"
        sp = build_space(build_mesh(UNIT, 128), 1, "CG", cons)
        m = EnergyModel(family, sp, 2.0, get_case(case).load(), kernel=make_kernel_config(UNIT, 2.0))
    a = solve_linear_p2(m)
    b = minimize(m)
    assert b.converged
    assert np.max(np.abs(a.u.coeffs - b.u.coeffs)) <= 1e-8


@pytest.mark.parametrize("n,p,beta", [(16, 2.0, 0.0), (32, 3.0, 0.5), (16, 4.0, 1.0)])
def test_c06_oracle_het(criterion, n, p, beta):
    criterion(6, "dense quadrature oracle")
    cfg = make_kernel_config(UNIT, p, beta)
    sp = build_space(build_mesh(UNIT, n), 1, "CG", "none")
    u = interpolate(sp, lambda X: np.cos(PI * X[:, 0]) + X[:, 0] ** 2)
    nodes, vals = _sorted(sp, u)
    assert energy_G_heterogeneous(u, cfg) == pytest.approx(
        oracles.het_energy(nodes, vals, p, beta, cfg.delta), rel=1e-6)
    assert seminorm_heterogeneous(u, cfg) == pytest.approx(
        oracles.het_energy(nodes, vals, p, beta, cfg.delta, kernel="gamma"), rel=1e-6)


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_c06_oracle_const(criterion, p):
    criterion(6, "dense quadrature oracle")
    inf = build_inflated(UNIT, 0.125, 16)
    sp = build_space(inf, 1, "CG", "zero-volume-layer")
    u = interpolate(sp, sin1)
    m = EnergyModel("const-dirichlet", sp, p, delta=inf.delta)
    nodes, vals = _sorted(sp, u)
    assert m.G(u.coeffs) == pytest.approx(oracles.const_energy(nodes, vals, p, inf.delta), rel=1e-6)


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
def test_c06_oracle_local(criterion, p):
    criterion(6, "dense quadrature oracle")
    sp = build_space(build_mesh(UNIT, 32), 1, "CG", "none")
    u = interpolate(sp, lambda X: np.exp(X[:, 0]) * np.sin(3 * X[:, 0]))
    nodes, vals = _sorted(sp, u)
    assert energy_local(u, p) == pytest.approx(oracles.local_energy(nodes, vals, p), rel=1e-6)


@pytest.mark.parametrize("family", ["het-neumann", "const-dirichlet"])
def test_c07_gamma_pointwise(criterion, family):
    criterion(7, "pointwise Gamma-limit diagnostic")
    cap = family_delta0(family, UNIT)
    deltas = [cap / 2 ** (k + 1) for k in range(4)]
    v = cos1 if family == "het-neumann" else sin1
    out = gamma_pointwise_check(v, deltas, family, n=512)
    assert all(np.diff(out["gaps"]) < 0), out["gaps"]
    assert out["gaps"][-1] <= 0.25 * out["gaps"][0]


def _diag_spec():
    return PathSpec(path="diagonal", family="het-neumann", p=2.0, deltas=DIAG, ns=[16, 32, 64, 128],
                    case="neumann-cos", final_tol=1e-2)


def test_c08_diagonal(criterion):
    criterion(8, "AC diagonal path")
    t0 = time.perf_counter()
    r = run_path(_diag_spec())
    assert r.failure is None
    assert all(np.diff(r.errors) < 0), r.errors
    assert r.errors[-1] <= 1e-2
    assert time.perf_counter() - t0 <= 300


def test_c09_fixed_h(criterion):
    criterion(9, "AC fixed-h path")
    r = run_path(PathSpec(path="fixed-h", family="het-neumann", p=2.0, deltas=DIAG, ns=[64] * 4,
                          case="neumann-cos", reference="local-discrete"))
    assert r.failure is None
    assert r.errors[-1] <= 1e-3, r.errors


def test_c10_galerkin_rate(criterion):
    criterion(10, "Galerkin rate at fixed delta")
    r = run_path(PathSpec(path="fixed-sigma", family="het-neumann", p=4.0, deltas=[D0 / 2] * 4,
                          ns=[8, 16, 32, 64], case="neumann-cos-p4", reference="fine-grid", fine_n=128))
    assert r.failure is None
    assert all(o is not None and o >= 2 / 4.0 - 0.2 for o in r.order_energy), r.order_energy


def test_c11_const_diagonal(criterion):
    criterion(11, "constant-horizon AC diagonal")
    r = run_path(PathSpec(path="diagonal", family="const-dirichlet", p=2.0,
                          deltas=[0.1 / 2**k for k in range(4)], ns=[20 * 2**k for k in range(4)],
                          case="dirichlet-sin"))
    assert r.failure is None
    assert all(np.diff(r.errors) < 0), r.errors
    assert r.errors[-1] <= 1e-2
    for rec, n in zip(r.records, r.spec.ns):
        assert rec.delta * n == pytest.approx(round(rec.delta * n), abs=1e-9)


def test_c12_kdelta(criterion):
    criterion(12, "K_delta properties")
    cfg = make_kernel_config(UNIT, 2.0)
    sp = build_space(build_mesh(UNIT, 32), 1, "CG", "none")
    u = interpolate(sp, lambda X: np.full(len(X), 3.25))
    xs = np.linspace(0, 1, 65)[:, None]
    assert np.max(np.abs(apply_Kdelta(u, cfg, xs) - 3.25)) <= 1e-12
    sq = Domain.rectangle()
    cfg2 = make_kernel_config(sq, 2.0)
    u2 = interpolate(build_space(build_mesh(sq, 8), 1, "CG", "none"), lambda X: np.full(len(X), -2.0))
    assert np.max(np.abs(apply_Kdelta(u2, cfg2, interior_samples(sq, 64)) + 2.0)) <= 1e-12
    fine = build_space(build_mesh(UNIT, 256), 1, "CG", "none")
    errs = [convolution_error(cos1, make_kernel_config(UNIT, 2.0, delta=dl), 2.0, space=fine) for dl in DIAG]
    assert min(observed_order(errs, DIAG)) >= 0.8, errs


def test_c13_constraints(criterion):
    criterion(13, "constraint exactness")
    for p, case in ((2.0, "neumann-cos"), (4.0, "neumann-cos-p4")):
        sp = build_space(build_mesh(UNIT, 64), 1, "CG", "zero-mean")
        m = EnergyModel("het-neumann", sp, p, get_case(case).load(), kernel=make_kernel_config(UNIT, p))
        u = (solve_linear_p2(m) if p == 2 else minimize(m)).u
        assert abs(mean_value(u)) <= 1e-12
    sp = build_space(build_mesh(UNIT, 64), 1, "CG", "zero-trace")
    m = EnergyModel("het-dirichlet", sp, 3.0, get_case("dirichlet-sin").load(),
                    kernel=make_kernel_config(UNIT, 3.0))
    u = minimize(m).u
    assert np.all(u.coeffs[sp.pinned] == 0.0)
    inf = build_inflated(UNIT, 0.1, 40)
    sp = build_space(inf, 1, "CG", "zero-volume-layer")
    m = EnergyModel("const-dirichlet", sp, 2.0, get_case("dirichlet-sin").load(), delta=inf.delta)
    for res in (solve_linear_p2(m), minimize(m)):
        assert np.all(res.u.coeffs[sp.pinned] == 0.0)
    assert np.all(np.abs(sp.dof_coords[sp.pinned, 0] - 0.5) >= 0.5)


def test_c14_inequality_suite(criterion):
    criterion(14, "inequality suite")
    out = inequality_suite(p=2.0, samples=100, slack=1e-8)
    for key in ("embedding", "delta_stability"):
        assert out[key]["explicit"] and out[key]["violations"] == 0, (key, out[key])
    for key in ("poincare_neumann", "poincare_dirichlet", "poincare_const"):
        consts = out[key]["constants"]
        assert all(np.isfinite(consts)) and out[key]["pass"], (key, consts)
    assert all(np.isfinite(out["energy_equivalence"]["lower"] + out["energy_equivalence"]["upper"]))
    assert out["energy_equivalence"]["pass"]


def test_c15_determinism(criterion, tmp_path):
    criterion(15, "determinism across thread counts")
    tables = []
    for i, threads in enumerate((1, 4, 4)):
        out = tmp_path / f"run{i}"
        env = dict(os.environ, NLAC_THREADS=str(threads))
        proc = subprocess.run([sys.executable, "-m", "nlac.cli.main", "run",
                               os.path.join(ROOT, "configs", "diag_p2.json"), "-o", str(out)],
                              env=env, capture_output=True, text=True, timeout=600)
        assert proc.returncode == 0, proc.stderr
        tables.append((out / "diagonal.csv").read_bytes())
    assert tables[0] == tables[1] == tables[2]
    assert tables[0] == run_path(_diag_spec()).csv_text().encode()
