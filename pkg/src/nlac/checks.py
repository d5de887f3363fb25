"""Module invariant suites run by ``nlac check <suite>``."""
from dataclasses import dataclass

import numpy as np

from .assembly.energies import (EnergyModel, energy_G_heterogeneous, energy_local,
                                seminorm_heterogeneous)
from .assembly.load import LoadFunctional
from .convolution import apply_Kdelta, convolution_error
from .femspace import DiscreteFunction, build_space, embed_hat, hat_space, interpolate, mean_value
from .geometry import (LAYER, Domain, build_inflated, build_mesh, check_distance_field,
                       interior_samples, smooth_distance)
from .harness import gamma_pointwise_check, observed_order
from .kernels import (cbar, default_psi, default_rho, eval_q, kernel_constant, make_kernel_config,
                      radial_moment)
from .solver import SolverConfig, minimize, solve_linear_p2

PI = np.pi


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str


def _res(suite, name, ok, detail):
    return CheckResult(suite, name, bool(ok), detail)


def normalization_table(ps=(2.0, 3.0, 4.0)):
    """``int_B C^gamma |xi|^{p-beta}`` against ``cbar`` for d in {1,2}, beta in {0, d/2}."""
    rows = []
    for d in (1, 2):
        for p in ps:
            for beta in (0.0, d / 2.0):
                c = kernel_constant(d, beta, p)
                val = radial_moment(lambda r: np.full_like(np.asarray(r, float), c), d, p - beta, 1.0)
                rows.append((d, p, beta, val, cbar(d, p)))
    return rows


def geometry_suite():
    s = "geometry"
    out = []
    for dom, n in ((Domain.interval(), 7), (Domain.rectangle(0, 2, 0, 1), 5)):
        m = build_mesh(dom, n)
        err = abs(m.element_measures().sum() / dom.measure - 1)
        out.append(_res(s, f"partition d={dom.d}", err <= 1e-12, f"relative measure error {err:.1e}"))
    for dom in (Domain.interval(), Domain.rectangle()):
        chk = check_distance_field(smooth_distance(dom), 1024)
        out.append(_res(s, f"distance field d={dom.d}", chk["ok"],
                        f"ratio in [{chk['ratio_min']:.4f}, {chk['ratio_max']:.4f}], "
                        f"|grad| <= {chk['grad_max']:.4f}"))
    inf = build_inflated(Domain.interval(), 0.13, 10)
    lay = inf.mesh.tags == LAYER
    mids = inf.mesh.vertices[inf.mesh.elements].mean(axis=1)
    outside = ~inf.base.contains(mids, closed=False)
    out.append(_res(s, "inflated tags", np.array_equal(lay, outside) and abs(inf.delta - 0.1) < 1e-14,
                    f"snapped delta {inf.delta!r}"))
    return out


def kernels_suite():
    s = "kernels"
    out = []
    worst = max(abs(v - c) for *_, v, c in normalization_table())
    out.append(_res(s, "normalization identity", worst <= 1e-8, f"max error {worst:.1e}"))
    ok = all(abs(cbar(1, p) - 1) < 1e-14 for p in (2, 3, 4)) and abs(cbar(2, 2) - 2) < 1e-14
    out.append(_res(s, "cbar values", ok, "cbar(1,p)=1, cbar(2,2)=2"))
    r = np.logspace(-3, 1, 400)
    qr = eval_q(r)
    # beyond r ~ 6 the gap 1/(1+e^{r^2}) is below double precision, so only <= is testable there
    strict = r <= 6.0
    ok = (np.all(qr / r >= 0) and np.all(qr[strict] / r[strict] < 0.5) and np.all(qr / r <= 0.5)
          and np.all(np.diff(qr) > 0))
    out.append(_res(s, "rate function", ok, "q(r)/r in [0, 1/2), q increasing"))
    for d in (1, 2):
        for p, beta in ((2.0, 0.0), (3.0, d / 2.0)):
            rho = default_rho(d, p, beta)
            m = radial_moment(rho, d, p - beta, 1.0, rho.breaks) / cbar(d, p)
            out.append(_res(s, f"rho normalization d={d} p={p} beta={beta}", abs(m - 1) <= 1e-8,
                            f"moment {m!r}"))
        psi = default_psi(d)
        m = radial_moment(psi, d, 0.0, psi.support)
        out.append(_res(s, f"psi mass d={d}", abs(m - 1) <= 1e-8, f"mass {m!r}"))
        dom = Domain.interval() if d == 1 else Domain.rectangle()
        cfg = make_kernel_config(dom, 2.0, 0.0)
        X = interior_samples(dom, 1024)
        ratio = float(np.max(cfg.eta(X) / dom.dist_to_boundary(X)))
        out.append(_res(s, f"strict interiority d={d}", ratio < 1, f"max eta/dist {ratio:.3e}"))
    return out


def femspace_suite():
    s = "femspace"
    out = []
    dom = Domain.interval()
    errs, hs = [], []
    for n in (8, 16, 32, 64):
        sp = build_space(build_mesh(dom, n), 1, "CG", "none")
        u = interpolate(sp, lambda X: np.cos(PI * X[:, 0]))
        # seminorm of the interpolation error; the exact derivative enters through a fine rule
        elem, X, W = sp.quad_points(8)
        g = u.grads_on(elem, X)[:, 0] + PI * np.sin(PI * X[:, 0])
        errs.append(float(np.sum(W * g**2)) ** 0.5)
        hs.append(1.0 / n)
    orders = observed_order(errs, hs)
    out.append(_res(s, "approximation order", min(orders) >= 0.9, f"orders {orders}"))
    for deg, cont in ((1, "CG"), (2, "CG"), (1, "DG"), (2, "DG")):
        sp = build_space(build_mesh(Domain.rectangle(), 3), deg, cont, "none")
        hat = hat_space(sp)
        worst = 0.0
        for i in range(hat.n_dofs):
            c = np.zeros(hat.n_dofs)
            c[i] = 1.0
            v = embed_hat(DiscreteFunction(hat, c), sp)
            X = interior_samples(Domain.rectangle(), 64, seed=i)
            worst = max(worst, float(np.max(np.abs(v(X) - DiscreteFunction(hat, c)(X)))))
        out.append(_res(s, f"hat containment P{deg} {cont}", worst <= 1e-12, f"max round-trip {worst:.1e}"))
    sp = build_space(build_mesh(dom, 16), 1, "CG", "zero-mean")
    u = interpolate(sp, lambda X: np.exp(X[:, 0]))
    out.append(_res(s, "zero-mean constraint", abs(mean_value(u)) <= 1e-12, f"mean {mean_value(u):.1e}"))
    return out


def assembly_suite():
    s = "assembly"
    out = []
    dom = Domain.interval()
    for beta in (0.0, 1.0):
        cfg = make_kernel_config(dom, 2.0, beta)
        sp = build_space(build_mesh(dom, 16), 1, "CG", "none")
        u = interpolate(sp, lambda X: X[:, 0])
        v = seminorm_heterogeneous(u, cfg)
        g = energy_G_heterogeneous(u, cfg)
        out.append(_res(s, f"linear seminorm beta={beta}", abs(v - 1) <= 1e-4 and abs(g - 0.5) <= 1e-4,
                        f"[x]^2={v!r}, G={g!r}"))
    rng = np.random.default_rng(0)
    cfg = make_kernel_config(dom, 3.0, 0.5)
    sp = build_space(build_mesh(dom, 16), 1, "CG", "none")
    u = interpolate(sp, lambda X: np.sin(3 * X[:, 0]))
    g1 = energy_G_heterogeneous(u, cfg)
    g2 = energy_G_heterogeneous(u * 2.0, cfg)
    err = abs(g2 / (8.0 * g1) - 1)
    out.append(_res(s, "p-homogeneity", err <= 1e-12, f"relative error {err:.1e}"))
    cfg = make_kernel_config(dom, 2.0, 0.0)
    sp = build_space(build_mesh(dom, 16), 1, "CG", "zero-mean")
    m = EnergyModel("het-neumann", sp, 2.0, LoadFunctional(f0=lambda X: PI**2 * np.cos(PI * X[:, 0])),
                    kernel=cfg)
    A = m.stiffness()
    rows = np.abs(np.asarray(A.sum(axis=1)).ravel()) / np.asarray(abs(A).sum(axis=1)).ravel()
    out.append(_res(s, "stiffness row sums", rows.max() <= 1e-8, f"max relative row sum {rows.max():.1e}"))
    Af = A[sp.free][:, sp.free].toarray()
    lam = np.linalg.eigvalsh(Af)
    out.append(_res(s, "stiffness PSD", lam.min() >= -1e-10 * np.abs(lam).max(), f"min eigenvalue {lam.min():.2e}"))
    c = rng.standard_normal(sp.n_dofs)
    q = c @ (A @ c)
    err = abs(q / (2 * m.G(c)) - 1)
    out.append(_res(s, "quadratic form", err <= 1e-8, f"relative error {err:.1e}"))
    lin = np.linalg.norm(m.grad(c) - m.grad(0 * c) - A @ c) / np.linalg.norm(A @ c)
    out.append(_res(s, "first variation linear at p=2", lin <= 1e-10, f"relative error {lin:.1e}"))
    for p in (2.0, 3.0, 4.0):
        cfg = make_kernel_config(dom, p, 0.0)
        spn = build_space(build_mesh(dom, 12), 1, "CG", "zero-mean")
        mm = EnergyModel("het-neumann", spn, p, LoadFunctional(f0=lambda X: np.cos(PI * X[:, 0])), kernel=cfg)
        c = rng.standard_normal(spn.n_dofs)
        w = rng.standard_normal(spn.n_dofs)
        t = 1e-6
        fd = (mm.E(c + t * w) - mm.E(c - t * w)) / (2 * t)
        an = mm.grad(c) @ w
        err = abs(fd - an) / abs(an)
        out.append(_res(s, f"gradient vs finite differences p={p}", err < 1e-6, f"relative error {err:.1e}"))
    sp = build_space(build_mesh(dom, 64), 1, "CG", "none")
    u = interpolate(sp, lambda X: np.cos(PI * X[:, 0]))
    e = energy_local(u, 2.0)
    out.append(_res(s, "local energy of cos", abs(e - PI**2 / 4) <= 1e-2, f"{e!r}"))
    return out


def convolution_suite():
    s = "convolution"
    out = []
    dom = Domain.interval()
    cfg = make_kernel_config(dom, 2.0, 0.0)
    sp = build_space(build_mesh(dom, 32), 1, "CG", "none")
    xs = np.linspace(0, 1, 17)[:, None]
    one = interpolate(sp, lambda X: np.full(len(X), 3.0))
    err = float(np.max(np.abs(apply_Kdelta(one, cfg, xs) - 3.0)))
    out.append(_res(s, "constants preserved", err <= 1e-12, f"max error {err:.1e}"))
    lin = interpolate(sp, lambda X: X[:, 0])
    err = float(np.max(np.abs(apply_Kdelta(lin, cfg, xs) - xs[:, 0])))
    out.append(_res(s, "linear preserved", err <= 1e-12, f"max error {err:.1e}"))
    out.append(_res(s, "boundary trace", abs(apply_Kdelta(lin, cfg, 0.0)) == 0.0
                    and apply_Kdelta(lin, cfg, 1.0) == 1.0, "K u = u on the boundary"))
    fine = build_space(build_mesh(dom, 256), 1, "CG", "none")
    errs, ds = [], []
    for k in range(4):
        c = make_kernel_config(dom, 2.0, 0.0, delta=cfg.delta0 / 2 ** (k + 1))
        errs.append(convolution_error(lambda X: np.cos(PI * X[:, 0]), c, 2.0, space=fine))
        ds.append(c.delta)
    orders = observed_order(errs, ds)
    ok = all(o is not None and o >= 0.8 for o in orders) and all(np.diff(errs) < 0)
    out.append(_res(s, "K_delta error order", ok, f"orders {orders}"))
    return out


def solver_suite():
    s = "solver"
    out = []
    dom = Domain.interval()
    cfg = make_kernel_config(dom, 2.0, 0.0)
    sp = build_space(build_mesh(dom, 32), 1, "CG", "zero-mean")
    m = EnergyModel("het-neumann", sp, 2.0, LoadFunctional(f0=lambda X: PI**2 * np.cos(PI * X[:, 0])),
                    kernel=cfg)
    a = solve_linear_p2(m)
    b = minimize(m)
    d = float(np.max(np.abs(a.u.coeffs - b.u.coeffs)))
    out.append(_res(s, "p=2 Newton equals linear solve", d <= 1e-8, f"max difference {d:.1e}"))
    out.append(_res(s, "zero mean", abs(mean_value(a.u)) <= 1e-12, f"mean {mean_value(a.u):.1e}"))
    for p in (3.0, 4.0):
        c4 = make_kernel_config(dom, p, 0.0)
        m0 = EnergyModel("het-neumann", build_space(build_mesh(dom, 16), 1, "CG", "zero-mean"), p, kernel=c4)
        r = minimize(m0, SolverConfig(initial="random", seed=3))
        out.append(_res(s, f"zero load p={p}", r.converged and r.energy <= 1e-12, f"energy {r.energy:.1e}"))
    return out


def harness_suite():
    s = "harness"
    out = []
    o = observed_order([0.1, 0.025, 0.00625], [1, 0.5, 0.25])
    out.append(_res(s, "observed order", all(abs(x - 2) < 1e-12 for x in o), f"{o}"))
    o = observed_order([0.1, 0.0, 0.05], [1, 0.5, 0.25])
    out.append(_res(s, "undefined order marker", o == [None, None], f"{o}"))
    d0 = make_kernel_config(Domain.interval(), 2.0, 0.0).delta0
    r = gamma_pointwise_check(lambda X: np.full(len(X), 2.0), [d0 / 2, d0 / 4, d0 / 8], "het-neumann", n=64)
    out.append(_res(s, "gamma check constant", r["pass"] and max(r["gaps"]) <= 1e-12, f"gaps {r['gaps']}"))
    return out


SUITES = {
    "geometry": geometry_suite,
    "kernels": kernels_suite,
    "femspace": femspace_suite,
    "assembly": assembly_suite,
    "convolution": convolution_suite,
    "solver": solver_suite,
    "harness": harness_suite,
}


def run_suite(name):
    if name == "all":
        return [r for fn in SUITES.values() for r in fn()]
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES) + ['all']}")
    return SUITES[name]()
