"""Convergence paths, Gamma-limit diagnostics and the inequality suite."""
from dataclasses import dataclass, field, asdict
import csv
import io
import json
import math
import time
from typing import Optional

import numpy as np

from .assembly.energies import (CONST_DELTA_FRACTION, EnergyModel, _gamma_profile, const_profile,
                                const_rows, het_rows)
from .assembly.pairs import gradient_rows
from .cases import get_case
from .femspace import DiscreteFunction, build_space, interpolate, lp_error, lp_norm
from .geometry import Domain, build_inflated, build_mesh, smooth_distance
from .kernels import delta0 as delta0_fn, make_kernel_config
from .solver import SolverConfig, SolverFailure, minimize, solve_linear_p2

PATHS = ("fixed-sigma", "fixed-h", "diagonal")
REFERENCES = ("analytic", "fine-grid", "local-discrete")
CSV_COLUMNS = ("level", "delta", "h", "dofs", "err_lp", "err_energy", "order_lp", "order_energy",
               "iters", "seconds")
NA = "n/a"
TREND_RATIO = 0.25
ORDER_SLACK = 0.2


def family_delta0(family, domain):
    """Admissible horizon cap: delta0 for the heterogeneous families, 0.25 diam for const."""
    if family.startswith("het"):
        lam = smooth_distance(domain)
        return delta0_fn(lam.kappa0, lam.kappa1)
    if family == "const-dirichlet":
        return CONST_DELTA_FRACTION * domain.diameter
    return math.inf


def delta_from_sigma(sigma, delta0):
    """``min(delta0, 1/sigma)``; hitting the cap itself is rejected downstream."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return min(delta0, 1.0 / sigma)


def _strict(seq, decreasing):
    a = np.asarray(seq, dtype=float)
    d = np.diff(a)
    return bool(np.all(d < 0) if decreasing else np.all(d > 0))


@dataclass(frozen=True)
class PathSpec:
    path: str
    family: str
    p: float
    deltas: tuple
    ns: tuple
    case: str
    reference: str = "analytic"
    beta: float = 0.0
    d: int = 1
    fine_n: Optional[int] = None
    eval_factor: int = 4
    solver: SolverConfig = field(default_factory=SolverConfig)
    warm_start: bool = True
    final_tol: Optional[float] = None
    min_order: Optional[float] = None
    require_decreasing: bool = True
    record_timing: bool = False

    def __post_init__(self):
        object.__setattr__(self, "deltas", tuple(float(x) for x in self.deltas))
        object.__setattr__(self, "ns", tuple(int(x) for x in self.ns))
        if self.path not in PATHS:
            raise ValueError(f"unknown path {self.path!r}; choose from {PATHS}")
        if self.reference not in REFERENCES:
            raise ValueError(f"unknown reference policy {self.reference!r}")
        if len(self.deltas) != len(self.ns):
            raise ValueError("deltas and ns must have the same length")
        if len(self.ns) < 3:
            raise ValueError("a path needs at least 3 levels")
        if self.path == "fixed-sigma":
            if len(set(self.deltas)) != 1 or not _strict(self.ns, False):
                raise ValueError("fixed-sigma needs one delta and strictly increasing n")
        elif self.path == "fixed-h":
            if len(set(self.ns)) != 1 or not _strict(self.deltas, True):
                raise ValueError("fixed-h needs one n and strictly decreasing deltas")
            if self.reference != "local-discrete":
                raise ValueError("fixed-h compares against the local discrete solve (reference=local-discrete)")
        else:
            if not (_strict(self.deltas, True) and _strict(self.ns, False)):
                raise ValueError("diagonal needs strictly decreasing deltas and increasing n")
        if self.reference == "fine-grid":
            if self.fine_n is None or self.fine_n <= max(self.ns):
                raise ValueError("fine-grid reference needs fine_n above every level n")
        if self.reference == "local-discrete" and self.path != "fixed-h":
            raise ValueError("local-discrete reference is only meaningful on the fixed-h path")
        if self.d != get_case(self.case).d:
            raise ValueError("case dimension does not match d")
        cap = family_delta0(self.family, self.domain)
        if self.family.startswith("het") and any(not 0 < x < cap for x in self.deltas):
            raise ValueError(f"A_delta violated: every delta must lie in (0, delta0={cap!r})")
        if self.family == "const-dirichlet" and any(not 0 < x <= cap for x in self.deltas):
            raise ValueError(f"const deltas must lie in (0, {cap!r}]")

    @property
    def domain(self):
        return Domain.interval() if self.d == 1 else Domain.rectangle()

    @property
    def eval_n(self):
        return self.fine_n if self.reference == "fine-grid" else self.eval_factor * max(self.ns)

    def to_dict(self):
        out = asdict(self)
        out["solver"] = self.solver.to_dict()
        out["deltas"] = list(self.deltas)
        out["ns"] = list(self.ns)
        return out


@dataclass
class LevelRecord:
    level: int
    delta: float
    delta_requested: float
    sigma: float
    h: float
    dofs: int
    err_lp: float
    err_energy: float
    energy: float
    u_norm: float
    iters: int
    seconds: float
    converged: bool
    constants: dict = field(default_factory=dict)


@dataclass
class ConvergenceReport:
    spec: PathSpec
    records: list = field(default_factory=list)
    order_lp: list = field(default_factory=list)
    order_energy: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    failure: Optional[str] = None

    @property
    def passed(self):
        return self.failure is None and all(v["pass"] for v in self.verdicts.values())

    @property
    def errors(self):
        return [r.err_lp for r in self.records]

    def csv_text(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i, r in enumerate(self.records):
            olp = self.order_lp[i - 1] if i > 0 and i - 1 < len(self.order_lp) else None
            oen = self.order_energy[i - 1] if i > 0 and i - 1 < len(self.order_energy) else None
            w.writerow([r.level, repr(r.delta), repr(r.h), r.dofs, repr(r.err_lp), repr(r.err_energy),
                        _fmt_order(olp), _fmt_order(oen), r.iters,
                        repr(r.seconds) if self.spec.record_timing else "-"])
        return buf.getvalue()

    def to_dict(self):
        return {"spec": self.spec.to_dict(),
                "records": [asdict(r) for r in self.records],
                "order_lp": self.order_lp, "order_energy": self.order_energy,
                "verdicts": self.verdicts, "failure": self.failure, "passed": self.passed}


def _fmt_order(o):
    return NA if o is None else repr(float(o))


def observed_order(errors, params):
    """Successive slopes ``log(e_i/e_{i+1}) / log(p_i/p_{i+1})``; ``None`` marks undefined segments."""
    e = [float(x) for x in errors]
    q = [float(x) for x in params]
    if len(e) != len(q) or len(e) < 2:
        raise ValueError("need two sequences of equal length >= 2")
    out = []
    for i in range(len(e) - 1):
        if e[i] <= 0 or e[i + 1] <= 0 or q[i] <= 0 or q[i + 1] <= 0 or q[i] == q[i + 1] \
                or not all(map(math.isfinite, (e[i], e[i + 1]))):
            out.append(None)
        else:
            out.append(math.log(e[i] / e[i + 1]) / math.log(q[i] / q[i + 1]))
    return out


def _monotone_orders(errors, params):
    """Orders with increasing-error segments replaced by the undefined marker."""
    raw = observed_order(errors, params)
    return [o if o is not None and errors[i + 1] <= errors[i] else None for i, o in enumerate(raw)]


# -- building and solving one level -----------------------------------------

def _constraint(family):
    return "zero-mean" if family.endswith("neumann") else "zero-trace"


def build_model(family, domain, p, n, delta=None, beta=0.0, load=None, degree=1, continuity="CG",
                experimental_sub2=False):
    """Model for one (delta, n) pair; returns ``(model, kernel_or_None, snapped_delta)``."""
    kw = dict(experimental_sub2=experimental_sub2)
    if load is not None:
        kw["load"] = load
    if family.startswith("het"):
        cfg = make_kernel_config(domain, p, beta, delta)
        space = build_space(build_mesh(domain, n), degree, continuity, _constraint(family))
        return EnergyModel(family, space, p, kernel=cfg, **kw), cfg, cfg.delta
    if family == "const-dirichlet":
        inf = build_inflated(domain, delta, n)
        space = build_space(inf, degree, continuity, "zero-volume-layer")
        return EnergyModel(family, space, p, delta=inf.delta, **kw), None, inf.delta
    if family.startswith("local"):
        space = build_space(build_mesh(domain, n), degree, continuity, _constraint(family))
        return EnergyModel(family, space, p, **kw), None, 0.0
    raise ValueError(f"unknown family {family!r}")


def solve_model(model, config=None, warm=None):
    if model.p == 2:
        return solve_linear_p2(model)
    cfg = config or SolverConfig()
    if warm is not None and cfg.initial != "random":
        cfg = SolverConfig(**{**cfg.to_dict(), "initial": "warm"})
    res = minimize(model, cfg, warm)
    if not res.converged:
        raise SolverFailure(res.message or "solver did not converge", res)
    return res


def _local_family(family):
    return "local-neumann" if family.endswith("neumann") else "local-dirichlet"


class _Evaluator:
    """Error measures on a fixed evaluation mesh of the base domain."""

    def __init__(self, spec):
        self.spec = spec
        self.space = build_space(build_mesh(spec.domain, spec.eval_n), 1, "CG", "none")
        self._rows = {}

    def embed(self, u):
        return interpolate(self.space, u, constrain=False).coeffs

    def seminorm(self, c, delta):
        sp = self.spec
        if sp.family.startswith("het"):
            if delta not in self._rows:
                cfg = make_kernel_config(sp.domain, sp.p, sp.beta, delta)
                self._rows[delta] = het_rows(self.space, cfg, _gamma_profile(cfg))
            rows = self._rows[delta]
            return float(np.sum(rows.W * np.abs(rows.R @ c) ** sp.p)) ** (1.0 / sp.p)
        if "grad" not in self._rows:
            self._rows["grad"] = gradient_rows(self.space, 1)
        rows = self._rows["grad"]
        D = (rows.R @ c).reshape(-1, rows.ncomp)
        return float(np.sum(rows.W * np.linalg.norm(D, axis=1) ** sp.p)) ** (1.0 / sp.p)


def run_path(spec):
    """Solve every level of the path and compare against the declared reference."""
    case = get_case(spec.case)
    dom = spec.domain
    load = case.load()
    ev = _Evaluator(spec)
    report = ConvergenceReport(spec)
    exact_c = ev.embed(case.exact) if spec.reference == "analytic" else None
    fine = {}
    local_ref = None
    warm = None
    for lvl, (delta, n) in enumerate(zip(spec.deltas, spec.ns)):
        t0 = time.perf_counter()
        try:
            model, cfg, used = build_model(spec.family, dom, spec.p, n, delta, spec.beta, load)
            res = solve_model(model, spec.solver, warm if spec.warm_start else None)
            if spec.reference == "fine-grid":
                if used not in fine:
                    fm, _, _ = build_model(spec.family, dom, spec.p, spec.fine_n, delta, spec.beta, load)
                    fine[used] = solve_model(fm, spec.solver).u
                ref = fine[used]
            elif spec.reference == "local-discrete":
                if local_ref is None:
                    lm, _, _ = build_model(_local_family(spec.family), dom, spec.p, n, None, 0.0, load)
                    local_ref = solve_model(lm, spec.solver).u
                ref = local_ref
        except SolverFailure as exc:
            report.failure = f"level {lvl}: {exc}"
            break
        uc = ev.embed(res.u)
        if spec.reference == "analytic":
            err_lp = lp_error(res.u, case.exact, spec.p)
            err_en = ev.seminorm(uc - exact_c, used)
        else:
            rc = ev.embed(ref)
            err_lp = lp_norm(DiscreteFunction(ev.space, uc - rc), spec.p)
            err_en = ev.seminorm(uc - rc, used)
        secs = time.perf_counter() - t0
        consts = model.constants()
        consts["delta_snapped"] = used
        report.records.append(LevelRecord(
            lvl, used, delta, (1.0 / used) if used > 0 else math.inf, float(dom.lengths[0]) / n,
            model.space.n_dofs, float(err_lp), float(err_en), float(res.energy),
            float(lp_norm(res.u, spec.p)), int(res.iterations), secs, bool(res.converged), consts))
        if spec.warm_start and spec.p != 2:
            warm = res.u
    _finish_report(report)
    return report


def _finish_report(report):
    spec = report.spec
    recs = report.records
    if len(recs) >= 2:
        params = [r.delta for r in recs] if spec.path == "fixed-h" else [r.h for r in recs]
        report.order_lp = _monotone_orders([r.err_lp for r in recs], params)
        report.order_energy = _monotone_orders([r.err_energy for r in recs], params)
    errs = [r.err_lp for r in recs]
    v = {}
    if spec.require_decreasing:
        ok = len(errs) == len(spec.ns) and _strict(errs, True)
        v["strictly_decreasing"] = {"pass": ok, "values": errs}
    if spec.final_tol is not None:
        ok = len(errs) == len(spec.ns) and errs[-1] <= spec.final_tol
        v["final_error"] = {"pass": ok, "value": errs[-1] if errs else None, "tol": spec.final_tol}
    if spec.min_order is not None:
        # the finest segment carries the asymptotic rate
        orders = report.order_energy
        last = orders[-1] if orders else None
        ok = last is not None and last >= spec.min_order
        v["energy_order"] = {"pass": ok, "value": last, "min": spec.min_order}
    norms = [r.u_norm for r in recs]
    v["bounded_norms"] = {"pass": bool(recs) and all(map(math.isfinite, norms)),
                          "max": max(norms) if norms else None}
    report.verdicts = v


# -- diagram consistency -----------------------------------------------------

def diagram_consistency(family, case, p, delta, n, fine_n, factor=3.0):
    """Diagonal error against the sum of the two one-parameter errors at one (delta, n)."""
    c = get_case(case)
    dom = Domain.interval() if c.d == 1 else Domain.rectangle()
    load = c.load()
    m, _, used = build_model(family, dom, p, n, delta, 0.0, load)
    u = solve_model(m).u
    fm, _, _ = build_model(family, dom, p, fine_n, used, 0.0, load)
    uf = solve_model(fm).u
    lm, _, _ = build_model(_local_family(family), dom, p, n, None, 0.0, load)
    ul = solve_model(lm).u
    ev = build_space(build_mesh(dom, fine_n), 1, "CG", "none")
    cu = interpolate(ev, u, constrain=False).coeffs
    def norm(coeffs):
        return lp_norm(DiscreteFunction(ev, coeffs), p)

    e_diag = lp_error(u, c.exact, p)
    e_sigma = norm(cu - interpolate(ev, uf, constrain=False).coeffs)
    e_h = norm(cu - interpolate(ev, ul, constrain=False).coeffs)
    return {"e_diag": e_diag, "e_fixed_sigma": e_sigma, "e_fixed_h": e_h,
            "pass": e_diag <= factor * (e_sigma + e_h), "factor": factor, "delta": used, "n": n}


# -- Gamma-limit diagnostic --------------------------------------------------

def gamma_pointwise_check(v, deltas, family, p=2.0, n=512, d=1, beta=0.0, ratio=TREND_RATIO):
    """``|E_delta(v) - E_inf(v)|`` over a delta sweep on one fixed mesh.

    Both energies are evaluated on the same interpolant of ``v`` so that
    only the nonlocal effect is measured.  For ``const-dirichlet`` the
    interpolant vanishes on a collar as wide as the largest delta.
    """
    dom = Domain.interval() if d == 1 else Domain.rectangle()
    deltas = [float(x) for x in deltas]
    if family.startswith("het"):
        space = build_space(build_mesh(dom, n), 1, "CG", "none")
        u = interpolate(space, v, constrain=False)
        e_inf = _local_energy(u, p)
        vals = []
        for delta in deltas:
            cfg = make_kernel_config(dom, p, beta, delta)
            rows = het_rows(space, cfg, cfg.rho)
            vals.append(float(np.sum(rows.W * np.abs(rows.R @ u.coeffs) ** p)) / p)
    elif family == "const-dirichlet":
        inf = build_inflated(dom, max(deltas), n)
        space = build_space(inf, 1, "CG", "zero-volume-layer")
        u = interpolate(space, v, constrain=True)
        e_inf = _local_energy(u, p)
        rho = const_profile(d, p)
        vals = []
        for delta in deltas:
            rows = const_rows(space, delta, rho)
            vals.append(float(np.sum(rows.W * np.abs(rows.R @ u.coeffs) ** p)) / p)
    else:
        raise ValueError("gamma_pointwise_check needs a nonlocal family")
    gaps = [abs(e - e_inf) for e in vals]
    scale = max(abs(e_inf), 1.0)
    flat = all(g <= 1e-12 * scale for g in gaps)
    decreasing = _strict(gaps, True)
    ok = flat or (decreasing and gaps[-1] <= ratio * gaps[0])
    return {"deltas": deltas, "energies": vals, "e_inf": e_inf, "gaps": gaps,
            "decreasing": decreasing, "ratio": (gaps[-1] / gaps[0]) if gaps[0] > 0 else 0.0,
            "pass": ok}


def _local_energy(u, p):
    rows = gradient_rows(u.space, 1)
    D = (rows.R @ u.coeffs).reshape(-1, rows.ncomp)
    return float(np.sum(rows.W * np.linalg.norm(D, axis=1) ** p)) / p


# -- inequality suite --------------------------------------------------------

def _random_coeffs(space, samples, seed):
    rng = np.random.default_rng(seed)
    C = rng.standard_normal((space.n_dofs, samples))
    C[space.pinned] = 0.0
    if space.constraint == "zero-mean":
        w = space.mean_weights()
        C -= np.outer(np.ones(space.n_dofs), w @ C / w.sum())
    return C


def _row_power(rows, C, p):
    return np.sum(rows.W[:, None] * np.abs(rows.R @ C) ** p, axis=0)


def _lp_columns(space, C, p):
    elem, X, W = space.quad_points(int(p) + 3)
    from .assembly.load import point_rows
    B = point_rows(space, elem, X)
    return np.sum(W[:, None] * np.abs(B @ C) ** p, axis=0) ** (1.0 / p)


def inequality_suite(p=2.0, beta=0.0, fractions=(0.5, 0.25, 0.125, 0.0625), samples=100, n=16,
                     seed=0, slack=1e-8, stable_spread=10.0):
    """Seminorm inequalities on seeded random CG-P1 functions across a delta sweep."""
    dom = Domain.interval()
    d = dom.d
    lam = smooth_distance(dom)
    d0 = delta0_fn(lam.kappa0, lam.kappa1)
    deltas = [f * d0 for f in fractions]
    mesh = build_mesh(dom, n)
    sp_none = build_space(mesh, 1, "CG", "none")
    sp_mean = build_space(mesh, 1, "CG", "zero-mean")
    sp_trace = build_space(mesh, 1, "CG", "zero-trace")
    C = _random_coeffs(sp_none, samples, seed)
    Cm = _random_coeffs(sp_mean, samples, seed + 1)
    Ct = _random_coeffs(sp_trace, samples, seed + 2)
    grows = gradient_rows(sp_none, 1)
    w1p = _row_power(grows, C, p) ** (1.0 / p)
    semi, semi_m, semi_t, ratio_G = {}, {}, {}, {}
    for delta in deltas:
        cfg = make_kernel_config(dom, p, beta, delta)
        rows = het_rows(sp_none, cfg, _gamma_profile(cfg))
        semi[delta] = _row_power(rows, C, p) ** (1.0 / p)
        semi_m[delta] = _row_power(rows, Cm, p) ** (1.0 / p)
        semi_t[delta] = _row_power(rows, Ct, p) ** (1.0 / p)
        grow = het_rows(sp_none, cfg, cfg.rho)
        ratio_G[delta] = (_row_power(grow, C, p) / p) / semi[delta] ** p
    out = {"p": p, "beta": beta, "deltas": deltas, "samples": samples, "seed": seed}

    # (1) embedding with the explicit constant
    worst = max(float(np.max(semi[dl] / ((1 - dl) ** (-1.0 / p) * w1p))) for dl in deltas)
    viol = sum(int(np.sum(semi[dl] > (1 - dl) ** (-1.0 / p) * w1p * (1 + slack))) for dl in deltas)
    out["embedding"] = {"worst_ratio": worst, "violations": viol, "pass": viol == 0, "explicit": True}

    # (6) delta-stability, both explicit bounds
    viol6, worst_up, worst_lo = 0, 0.0, 0.0
    for i, d2 in enumerate(deltas):
        for d1 in deltas[i + 1:]:
            up = (d2 / d1) ** (1 + (d - beta) / p)
            lo = ((1 - d2) / (2 * (1 + d2))) ** ((d + p - beta) / p)
            r = semi[d1] / semi[d2]
            worst_up = max(worst_up, float(np.max(r / up)))
            worst_lo = max(worst_lo, float(np.max(lo / r)))
            viol6 += int(np.sum(r > up * (1 + slack))) + int(np.sum(r < lo * (1 - slack)))
    out["delta_stability"] = {"worst_upper_ratio": worst_up, "worst_lower_ratio": worst_lo,
                              "violations": viol6, "pass": viol6 == 0, "explicit": True}

    # (5) Poincare, Neumann and Dirichlet; boundedness only
    for key, S, sp_ in (("poincare_neumann", semi_m, sp_mean), ("poincare_dirichlet", semi_t, sp_trace)):
        Cx = Cm if sp_ is sp_mean else Ct
        lpn = _lp_columns(sp_, Cx, p)
        consts = [float(np.max(lpn / S[dl])) for dl in deltas]
        out[key] = _bounded(consts, stable_spread)

    # (7) energy equivalence G / [u]^p
    lo = [float(np.min(ratio_G[dl])) for dl in deltas]
    hi = [float(np.max(ratio_G[dl])) for dl in deltas]
    ok = all(x > 0 and math.isfinite(x) for x in lo + hi) and max(hi) / min(lo) <= stable_spread
    out["energy_equivalence"] = {"lower": lo, "upper": hi, "pass": bool(ok), "explicit": False}

    # constant-horizon Poincare over a sweep of constant horizons
    cdeltas = [CONST_DELTA_FRACTION * f * 2 for f in fractions]
    cn = 4 * n
    consts = []
    inf = build_inflated(dom, max(cdeltas), cn)
    spc = build_space(inf, 1, "CG", "zero-volume-layer")
    Cc = _random_coeffs(spc, samples, seed + 3)
    lpn = _lp_columns(spc, Cc, p)
    rho = const_profile(d, p)
    for dl in cdeltas:
        rows = const_rows(spc, dl, rho)
        consts.append(float(np.max(lpn / _row_power(rows, Cc, p) ** (1.0 / p))))
    out["poincare_const"] = _bounded(consts, stable_spread)
    out["poincare_const"]["deltas"] = cdeltas
    out["pass"] = all(v["pass"] for k, v in out.items() if isinstance(v, dict))
    return out


def _bounded(consts, spread):
    ok = all(math.isfinite(c) and c > 0 for c in consts) and max(consts) / min(consts) <= spread
    return {"constants": consts, "pass": bool(ok), "explicit": False}


# -- persistence -------------------------------------------------------------

def write_report(report, directory, stem="path"):
    import os
    os.makedirs(directory, exist_ok=True)
    csv_path = os.path.join(directory, f"{stem}.csv")
    with open(csv_path, "w") as fh:
        fh.write(report.csv_text())
    man = os.path.join(directory, f"{stem}.json")
    with open(man, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, default=_json_default)
    return csv_path, man


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")
