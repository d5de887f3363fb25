"""Linear (p=2) and damped-Newton solvers for the discrete energies."""
from dataclasses import dataclass, field, asdict
import time

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .femspace import DiscreteFunction, interpolate


class SolverFailure(RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class SolverConfig:
    gtol: float = 1e-10
    max_iter: int = 100
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    eps_h: float = 1e-10
    initial: str = "zero"   # zero | random | warm
    seed: int = 0

    def __post_init__(self):
        if not (self.gtol > 0 and self.eps_h > 0 and self.max_iter > 0 and self.max_backtracks > 0):
            raise ValueError("solver tolerances and counts must be positive")
        if not 0 < self.armijo < 0.5:
            raise ValueError("Armijo constant must lie in (0, 0.5)")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtracking factor must lie in (0, 1)")
        if self.initial not in ("zero", "random", "warm"):
            raise ValueError(f"unknown initial guess policy {self.initial!r}")

    def to_dict(self):
        return asdict(self)


@dataclass
class SolveResult:
    u: DiscreteFunction
    energy: float
    grad_norm: float
    iterations: int
    converged: bool
    seconds: float
    log: list = field(default_factory=list)
    message: str = ""


def _mean_vector(model):
    sp_ = model.space
    if sp_.constraint != "zero-mean":
        return None
    return sp_.mean_weights()[sp_.free]


def _project(g, m):
    if m is None:
        return g
    return g - m * (m @ g) / (m @ m)


def _constrain(model, c):
    sp_ = model.space
    c = np.where(sp_.pinned, 0.0, np.asarray(c, dtype=float))
    if sp_.constraint == "zero-mean":
        w = sp_.mean_weights()
        c = c - (w @ c) / w.sum()
    return c


def _load_scale(model, m):
    bf = _project(model.b[model.space.free], m)
    nb = float(np.linalg.norm(bf))
    return nb if nb > 0 else 1.0


def residual_norm(u, model):
    """Free-DOF Euclidean norm of the first variation over the load norm."""
    m = _mean_vector(model)
    g = _project(model.grad(u.coeffs)[model.space.free], m)
    return float(np.linalg.norm(g)) / _load_scale(model, m)


def _bordered_solve(A, rhs, m):
    """Solve ``A x = rhs`` on the free block, with ``m . x = 0`` when m is given."""
    A = sp.csc_matrix(A)
    if m is None:
        return splu(A).solve(rhs)
    n = A.shape[0]
    K = sp.bmat([[A, sp.csc_matrix(m.reshape(-1, 1))], [sp.csc_matrix(m.reshape(1, -1)), None]],
                format="csc")
    sol = splu(K).solve(np.concatenate([rhs, [0.0]]))
    return sol[:n]


def solve_linear_p2(model, tol=1e-10):
    """Direct solve of the p=2 Euler-Lagrange system on the free DOFs."""
    if model.p != 2:
        raise ValueError("solve_linear_p2 needs p = 2")
    t0 = time.perf_counter()
    sp_ = model.space
    free = sp_.free
    A = model.stiffness()[free][:, free]
    b = model.b[free]
    m = _mean_vector(model)
    rhs = _project(b, m) if m is not None else b
    try:
        x = _bordered_solve(A, rhs, m)
    except RuntimeError as exc:
        raise SolverFailure(f"singular system: {exc}") from exc
    c = np.zeros(sp_.n_dofs)
    c[free] = x
    u = DiscreteFunction(sp_, c)
    res = _project(A @ x - b, m)
    nb = float(np.linalg.norm(_project(b, m)))
    rel = float(np.linalg.norm(res)) / (nb if nb > 0 else 1.0)
    out = SolveResult(u, model.E(c), rel, 1, rel <= tol, time.perf_counter() - t0,
                      [{"iter": 1, "energy": model.E(c), "grad_norm": rel, "step": 1.0}])
    if not np.isfinite(rel) or rel > tol:
        out.message = f"linear residual {rel:.3e} above {tol:.1e}"
        raise SolverFailure(out.message, out)
    return out


def _initial(model, cfg, warm):
    sp_ = model.space
    if cfg.initial == "warm" and warm is not None:
        if isinstance(warm, DiscreteFunction):
            c = warm.coeffs if warm.space is sp_ else interpolate(sp_, warm, constrain=False).coeffs
        else:
            c = np.asarray(warm, dtype=float)
    elif cfg.initial == "random":
        c = np.random.default_rng(cfg.seed).standard_normal(sp_.n_dofs)
    else:
        c = np.zeros(sp_.n_dofs)
    return _constrain(model, c)


def minimize(model, config=None, warm=None):
    """Damped Newton with Armijo backtracking on the free DOFs."""
    cfg = config or SolverConfig()
    t0 = time.perf_counter()
    sp_ = model.space
    free = sp_.free
    m = _mean_vector(model)
    scale = _load_scale(model, m)
    c = _initial(model, cfg, warm)
    # p=2 operator: metric for degenerate Hessians and scale of the regularization
    A2 = _metric(model)
    reg = cfg.eps_h * max(float(A2.diagonal().mean()), 1e-300)
    E = model.E(c)
    log = []
    if not np.isfinite(E):
        raise SolverFailure("non-finite energy at the initial guess")
    g = _project(model.grad(c)[free], m)
    gn = float(np.linalg.norm(g)) / scale
    it = 0
    while True:
        log.append({"iter": it, "energy": E, "grad_norm": gn, "step": log[-1]["step"] if log else 0.0})
        if gn <= cfg.gtol:
            return SolveResult(DiscreteFunction(sp_, c), E, gn, it, True, time.perf_counter() - t0, log)
        if it >= cfg.max_iter:
            res = SolveResult(DiscreteFunction(sp_, c), E, gn, it, False, time.perf_counter() - t0, log,
                              "maximum iterations reached")
            return res
        it += 1
        H = model.hessian(c)[free][:, free]
        if model.p > 2:
            H = H + reg * sp.identity(H.shape[0], format="csr")
        s = None
        if H.diagonal().max() > 1e-8 * A2.diagonal().max():
            try:
                s = _bordered_solve(H, -g, m)
            except RuntimeError:
                s = None
        if s is None or not np.all(np.isfinite(s)) or g @ s >= 0:
            s = _bordered_solve(A2, -g, m)
        slope = float(g @ s)
        t = 1.0
        accepted = False
        for _ in range(cfg.max_backtracks):
            cn = c.copy()
            cn[free] = c[free] + t * s
            En = model.E(cn)
            if np.isfinite(En) and En <= E + cfg.armijo * t * slope:
                accepted = True
                break
            if np.isfinite(En) and En - E <= 1e-14 * max(abs(E), 1.0):
                gnew = _project(model.grad(cn)[free], m)
                if np.linalg.norm(gnew) < np.linalg.norm(g):
                    accepted = True
                    break
            t *= cfg.backtrack
        if not accepted:
            res = SolveResult(DiscreteFunction(sp_, c), E, gn, it, False, time.perf_counter() - t0, log,
                              "line search exhausted its backtracks")
            raise SolverFailure(res.message, res)
        if not np.isfinite(En):
            raise SolverFailure("non-finite energy encountered")
        c, E = cn, En
        g = _project(model.grad(c)[free], m)
        gn = float(np.linalg.norm(g)) / scale
        log[-1]["step"] = t


def _metric(model):
    rows = model.rows
    if rows.ncomp == 1:
        A = rows.R.T @ sp.diags(rows.W) @ rows.R
    else:
        Wr = np.repeat(rows.W, rows.ncomp)
        A = rows.R.T @ sp.diags(Wr) @ rows.R
    free = model.space.free
    return sp.csr_matrix(A)[free][:, free]


def iteration_log_text(result):
    lines = ["# iter energy grad_norm step"]
    for r in result.log:
        lines.append(f"{r['iter']} {r['energy']!r} {r['grad_norm']!r} {r['step']!r}")
    return "\n".join(lines) + "\n"
