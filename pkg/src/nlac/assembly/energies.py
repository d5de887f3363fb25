"""Energy models for the heterogeneous, constant-horizon and local families."""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ..geometry import INTERIOR, LAYER
from ..kernels import KernelConfig, RadialProfile, default_rho
from .load import LoadFunctional, check_compatible, load_vector
from .pairs import RadialRule, RowSet, gradient_rows, nonlocal_rows_1d, nonlocal_rows_2d

FAMILIES = ("het-neumann", "het-dirichlet", "const-dirichlet", "local-neumann", "local-dirichlet")
_CONSTRAINTS = {
    "het-neumann": ("zero-mean",),
    "het-dirichlet": ("zero-trace",),
    "const-dirichlet": ("zero-volume-layer",),
    "local-neumann": ("zero-mean",),
    "local-dirichlet": ("zero-trace", "zero-volume-layer"),
}
CONST_DELTA_FRACTION = 0.25


class EnergyInfinite(ValueError):
    """The nonlocal energy of the given function is infinite."""


def default_rule(d, p):
    """Even integer p keeps |D|^p polynomial per pair; otherwise sign changes of D need more points."""
    even = float(p).is_integer() and int(p) % 2 == 0
    if d == 1:
        return RadialRule() if even else RadialRule(outer=12, radial=12)
    return RadialRule(outer=3, radial=5, angular=16) if even else RadialRule(outer=4, radial=8, angular=16)


def _eta_max_1d(cfg, mesh):
    v = mesh.vertices[:, 0]
    a, b = v[mesh.elements[:, 0]], v[mesh.elements[:, 1]]
    (lo, hi), = cfg.domain.bounds
    mid = np.clip(0.5 * (lo + hi), a, b)
    return cfg.eta(mid[:, None])


def het_rows(space, cfg, profile, rule=None):
    """Rows for ``int int profile(|y-x|/eta) |y-x|^{-beta} eta^{-(d+p-beta)} |u(y)-u(x)|^p``."""
    if space.continuity == "DG" and cfg.beta >= cfg.d:
        raise EnergyInfinite("DG functions have infinite energy when beta >= d")
    mesh = space.mesh
    alpha = cfg.p - cfg.beta + cfg.d - 1.0
    tw = (mesh.tags == INTERIOR).astype(float)
    if cfg.d == 1:
        return nonlocal_rows_1d(space, lambda x: cfg.eta(x[:, None]), _eta_max_1d(cfg, mesh),
                                profile, alpha, space.base_elements, tw,
                                rule or default_rule(1, cfg.p), log_radial=cfg.beta > 0)
    return nonlocal_rows_2d(space, cfg.eta, profile, alpha, space.base_elements, tw, 0.0,
                            rule or default_rule(2, cfg.p))


def layer_width(space):
    m = space.mesh
    dom = m.domain
    return float(np.min(np.concatenate([dom.lo - m.vertices.min(axis=0), m.vertices.max(axis=0) - dom.hi])))


def const_rows(space, delta, rho, rule=None):
    """Rows for ``int_{O_d} int_{O_d} delta^-d rho(|x-y|/delta) |(u(x)-u(y))/delta|^p``.

    Only x in the base domain is integrated; pairs with y in the layer
    are weighted twice, which is exact because u vanishes on the layer.
    """
    mesh = space.mesh
    if space.constraint != "zero-volume-layer":
        raise ValueError("the constant-horizon seminorm needs a zero-volume-layer space")
    if delta > layer_width(space) * (1 + 1e-12):
        raise ValueError(f"delta={delta} exceeds the layer width {layer_width(space)}")
    d = mesh.d
    alpha = rho.p + d - 1.0
    tw = np.where(mesh.tags == LAYER, 2.0, 1.0)
    if d == 1:
        return nonlocal_rows_1d(space, lambda x: np.full(x.shape, float(delta)),
                                np.full(mesh.n_elements, float(delta)), rho, alpha,
                                space.base_elements, tw, rule or default_rule(1, rho.p))
    return nonlocal_rows_2d(space, lambda X: np.full(len(X), float(delta)), rho, alpha,
                            space.base_elements, tw, 2.0, rule or default_rule(2, rho.p))


def const_profile(d, p, kind="indicator"):
    """Default constant-horizon profile (the beta = 0 normalization)."""
    return default_rho(d, p, 0.0, kind)


def _p_energy(rows, c, p):
    D = rows.values(c)
    mag = np.abs(D[:, 0]) if rows.ncomp == 1 else np.linalg.norm(D, axis=1)
    return float(np.sum(rows.W * mag**p)) / p


def _p_gradient(rows, c, p):
    D = rows.values(c)
    mag = np.abs(D[:, 0]) if rows.ncomp == 1 else np.linalg.norm(D, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(mag > 0, mag ** (p - 2.0), 0.0) if p < 2 else mag ** (p - 2.0)
    return rows.R.T @ ((rows.W * s)[:, None] * D).ravel()


def _p_hessian(rows, c, p, cap=None):
    D = rows.values(c)
    W = rows.W
    if rows.ncomp == 1:
        mag = np.abs(D[:, 0])
        with np.errstate(divide="ignore"):
            s = mag ** (p - 2.0)
        if cap is not None:
            s = np.minimum(s, cap)
        B = sp.diags((p - 1.0) * W * s)
        return (rows.R.T @ B @ rows.R).tocsr()
    mag = np.linalg.norm(D, axis=1)
    n = rows.ncomp
    with np.errstate(divide="ignore", invalid="ignore"):
        s2 = mag ** (p - 2.0)
        s4 = np.where(mag > 0, mag ** (p - 4.0), 0.0)
    if cap is not None:
        s2 = np.minimum(s2, cap)
        s4 = np.minimum(s4, cap / np.maximum(mag, 1e-300) ** 2)
    blocks = (W * s2)[:, None, None] * np.eye(n)[None] + ((p - 2.0) * W * s4)[:, None, None] * np.einsum("qi,qj->qij", D, D)
    Q = len(W)
    r = np.repeat(np.arange(Q * n).reshape(Q, n), n, axis=1).ravel()
    cidx = np.tile(np.arange(Q * n).reshape(Q, n), (1, n)).ravel()
    B = sp.csr_matrix((blocks.reshape(Q, -1).ravel(), (r, cidx)), shape=(Q * n, Q * n))
    return (rows.R.T @ B @ rows.R).tocsr()


@dataclass
class EnergyModel:
    """A family's energy on a discrete space, with cached quadrature rows."""

    family: str
    space: object
    p: float
    load: LoadFunctional = field(default_factory=LoadFunctional)
    kernel: Optional[KernelConfig] = None
    delta: Optional[float] = None
    rho: Optional[RadialProfile] = None
    rule: Optional[RadialRule] = None
    experimental_sub2: bool = False
    weight_cap: float = 1e8
    rows: RowSet = field(init=False, repr=False)
    b: np.ndarray = field(init=False, repr=False)
    load_mass: float = field(init=False, default=0.0)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.space.constraint not in _CONSTRAINTS[self.family]:
            raise ValueError(f"{self.family} needs constraint in {_CONSTRAINTS[self.family]}, "
                             f"got {self.space.constraint!r}")
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if self.p < 2 and not self.experimental_sub2:
            raise ValueError("p in (1, 2) is experimental; set experimental_sub2")
        fam = self.family
        if fam.startswith("het"):
            if self.kernel is None:
                raise ValueError("heterogeneous families need a KernelConfig")
            if self.kernel.p != self.p:
                raise ValueError("kernel p does not match the model p")
            self.rows = het_rows(self.space, self.kernel, self.kernel.rho, self.rule)
        elif fam == "const-dirichlet":
            if self.delta is None:
                raise ValueError("const-dirichlet needs delta")
            diam = self.space.domain.diameter
            if not 0 < self.delta <= CONST_DELTA_FRACTION * diam:
                raise ValueError(f"delta={self.delta} outside (0, {CONST_DELTA_FRACTION} diam]")
            if self.rho is None:
                self.rho = const_profile(self.space.d, self.p)
            if self.rho.p != self.p:
                raise ValueError("rho is normalized for a different p")
            self.rows = const_rows(self.space, self.delta, self.rho, self.rule)
        else:
            if self.space.continuity != "CG":
                raise ValueError("local energies need a CG space")
            self.rows = gradient_rows(self.space, self.space.degree + 1)
        if fam.endswith("neumann"):
            self.load_mass = check_compatible(self.load, self.space.mesh)
        if fam.startswith("het"):
            from ..convolution import smoothed_load_vector
            self.b = smoothed_load_vector(self.space, self.kernel, self.load)
        else:
            self.b = load_vector(self.space, self.load)
        if self.space.pinned.any():
            self.b = np.where(self.space.pinned, 0.0, self.b)

    # -- coefficient-level evaluators (full DOF vectors) ------------------
    def G(self, c):
        return _p_energy(self.rows, c, self.p)

    def E(self, c):
        return self.G(c) - float(self.b @ c)

    def grad(self, c):
        return _p_gradient(self.rows, c, self.p) - self.b

    def hessian(self, c):
        cap = self.weight_cap if self.p < 2 else None
        return _p_hessian(self.rows, c, self.p, cap)

    def stiffness(self):
        if self.p != 2:
            raise ValueError("the stiffness operator exists only for p = 2")
        A = _p_hessian(self.rows, np.zeros(self.space.n_dofs), 2.0)
        return ((A + A.T) * 0.5).tocsr()

    def constants(self):
        out = {"family": self.family, "p": self.p, "n_dofs": self.space.n_dofs,
               "n_free": self.space.n_free, "quad_points": int(self.rows.n_points)}
        if self.kernel is not None:
            out.update(self.kernel.constants())
        if self.delta is not None:
            out["delta"] = self.delta
            out["rho_c"] = self.rho.c
        return out


class DualVector:
    """First variation on the free DOFs; zero on constrained ones."""

    def __init__(self, space, full):
        self.space = space
        self.full = np.where(space.pinned, 0.0, full)

    @property
    def values(self):
        return self.full[self.space.free]

    def __call__(self, v):
        return float(self.full @ v.coeffs)

    def norm(self):
        return float(np.linalg.norm(self.values))


def _gamma_profile(cfg):
    return RadialProfile("indicator", cfg.c_gamma, 1.0, 1.0, cfg.c_gamma)


def seminorm_heterogeneous(u, cfg, rule=None):
    """``[u]^p`` for the heterogeneous seminorm kernel."""
    rows = het_rows(u.space, cfg, _gamma_profile(cfg), rule)
    return float(np.sum(rows.W * np.abs(rows.values(u.coeffs)[:, 0]) ** cfg.p))


def energy_G_heterogeneous(u, cfg, rule=None):
    rows = het_rows(u.space, cfg, cfg.rho, rule)
    return _p_energy(rows, u.coeffs, cfg.p)


def seminorm_const_horizon(u, delta, rho=None, p=2.0, rule=None):
    """``[u]^p_S`` over the inflated domain; the exponent is ``rho.p``."""
    if rho is None:
        rho = const_profile(u.space.d, p)
    p = rho.p
    rows = const_rows(u.space, delta, rho, rule)
    return float(np.sum(rows.W * np.abs(rows.values(u.coeffs)[:, 0]) ** p))


def energy_local(u, p):
    if u.space.continuity != "CG":
        raise ValueError("the local energy needs a CG function")
    rows = gradient_rows(u.space, u.space.degree + 1)
    return _p_energy(rows, u.coeffs, p)


def energy_total(u, model):
    return model.E(u.coeffs)


def first_variation(u, model):
    return DualVector(model.space, model.grad(u.coeffs))


def assemble_stiffness_p2(model):
    return model.stiffness()


def coo_text(A):
    """Coordinate-format dump, one ``row col value`` triple per line."""
    C = sp.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    return "".join(f"{int(C.row[k])} {int(C.col[k])} {float(C.data[k])!r}\n" for k in order)
