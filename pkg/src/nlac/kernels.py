"""Kernel ingredients: rate function, radial profiles, mollifiers and constants."""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from .geometry import Domain, DistanceField, smooth_distance

SUPPORT = 0.9


def eval_q(r):
    """Rate function ``q(r) = r (1/(1+exp(-r^2)) - 1/2)``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("q is defined for r >= 0 only")
    # 1/(1+e^{-s}) - 1/2 = tanh(s/2)/2, stable for small s
    out = 0.5 * r * np.tanh(0.5 * r * r)
    return out if out.ndim else float(out)


def eval_dq(r):
    """Derivative of the rate function."""
    r = np.asarray(r, dtype=float)
    t = np.tanh(0.5 * r * r)
    return 0.5 * t + 0.5 * r * r * (1.0 - t * t)


def sphere_measure(d):
    """Surface measure of the unit sphere in R^d (2 for d=1, 2*pi for d=2)."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def cbar(d, p):
    """Normalization constant sqrt(pi) Gamma((d+p)/2) / (Gamma((p+1)/2) Gamma(d/2))."""
    if d not in (1, 2):
        raise ValueError("d must be 1 or 2")
    if not p > 1:
        raise ValueError("p must exceed 1")
    return float(math.sqrt(math.pi) * gamma_fn((d + p) / 2.0)
                 / (gamma_fn((p + 1) / 2.0) * gamma_fn(d / 2.0)))


def kernel_constant(d, beta, p):
    """Constant making the unit-ball moment of the seminorm kernel equal ``cbar``."""
    if beta >= d + p:
        raise ValueError(f"beta={beta} >= d+p={d + p}: normalization integral diverges")
    return cbar(d, p) * (d + p - beta) / sphere_measure(d)


def delta0(kappa0, kappa1):
    """Largest admissible bulk horizon ``1 / (3 max(1, kappa1, 8 kappa0^3))``."""
    if kappa0 < 1 or not kappa1 > 0:
        raise ValueError("need kappa0 >= 1 and kappa1 > 0")
    return 1.0 / (3.0 * max(1.0, kappa1, 8.0 * kappa0**3))


def radial_moment(fun, d, power, r_max=1.0, breaks=()):
    """``int_{B(0, r_max)} |z|^power fun(|z|) dz`` by adaptive quadrature."""
    pts = [b for b in breaks if 0 < b < r_max]
    val, _ = integrate.quad(lambda r: fun(r) * r ** (power + d - 1), 0.0, r_max,
                            points=pts or None, epsabs=1e-14, epsrel=1e-13, limit=200)
    return sphere_measure(d) * val


@dataclass(frozen=True)
class RadialProfile:
    """Radial weight ``rho`` for the energies.

    ``kind="indicator"``: ``c * 1{|r| <= support}``.
    ``kind="smooth"``: ``c * (1 - (r/support)^2)^2`` on the support.
    """

    kind: str
    c: float
    support: float = SUPPORT
    c_rho: float = SUPPORT
    C_rho: float = 0.0
    p: float = 2.0
    beta: float = 0.0

    def __call__(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        inside = r <= self.support
        if self.kind == "indicator":
            return np.where(inside, self.c, 0.0)
        t = np.minimum(r / self.support, 1.0)
        return np.where(inside, self.c * (1.0 - t * t) ** 2, 0.0)

    @property
    def breaks(self):
        return (self.support,)

    @property
    def is_constant(self):
        return self.kind == "indicator"


def default_rho(d, p, beta, kind="indicator"):
    """Profile normalized so that ``(1/cbar) int_B |z|^{p-beta} rho(|z|) dz = 1``."""
    if beta >= d + p:
        raise ValueError("beta must be below d+p")
    s = d + p - beta
    if kind == "indicator":
        c = cbar(d, p) * s / (sphere_measure(d) * SUPPORT**s)
        return RadialProfile("indicator", c, SUPPORT, SUPPORT, c, float(p), float(beta))
    if kind == "smooth":
        unit = RadialProfile("smooth", 1.0)
        m = radial_moment(lambda r: unit(r), d, p - beta, SUPPORT)
        c = cbar(d, p) / m
        half = 0.5
        return RadialProfile("smooth", c, SUPPORT, half * SUPPORT, c * (1 - half**2) ** 2,
                             float(p), float(beta))
    raise ValueError(f"unknown rho kind {kind!r}")


@dataclass(frozen=True)
class MollifierProfile:
    """Polynomial bump ``psi(r) = c (1 - (r/support)^2)^3``, C^2 at the edge."""

    d: int
    c: float
    support: float = SUPPORT
    c_psi: float = 0.45
    k: int = 2

    def __call__(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        t = np.minimum(r / self.support, 1.0)
        return np.where(r <= self.support, self.c * (1.0 - t * t) ** 3, 0.0)

    def derivative(self, r):
        """``psi'(r)`` for ``r >= 0``."""
        r = np.asarray(r, dtype=float)
        t = np.minimum(np.abs(r) / self.support, 1.0)
        val = -6.0 * self.c * t * (1.0 - t * t) ** 2 / self.support
        return np.where(np.abs(r) <= self.support, np.sign(r) * val, 0.0)


def default_psi(d):
    if d == 1:
        # int_{-1}^{1} (1-t^2)^3 dt = 32/35
        c = 35.0 / (32.0 * SUPPORT)
    elif d == 2:
        # 2 pi s^2 int_0^1 t (1-t^2)^3 dt = pi s^2 / 4
        c = 4.0 / (math.pi * SUPPORT**2)
    else:
        raise ValueError("d must be 1 or 2")
    psi = MollifierProfile(d, c)
    mass = radial_moment(lambda r: psi(r), d, 0.0, SUPPORT)
    return MollifierProfile(d, c / mass)


@dataclass(frozen=True)
class KernelConfig:
    """Everything that defines the heterogeneous-localization kernels."""

    domain: Domain
    p: float
    beta: float
    delta: float
    lam: DistanceField
    rho: RadialProfile
    psi: MollifierProfile
    cbar: float = field(init=False)
    c_gamma: float = field(init=False)
    delta0: float = field(init=False)

    def __post_init__(self):
        d = self.domain.d
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if not 0 <= self.beta < d + self.p:
            raise ValueError(f"beta must lie in [0, d+p) = [0, {d + self.p})")
        object.__setattr__(self, "cbar", cbar(d, self.p))
        object.__setattr__(self, "c_gamma", kernel_constant(d, self.beta, self.p))
        d0 = delta0(self.lam.kappa0, self.lam.kappa1)
        object.__setattr__(self, "delta0", d0)
        if not 0 < self.delta < d0:
            raise ValueError(f"A_delta violated: delta={self.delta!r} must lie in (0, delta0={d0!r})")

    @property
    def d(self):
        return self.domain.d

    @property
    def kappa0(self):
        return self.lam.kappa0

    @property
    def kappa1(self):
        return self.lam.kappa1

    @property
    def sigma(self):
        return 1.0 / self.delta

    def eta(self, X):
        """Horizon ``delta * q(lam(x))`` at points ``X`` (m, d); no domain check."""
        return self.delta * eval_q(np.maximum(self.lam(X), 0.0))

    def grad_eta(self, X):
        lam = np.maximum(self.lam(X), 0.0)
        return self.delta * eval_dq(lam)[:, None] * self.lam.gradient(X)

    def constants(self):
        return {"d": self.d, "p": self.p, "beta": self.beta, "delta": self.delta,
                "sigma": self.sigma, "delta0": self.delta0, "kappa0": self.kappa0,
                "kappa1": self.kappa1, "cbar": self.cbar, "c_gamma": self.c_gamma,
                "rho_kind": self.rho.kind, "rho_c": self.rho.c, "psi_c": self.psi.c}


def make_kernel_config(domain, p, beta=0.0, delta=None, delta_fraction=0.5,
                       rho_kind="indicator"):
    """Build a config with the default profiles; ``delta`` defaults to a fraction of delta0."""
    lam = smooth_distance(domain)
    if delta is None:
        delta = delta_fraction * delta0(lam.kappa0, lam.kappa1)
    return KernelConfig(domain, float(p), float(beta), float(delta), lam,
                        default_rho(domain.d, p, beta, rho_kind), default_psi(domain.d))


def _points(x, d):
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, d) if x.ndim < 2 else x


def horizon(x, cfg):
    """``eta_delta(x)``; scalar input gives a scalar."""
    X = _points(x, cfg.d)
    if not np.all(cfg.domain.contains(X, closed=True, tol=1e-14)):
        raise ValueError("horizon is only defined on the closed domain")
    out = cfg.eta(X)
    return float(out[0]) if np.ndim(x) <= (0 if cfg.d == 1 else 1) else out


def eval_gamma(x, y, cfg):
    """Seminorm kernel ``1{|y-x| < eta} C / (|x-y|^beta eta^(d+p-beta))``."""
    X, Y = np.broadcast_arrays(_points(x, cfg.d), _points(y, cfg.d))
    r = np.linalg.norm(Y - X, axis=1)
    eta = cfg.eta(X)
    if cfg.beta > 0 and np.any(r == 0):
        raise ZeroDivisionError("singular kernel evaluated at x = y")
    inside = r < eta
    s = cfg.d + cfg.p - cfg.beta
    with np.errstate(divide="ignore", invalid="ignore"):
        val = cfg.c_gamma / (np.where(inside, r, 1.0) ** cfg.beta * np.where(inside, eta, 1.0) ** s)
    out = np.where(inside, val, 0.0)
    return float(out[0]) if out.size == 1 else out
