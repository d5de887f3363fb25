"""Lagrange P1/P2 spaces (CG or DG) with zero-mean, zero-trace or layer constraints."""
from dataclasses import dataclass, field
import math

import numpy as np

from .geometry import INTERIOR, InflatedDomain, Mesh
from .quadrature import adaptive_element_integral, gauss_legendre_unit, triangle_rule

CONSTRAINTS = ("none", "zero-mean", "zero-trace", "zero-volume-layer")


def _local_edges(d):
    return [(0, 1)] if d == 1 else [(0, 1), (1, 2), (0, 2)]


def element_rule(d, order):
    """Reference-element rule as (reference points (m, d), weights summing to |ref|)."""
    if d == 1:
        x, w = gauss_legendre_unit(order)
        return x[:, None], w
    return triangle_rule(order)


def mesh_rule(mesh, order, elements=None):
    """(elem, X, W) quadrature over mesh elements (default: base-domain elements)."""
    if elements is None:
        elements = np.flatnonzero(mesh.tags == INTERIOR)
    ref, w = element_rule(mesh.d, order)
    elem = np.repeat(elements, len(w))
    X = mesh.to_physical(elem, np.tile(ref, (len(elements), 1)))
    W = (mesh.element_measures()[elements][:, None] * w[None, :] * math.factorial(mesh.d)).ravel()
    return elem, X, W


@dataclass(frozen=True, eq=False)
class FeSpace:
    mesh: Mesh
    degree: int
    continuity: str
    constraint: str
    elem_dofs: np.ndarray = field(repr=False)
    dof_coords: np.ndarray = field(repr=False)
    pinned: np.ndarray = field(repr=False)
    base_elements: np.ndarray = field(repr=False)

    @property
    def d(self):
        return self.mesh.d

    @property
    def n_dofs(self):
        return len(self.dof_coords)

    @property
    def free(self):
        return np.flatnonzero(~self.pinned)

    @property
    def n_free(self):
        return int((~self.pinned).sum())

    @property
    def n_local(self):
        return self.elem_dofs.shape[1]

    @property
    def domain(self):
        return self.mesh.domain

    def zeros(self):
        return DiscreteFunction(self, np.zeros(self.n_dofs))

    def from_free(self, x):
        c = np.zeros(self.n_dofs)
        c[self.free] = x
        return DiscreteFunction(self, c)

    # -- basis evaluation on known elements -------------------------------
    def basis(self, elem, X):
        """Local basis values, shape (m, n_local)."""
        lam = self.mesh.barycentric(elem, X)
        if self.degree == 1:
            return lam
        cols = [lam[:, i] * (2.0 * lam[:, i] - 1.0) for i in range(self.d + 1)]
        cols += [4.0 * lam[:, i] * lam[:, j] for i, j in _local_edges(self.d)]
        return np.column_stack(cols)

    def basis_grad(self, elem, X):
        """Local basis gradients, shape (m, n_local, d)."""
        G = self.mesh.barycentric_gradients(elem)
        if self.degree == 1:
            return np.array(G, copy=True)
        lam = self.mesh.barycentric(elem, X)
        out = [(4.0 * lam[:, i] - 1.0)[:, None] * G[:, i] for i in range(self.d + 1)]
        out += [4.0 * (lam[:, i, None] * G[:, j] + lam[:, j, None] * G[:, i])
                for i, j in _local_edges(self.d)]
        return np.stack(out, axis=1)

    def basis_hess(self, elem):
        """Local basis Hessians (constant per element), shape (m, n_local, d, d)."""
        m, d = len(elem), self.d
        if self.degree == 1:
            return np.zeros((m, self.n_local, d, d))
        G = self.mesh.barycentric_gradients(elem)
        out = [4.0 * np.einsum("mi,mj->mij", G[:, i], G[:, i]) for i in range(d + 1)]
        out += [4.0 * (np.einsum("mi,mj->mij", G[:, i], G[:, j])
                       + np.einsum("mi,mj->mij", G[:, j], G[:, i]))
                for i, j in _local_edges(d)]
        return np.stack(out, axis=1)

    def quad_points(self, order, elements=None):
        """Physical quadrature points over ``elements`` (default: base-domain elements).

        Returns (elem (M,), X (M, d), W (M,)) with elements varying slowest.
        """
        elements = self.base_elements if elements is None else np.asarray(elements)
        return mesh_rule(self.mesh, order, elements)

    def mean_weights(self):
        """``m_i = int_Omega phi_i``; the mean constraint is ``m . c = 0``."""
        elem, X, W = self.quad_points(self.degree + 1)
        B = self.basis(elem, X) * W[:, None]
        m = np.zeros(self.n_dofs)
        np.add.at(m, self.elem_dofs[elem].ravel(), B.ravel())
        return m


def build_space(mesh_or_inflated, degree=1, continuity="CG", constraint="none"):
    """Lagrange space with deterministic DOF numbering.

    CG: vertices first (mesh order), then edge midpoints in sorted-edge
    order (P2). DG: element-major local numbering.
    """
    if isinstance(mesh_or_inflated, InflatedDomain):
        mesh = mesh_or_inflated.mesh
    else:
        mesh = mesh_or_inflated
    if degree not in (1, 2):
        raise ValueError("degree must be 1 or 2")
    if continuity not in ("CG", "DG"):
        raise ValueError("continuity must be CG or DG")
    if constraint not in CONSTRAINTS:
        raise ValueError(f"unknown constraint {constraint!r}")
    if continuity == "DG" and constraint in ("zero-trace", "zero-mean"):
        raise ValueError(f"{constraint} requires a CG space")
    if constraint == "zero-volume-layer" and not np.any(mesh.tags != INTERIOR):
        raise ValueError("zero-volume-layer needs an inflated mesh")
    d = mesh.d
    E = mesh.elements
    V = mesh.vertices
    if continuity == "CG":
        if degree == 1:
            elem_dofs = E.copy()
            coords = V.copy()
        else:
            edges_loc = _local_edges(d)
            all_edges = np.sort(np.concatenate([E[:, [i, j]] for i, j in edges_loc]), axis=1)
            uniq, inv = np.unique(all_edges, axis=0, return_inverse=True)
            inv = inv.reshape(len(edges_loc), len(E)).T
            elem_dofs = np.hstack([E, mesh.n_vertices + inv])
            coords = np.vstack([V, 0.5 * (V[uniq[:, 0]] + V[uniq[:, 1]])])
    else:
        nloc = (d + 1) if degree == 1 else (d + 1) * (d + 2) // 2
        elem_dofs = np.arange(len(E) * nloc).reshape(len(E), nloc)
        T = V[E]
        pts = [T[:, i] for i in range(d + 1)]
        if degree == 2:
            pts += [0.5 * (T[:, i] + T[:, j]) for i, j in _local_edges(d)]
        coords = np.stack(pts, axis=1).reshape(-1, d)
    pinned = np.zeros(len(coords), dtype=bool)
    if constraint == "zero-trace":
        pinned = mesh.domain.dist_to_boundary(coords) <= 1e-12 * mesh.domain.diameter
    elif constraint == "zero-volume-layer":
        pinned[np.unique(elem_dofs[mesh.tags != INTERIOR])] = True
    base = np.flatnonzero(mesh.tags == INTERIOR)
    arrays = [np.asarray(a) for a in (elem_dofs, coords, pinned, base)]
    for a in arrays:
        a.setflags(write=False)
    return FeSpace(mesh, degree, continuity, constraint, *arrays)


class DiscreteFunction:
    """Coefficient vector over all DOFs of a space (pinned entries included)."""

    def __init__(self, space, coeffs, adjustment=0.0):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (space.n_dofs,):
            raise ValueError(f"expected {space.n_dofs} coefficients, got {coeffs.shape}")
        self.space = space
        self.coeffs = coeffs
        self.adjustment = adjustment

    def copy(self):
        return DiscreteFunction(self.space, self.coeffs.copy(), self.adjustment)

    @property
    def free_values(self):
        return self.coeffs[self.space.free]

    def __add__(self, other):
        return DiscreteFunction(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return DiscreteFunction(self.space, self.coeffs - other.coeffs)

    def __mul__(self, t):
        return DiscreteFunction(self.space, self.coeffs * float(t))

    __rmul__ = __mul__

    def values_on(self, elem, X):
        return np.einsum("mk,mk->m", self.space.basis(elem, X), self.coeffs[self.space.elem_dofs[elem]])

    def grads_on(self, elem, X):
        return np.einsum("mkd,mk->md", self.space.basis_grad(elem, X),
                         self.coeffs[self.space.elem_dofs[elem]])

    def __call__(self, X):
        """Point evaluation; points outside the mesh evaluate to 0."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.space.d:
            X = X.reshape(-1, self.space.d)
        elem = self.space.mesh.locate(X)
        out = np.zeros(len(X))
        ok = elem >= 0
        out[ok] = self.values_on(elem[ok], X[ok])
        return out

    def to_text(self):
        return "".join(f"{v!r}\n" for v in self.coeffs.tolist())

    @classmethod
    def from_text(cls, space, text):
        return cls(space, np.array([float(s) for s in text.split()]))


def _apply_constraint(space, c):
    adj = 0.0
    if space.constraint == "zero-mean":
        m = space.mean_weights()
        adj = float(m @ c / m.sum())
        c = c - adj
    elif space.pinned.any():
        adj = float(np.max(np.abs(c[space.pinned]))) if space.pinned.any() else 0.0
        c = c.copy()
        c[space.pinned] = 0.0
    return c, adj


def interpolate(space, fun, constrain=True):
    """Nodal interpolation (CG) or element-wise L2 projection (DG)."""
    if space.continuity == "CG":
        c = np.asarray(fun(space.dof_coords), dtype=float).reshape(-1)
    else:
        order = space.degree + 3
        elem, X, W = space.quad_points(order, np.arange(space.mesh.n_elements))
        B = space.basis(elem, X)
        fx = np.asarray(fun(X), dtype=float).reshape(-1)
        nq = len(W) // space.mesh.n_elements
        nl = space.n_local
        Bw = (B * W[:, None]).reshape(-1, nq, nl)
        Bq = B.reshape(-1, nq, nl)
        M = np.einsum("eqi,eqj->eij", Bw, Bq)
        rhs = np.einsum("eqi,eq->ei", Bw, fx.reshape(-1, nq))
        c = np.linalg.solve(M, rhs[..., None])[..., 0].ravel()
    if not np.all(np.isfinite(c)):
        raise ValueError("function is not finite at the interpolation points")
    adj = 0.0
    if constrain:
        c, adj = _apply_constraint(space, c)
    return DiscreteFunction(space, c, adj)


def mean_value(u):
    m = u.space.mean_weights()
    return float(m @ u.coeffs) / u.space.domain.measure


def _power_integral(space, fun_elem_values, p, poly_degree):
    """int over base elements of |g|^p where g has the given polynomial degree."""
    if float(p).is_integer() and int(p) % 2 == 0:
        order = int(poly_degree * p) // 2 + 2
        elem, X, W = space.quad_points(order)
        return float(np.sum(W * np.abs(fun_elem_values(elem, X)) ** p))
    if space.d == 1:
        elems = space.base_elements
        v = space.mesh.vertices[:, 0]
        a = v[space.mesh.elements[elems, 0]]
        b = v[space.mesh.elements[elems, 1]]
        total = 0.0
        for k, e in enumerate(elems):
            def f(x, e=e):
                xs = x.reshape(-1, 1)
                return (np.abs(fun_elem_values(np.full(len(xs), e), xs)) ** p).reshape(x.shape)
            total += float(adaptive_element_integral(f, np.array([a[k]]), np.array([b[k]]))[0])
        return total
    # no cheap adaptive rule on triangles; a high fixed order is used instead
    elem, X, W = space.quad_points(12)
    return float(np.sum(W * np.abs(fun_elem_values(elem, X)) ** p))


def lp_norm(u, p):
    sp = u.space
    return _power_integral(sp, u.values_on, p, sp.degree) ** (1.0 / p)


def w1p_seminorm(u, p):
    sp = u.space
    if sp.continuity != "CG":
        raise ValueError("the W^{1,p} seminorm needs a CG function")

    def gnorm(elem, X):
        return np.linalg.norm(u.grads_on(elem, X), axis=1)

    return _power_integral(sp, gnorm, p, sp.degree - 1) ** (1.0 / p)


def lp_error(u, exact, p, order=10):
    """``||u - exact||_{L^p(Omega)}`` with a fixed high-order rule."""
    elem, X, W = u.space.quad_points(order)
    diff = u.values_on(elem, X) - np.asarray(exact(X), dtype=float).reshape(-1)
    return float(np.sum(W * np.abs(diff) ** p)) ** (1.0 / p)


def hat_space(space):
    """The CG-P1 space on the same mesh with the same constraint."""
    cons = space.constraint if space.continuity == "CG" else "none"
    return build_space(space.mesh, 1, "CG", cons)


def embed_hat(hat_fn, space):
    """Exact representation of a CG-P1 function in ``space`` (P1 is contained in P1/P2, CG/DG)."""
    mesh = space.mesh
    # evaluate the P1 function at the target DOF locations through each owning element
    nl = space.n_local
    elem = np.repeat(np.arange(mesh.n_elements), nl)
    X = space.dof_coords[space.elem_dofs.ravel()]
    vals = hat_fn.values_on(elem, X)
    c = np.zeros(space.n_dofs)
    c[space.elem_dofs.ravel()] = vals
    return DiscreteFunction(space, c)
