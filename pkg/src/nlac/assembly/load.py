"""Dual data ``f = (f0, f1, g)`` and its pairing with trial functions."""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from ..femspace import DiscreteFunction, mesh_rule
from ..quadrature import gauss_legendre_unit

LOAD_ORDER = 8


class CompatibilityError(ValueError):
    """Neumann load with ``<f, 1> != 0``; ``residual`` holds the offending value."""

    def __init__(self, residual):
        super().__init__(f"incompatible Neumann load: <f, 1> = {residual:.3e}")
        self.residual = residual


def _call(fun, X, shape_d=None):
    """Evaluate a user callable and broadcast constants to one value per point."""
    out = np.asarray(fun(X), dtype=float)
    if shape_d is None:
        return np.broadcast_to(out.reshape(-1) if out.ndim else out, (len(X),)).copy()
    if out.ndim == 1 and out.size == shape_d:
        return np.broadcast_to(out, (len(X), shape_d)).copy()
    return out.reshape(len(X), shape_d)


@dataclass(frozen=True)
class LoadFunctional:
    """``<f, v> = int f0 v + int f1 . grad v + int_{boundary} g v``.

    Each field is ``None`` or a vectorised callable of points (m, d);
    ``f1`` returns (m, d).
    """

    f0: Optional[Callable] = None
    f1: Optional[Callable] = None
    g: Optional[Callable] = None

    @property
    def is_zero(self):
        return self.f0 is None and self.f1 is None and self.g is None


def boundary_rule(mesh, order=4):
    """Points and weights on the base-domain boundary, with owning elements."""
    d = mesh.d
    if d == 1:
        (a, b), = mesh.domain.bounds
        X = np.array([[a], [b]])
        return mesh.locate(X), X, np.ones(2)
    t, w = gauss_legendre_unit(order)
    F = mesh.boundary_facets
    P, Q = mesh.vertices[F[:, 0]], mesh.vertices[F[:, 1]]
    L = np.linalg.norm(Q - P, axis=1)
    X = (P[:, None, :] + (Q - P)[:, None, :] * t[None, :, None]).reshape(-1, 2)
    W = (L[:, None] * w[None, :]).ravel()
    # nudge inward to find the owning element robustly
    cen = np.asarray(mesh.domain.lo + 0.5 * mesh.domain.lengths)
    E = mesh.locate(X + 1e-12 * (cen - X))
    return E, X, W


def total_mass(f, mesh):
    """``<f, 1> = int f0 + int g``."""
    val = 0.0
    if f.f0 is not None:
        _, X, W = mesh_rule(mesh, LOAD_ORDER)
        val += float(np.sum(W * _call(f.f0, X)))
    if f.g is not None:
        _, X, W = boundary_rule(mesh)
        val += float(np.sum(W * _call(f.g, X)))
    return val


def check_compatible(f, mesh, tol=1e-10):
    res = total_mass(f, mesh)
    scale = 1.0
    if abs(res) > tol * scale:
        raise CompatibilityError(res)
    return res


def point_rows(space, elem, X):
    """Sparse rows evaluating u at points with known elements."""
    B = space.basis(elem, X)
    rows = np.repeat(np.arange(len(X)), space.n_local)
    M = sp.csr_matrix((B.ravel(), (rows, space.elem_dofs[elem].ravel())), shape=(len(X), space.n_dofs))
    M.sum_duplicates()
    return M


def grad_rows(space, elem, X):
    """List of d sparse row matrices for the gradient components."""
    G = space.basis_grad(elem, X)
    rows = np.repeat(np.arange(len(X)), space.n_local)
    out = []
    for k in range(space.d):
        M = sp.csr_matrix((G[:, :, k].ravel(), (rows, space.elem_dofs[elem].ravel())),
                          shape=(len(X), space.n_dofs))
        M.sum_duplicates()
        out.append(M)
    return out


def load_vector(space, f):
    """``b_i = <f, phi_i>`` over all DOFs of a CG space."""
    b = np.zeros(space.n_dofs)
    if f.f0 is not None or f.f1 is not None:
        elem, X, W = space.quad_points(LOAD_ORDER)
        if f.f0 is not None:
            b += point_rows(space, elem, X).T @ (W * _call(f.f0, X))
        if f.f1 is not None:
            F1 = _call(f.f1, X, space.d)
            for k, G in enumerate(grad_rows(space, elem, X)):
                b += G.T @ (W * F1[:, k])
    if f.g is not None:
        b += boundary_vector(space, f.g)
    return b


def boundary_vector(space, g):
    elem, X, W = boundary_rule(space.mesh)
    return point_rows(space, elem, X).T @ (W * _call(g, X))


def load_pairing(f, v, mesh=None, order=LOAD_ORDER):
    """``<f, v>`` for a DiscreteFunction, a SmoothedFunction, or a callable.

    Callables may be passed as ``(value_fn, grad_fn)`` to pair with ``f1``;
    a mesh is then required for the quadrature (defaults to the base mesh
    of the function's space when available).
    """
    from ..convolution import SmoothedFunction

    if isinstance(v, DiscreteFunction):
        return float(load_vector(v.space, f) @ v.coeffs)
    if isinstance(v, SmoothedFunction):
        return v.pair(f)
    if mesh is None:
        raise ValueError("pairing a callable needs a mesh for quadrature")
    if isinstance(v, tuple):
        val, grad = v
    else:
        val, grad = v, None
    _, X, W = mesh_rule(mesh, order)
    total = 0.0
    if f.f0 is not None:
        total += float(np.sum(W * _call(f.f0, X) * _call(val, X)))
    if f.f1 is not None:
        if grad is None:
            raise ValueError("f1 pairing needs the gradient of v")
        total += float(np.sum(W[:, None] * _call(f.f1, X, mesh.d) * _call(grad, X, mesh.d)))
    if f.g is not None:
        _, Xb, Wb = boundary_rule(mesh)
        total += float(np.sum(Wb * _call(f.g, Xb) * _call(val, Xb)))
    return total
