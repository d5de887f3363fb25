"""Quadrature rules on intervals, triangles and radial segments.

All rules are returned as ``(nodes, weights)`` pairs mapped to the
requested domain. Rules are cached by their defining parameters since
the assembly routines request the same handful of rules many times.
"""
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=None)
def _legendre(m):
    x, w = roots_legendre(m)
    return x, w


@lru_cache(maxsize=None)
def _jacobi_unit(m, alpha):
    # nodes/weights on [0, 1] for the weight t**alpha
    x, w = roots_jacobi(m, 0.0, alpha)
    t = 0.5 * (x + 1.0)
    return t, w / 2.0 ** (alpha + 1.0)


def gauss_legendre(m, a=0.0, b=1.0):
    """Gauss-Legendre rule with ``m`` points on ``[a, b]``."""
    x, w = _legendre(int(m))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def gauss_legendre_unit(m):
    """Gauss-Legendre rule on ``[0, 1]``."""
    x, w = _legendre(int(m))
    return 0.5 * (x + 1.0), 0.5 * w


def gauss_jacobi_unit(m, alpha):
    """Rule on ``[0, 1]`` exact for ``t**alpha * P(t)``, ``deg P <= 2m-1``.

    The weight ``t**alpha`` is built into the returned weights.
    """
    if alpha <= -1.0:
        raise ValueError("Jacobi exponent must exceed -1")
    return _jacobi_unit(int(m), float(alpha))


def graded_unit(m, levels, ratio=0.2):
    """Composite Gauss rule on ``[0, 1]`` graded geometrically toward 1.

    With ``levels = 0`` this is the plain Gauss-Legendre rule.
    """
    if levels <= 0:
        return gauss_legendre_unit(m)
    edges = [0.0] + [1.0 - ratio**k for k in range(1, levels + 1)] + [1.0]
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        x, w = gauss_legendre(m, lo, hi)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


@lru_cache(maxsize=None)
def triangle_rule(order):
    """Collapsed (Duffy) Gauss rule on the reference triangle.

    Exact for polynomials of total degree ``2*order - 1``. Returns
    reference coordinates ``(xi, eta)`` with weights summing to 1/2.
    """
    s, ws = gauss_legendre_unit(order)
    u, wu = gauss_jacobi_unit(order, 1.0)
    # x = s*u, y = 1 - u; the Jacobian u is carried by the Jacobi weight
    X = np.outer(s, u).ravel()
    Y = np.tile(1.0 - u, order)
    W = np.outer(ws, wu).ravel()
    return np.column_stack([X, Y]), W


def adaptive_element_integral(fun, a, b, tol=1e-10, m=8, max_depth=30):
    """Integrate a vectorised ``fun`` over each interval ``[a_i, b_i]``.

    Each interval is bisected until an ``m``-point and a ``2m``-point Gauss
    rule agree to ``tol`` (absolute, scaled by the interval's share).
    Returns the per-interval integrals.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.zeros(a.shape)
    owner = np.arange(a.size)
    lo, hi = a.ravel().copy(), b.ravel().copy()
    x1, w1 = gauss_legendre_unit(m)
    x2, w2 = gauss_legendre_unit(2 * m)
    for _ in range(max_depth):
        if lo.size == 0:
            break
        L = (hi - lo)[:, None]
        q1 = (fun(lo[:, None] + L * x1) * w1).sum(axis=1) * L[:, 0]
        q2 = (fun(lo[:, None] + L * x2) * w2).sum(axis=1) * L[:, 0]
        done = np.abs(q2 - q1) <= tol * np.maximum(1.0, np.abs(q2))
        np.add.at(out.ravel(), owner[done], q2[done])
        mid = 0.5 * (lo + hi)
        keep = ~done
        owner = np.concatenate([owner[keep], owner[keep]])
        lo, hi = (np.concatenate([lo[keep], mid[keep]]),
                  np.concatenate([mid[keep], hi[keep]]))
    if lo.size:
        L = (hi - lo)[:, None]
        q2 = (fun(lo[:, None] + L * x2) * w2).sum(axis=1) * L[:, 0]
        np.add.at(out.ravel(), owner, q2)
    return out
