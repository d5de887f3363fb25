"""Quadrature rows for nonlocal and local p-energies.

Every energy handled here has the form ``(1/p) sum_q W_q |(R c)_q|^p``
where ``c`` is the coefficient vector and each row of ``R`` evaluates a
difference quotient (nonlocal) or a gradient component (local) at one
quadrature point. Energies, gradients, Hessians and the p=2 stiffness
all follow from the pair ``(R, W)``.

Nonlocal rows use the scaled radial variable ``y = x + eta(x) r z``
with ``r`` in ``(0, support)``, in which the horizon cancels:

    rho(r) / (eta^{d+p-beta} |x-y|^beta) |u(y)-u(x)|^p dy
        = rho(r) r^{p-beta+d-1} |D|^p dr dS(z),   D = (u(y)-u(x)) / (eta r).
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..parallel import chunks, ordered_map
from ..quadrature import gauss_jacobi_unit, gauss_legendre_unit, triangle_rule


@dataclass
class RowSet:
    R: sp.csr_matrix  # (Q * ncomp, n_dofs)
    W: np.ndarray     # (Q,)
    ncomp: int = 1

    @property
    def n_points(self):
        return len(self.W)

    def values(self, c):
        return (self.R @ c).reshape(-1, self.ncomp)


@dataclass(frozen=True)
class RadialRule:
    """Inner and outer orders for the nonlocal row builders."""

    outer: int = 5
    radial: int = 5
    log_pieces: int = 3
    angular: int = 16


def _finish(parts, n_dofs, ncomp=1):
    W = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0)
    if not parts or W.size == 0:
        return RowSet(sp.csr_matrix((0, n_dofs)), np.zeros(0), ncomp)
    L = max(p[1].shape[1] for p in parts)

    def pad(a, fill_cols):
        if a.shape[1] == L:
            return a
        extra = np.repeat(a[:, :1], L - a.shape[1], axis=1) if fill_cols else np.zeros((a.shape[0], L - a.shape[1]))
        return np.hstack([a, extra])

    cols = np.concatenate([pad(p[1], True) for p in parts])
    vals = np.concatenate([pad(p[2], False) for p in parts])
    rows = np.repeat(np.arange(cols.shape[0]), L)
    R = sp.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(cols.shape[0], n_dofs))
    R.sum_duplicates()
    return RowSet(R, W, ncomp)


def _bisect_increasing(g, lo, hi, iters=64):
    """Root of an increasing function on each [lo, hi]; NaN where no sign change."""
    glo, ghi = g(lo), g(hi)
    ok = (glo < 0) & (ghi > 0)
    a, b = lo.copy(), hi.copy()
    for _ in range(iters):
        m = 0.5 * (a + b)
        right = g(m) > 0
        b = np.where(right, m, b)
        a = np.where(right, a, m)
    return np.where(ok, 0.5 * (a + b), np.nan)


def max_offset_1d(mesh, reach, target_weight):
    """Largest element offset any outer element can interact with."""
    v = mesh.vertices[:, 0]
    a, b = v[mesh.elements[:, 0]], v[mesh.elements[:, 1]]
    ne = mesh.n_elements
    K = 0
    for k in range(1, ne):
        e = np.arange(ne)
        hit = False
        for s in (1, -1):
            e2 = e + s * k
            ok = (e2 >= 0) & (e2 < ne) & (reach > 0)
            ok[ok] &= target_weight[e2[ok]] > 0
            if s > 0:
                gap = np.where(ok, a[np.clip(e2, 0, ne - 1)] - b, np.inf)
            else:
                gap = np.where(ok, a - b[np.clip(e2, 0, ne - 1)], np.inf)
            hit |= bool(np.any(gap < reach))
        if not hit:
            break
        K = k
    return K


def x_subintervals_1d(mesh, elems, eta_fn, R, K):
    """Split each outer element where ``x +- R eta(x)`` crosses a mesh vertex.

    Returns (owner, lo, hi) for the nonempty sub-intervals.
    """
    v = mesh.vertices[:, 0]
    nv = len(v)
    a = v[mesh.elements[elems, 0]]
    b = v[mesh.elements[elems, 1]]
    roots = []
    for s in (1, -1):
        for j in range(K + 1):
            idx = elems + 1 + j if s > 0 else elems - j
            valid = (idx >= 0) & (idx < nv)
            t = np.where(valid, v[np.clip(idx, 0, nv - 1)], np.nan)

            def g(x, t=t, s=s):
                return x + s * R * eta_fn(x) - t

            r = _bisect_increasing(g, a, b)
            roots.append(np.where(valid, r, np.nan))
    edges = np.column_stack([a] + roots + [b])
    edges = np.where(np.isnan(edges), a[:, None], edges)
    edges.sort(axis=1)
    lo, hi = edges[:, :-1], edges[:, 1:]
    owner = np.repeat(elems, lo.shape[1])
    lo, hi = lo.ravel(), hi.ravel()
    keep = hi > lo
    return owner[keep], lo[keep], hi[keep]


def _log_rule(m, pieces):
    t, w = gauss_legendre_unit(m)
    T = np.concatenate([(k + t) / pieces for k in range(pieces)])
    Wt = np.concatenate([w / pieces for _ in range(pieces)])
    return T, Wt


def nonlocal_rows_1d(space, eta_fn, eta_max, profile, alpha, outer_elems, target_weight,
                     rule=RadialRule(), log_radial=False):
    """Rows for ``int_{x in outer} int_y rho(r) r^alpha |D|^p`` on a 1D mesh.

    ``target_weight[e]`` multiplies the contribution of points y in
    element e (0 excludes it). ``log_radial`` switches the inner rule on
    element-crossing segments to log-uniform pieces for singular weights.
    """
    mesh = space.mesh
    R = profile.support
    K = max_offset_1d(mesh, R * np.max(eta_max) * np.ones(mesh.n_elements), target_weight)
    v = mesh.vertices[:, 0]
    ne = mesh.n_elements
    ED = space.elem_dofs
    nl = space.n_local
    gx, gwx = gauss_legendre_unit(rule.outer)
    tj, wj = gauss_jacobi_unit(rule.radial, alpha)
    if log_radial:
        tl, wl = _log_rule(rule.radial, rule.log_pieces)
    else:
        tl, wl = gauss_legendre_unit(rule.radial)
    outer_elems = np.asarray(outer_elems)

    def work(span):
        elems = outer_elems[span[0]:span[1]]
        owner, lo, hi = x_subintervals_1d(mesh, elems, eta_fn, R, K)
        L = (hi - lo)[:, None]
        X = (lo[:, None] + L * gx).ravel()
        WX = (L * gwx).ravel()
        E1 = np.repeat(owner, len(gx))
        eta = eta_fn(X)
        pos = eta > 0
        X, WX, E1, eta = X[pos], WX[pos], E1[pos], eta[pos]
        Xc = X[:, None]
        phi1 = space.basis(E1, Xc)
        dphi1 = space.basis_grad(E1, Xc)[:, :, 0]
        hphi1 = space.basis_hess(E1)[:, :, 0, 0]
        out = []
        for k in range(-K, K + 1):
            e2 = E1 + k
            valid = (e2 >= 0) & (e2 < ne)
            valid[valid] &= target_weight[e2[valid]] > 0
            if not valid.any():
                continue
            e2c = np.clip(e2, 0, ne - 1)
            c2, d2 = v[mesh.elements[e2c, 0]], v[mesh.elements[e2c, 1]]
            mult = np.where(valid, target_weight[e2c], 0.0)
            for s in ((1, -1) if k == 0 else ((1,) if k > 0 else (-1,))):
                # radial limits from distances, never from absolute positions
                with np.errstate(divide="ignore", invalid="ignore"):
                    if s > 0:
                        rlo_all = np.maximum((c2 - X) / eta, 0.0) if k else np.zeros_like(X)
                        rhi_all = np.minimum((d2 - X) / eta, R)
                    else:
                        rlo_all = np.maximum((X - d2) / eta, 0.0) if k else np.zeros_like(X)
                        rhi_all = np.minimum((X - c2) / eta, R)
                act = valid & (rhi_all > rlo_all)
                if not act.any():
                    continue
                idx = np.flatnonzero(act)
                et = eta[idx]
                rlo, rhi = rlo_all[idx], rhi_all[idx]
                if k == 0:
                    r = rhi[:, None] * tj
                    w = (WX[idx] * mult[idx] * rhi ** (alpha + 1.0))[:, None] * wj * profile(r)
                    vals = (s * dphi1[idx][:, None, :]
                            + 0.5 * (et[:, None] * r)[:, :, None] * hphi1[idx][:, None, :])
                    cols = np.broadcast_to(ED[E1[idx]][:, None, :], vals.shape)
                else:
                    if log_radial:
                        ratio = rhi / rlo
                        r = rlo[:, None] * ratio[:, None] ** tl
                        wr = r * np.log(ratio)[:, None] * wl
                    else:
                        r = rlo[:, None] + (rhi - rlo)[:, None] * tl
                        wr = (rhi - rlo)[:, None] * wl
                    w = (WX[idx] * mult[idx])[:, None] * wr * profile(r) * r**alpha
                    dist = et[:, None] * r
                    y = X[idx][:, None] + s * dist
                    ee2 = np.repeat(e2c[idx], r.shape[1])
                    phi2 = space.basis(ee2, y.reshape(-1, 1)).reshape(r.shape + (nl,))
                    vals = np.concatenate([phi2, -np.broadcast_to(phi1[idx][:, None, :], phi2.shape)],
                                          axis=2) / dist[:, :, None]
                    cols = np.concatenate([np.broadcast_to(ED[e2c[idx]][:, None, :], phi2.shape),
                                           np.broadcast_to(ED[E1[idx]][:, None, :], phi2.shape)], axis=2)
                out.append((w.ravel(), cols.reshape(-1, cols.shape[2]), vals.reshape(-1, vals.shape[2])))
        return out

    parts = [p for chunk in ordered_map(work, chunks(len(outer_elems))) for p in chunk]
    parts = [(w[w != 0], c[w != 0], x[w != 0]) for w, c, x in parts]
    return _finish(parts, space.n_dofs)


def nonlocal_rows_2d(space, eta_fn, profile, alpha, outer_elems, target_weight, missing_weight,
                     rule=RadialRule(outer=3, radial=5, angular=16)):
    """Polar rows on a triangle mesh.

    Points y outside the mesh count as u(y) = 0 with ``missing_weight``.
    """
    mesh = space.mesh
    R = profile.support
    ref, wref = triangle_rule(rule.outer)
    tj, wj = gauss_jacobi_unit(rule.radial, alpha)
    nth = rule.angular
    th = 2.0 * np.pi * (np.arange(nth) + 0.5) / nth
    om = np.column_stack([np.cos(th), np.sin(th)])
    meas = mesh.element_measures()
    ED = space.elem_dofs
    nl = space.n_local
    outer_elems = np.asarray(outer_elems)
    rr = R * tj
    wr = R ** (alpha + 1.0) * wj * profile(rr) * (2.0 * np.pi / nth)

    def work(span):
        elems = outer_elems[span[0]:span[1]]
        E1 = np.repeat(elems, len(wref))
        X = mesh.to_physical(E1, np.tile(ref, (len(elems), 1)))
        WX = (meas[elems][:, None] * 2.0 * wref).ravel()
        eta = eta_fn(X)
        pos = eta > 0
        X, WX, E1, eta = X[pos], WX[pos], E1[pos], eta[pos]
        M = len(X)
        # points ordered (x, r, theta)
        dist = eta[:, None, None] * rr[None, :, None] * np.ones((1, 1, nth))
        Y = X[:, None, None, :] + dist[..., None] * om[None, None, :, :]
        Yf = Y.reshape(-1, 2)
        e1f = np.repeat(E1, len(rr) * nth)
        e2 = mesh.locate(Yf)
        found = e2 >= 0
        mult = np.where(found, target_weight[np.where(found, e2, 0)], missing_weight)
        w = (WX[:, None, None] * wr[None, :, None] * np.ones((1, 1, nth))).ravel() * mult
        same = e2 == e1f
        omf = np.tile(om, (M * len(rr), 1))
        distf = dist.ravel()
        vals = np.zeros((len(Yf), 2 * nl))
        cols = np.hstack([ED[e1f], ED[e1f]])
        Xr_all = np.repeat(X, len(rr) * nth, axis=0)
        # same element: exact directional difference quotient
        if same.any():
            i = np.flatnonzero(same)
            G = space.basis_grad(e1f[i], Xr_all[i])
            H = space.basis_hess(e1f[i])
            o = omf[i]
            vals[i, :nl] = (np.einsum("mkd,md->mk", G, o)
                            + 0.5 * distf[i, None] * np.einsum("mkij,mi,mj->mk", H, o, o))
        other = ~same
        if other.any():
            i = np.flatnonzero(other)
            phi1 = space.basis(e1f[i], Xr_all[i])
            vals[i, nl:] = -phi1 / distf[i, None]
            fi = i[found[i]]
            if fi.size:
                phi2 = space.basis(e2[fi], Yf[fi])
                vals[fi, :nl] = phi2 / distf[fi, None]
                cols[fi, :nl] = ED[e2[fi]]
        keep = w != 0
        return [(w[keep], cols[keep], vals[keep])]

    parts = [p for chunk in ordered_map(work, chunks(len(outer_elems))) for p in chunk]
    return _finish(parts, space.n_dofs)


def gradient_rows(space, order=None, elements=None):
    """Rows evaluating the d gradient components at element quadrature points."""
    order = order if order is not None else space.degree + 1
    elem, X, W = space.quad_points(order, elements)
    G = space.basis_grad(elem, X)  # (m, nl, d)
    d = space.d
    vals = np.transpose(G, (0, 2, 1)).reshape(-1, space.n_local)
    cols = np.repeat(space.elem_dofs[elem], d, axis=0)
    rows = np.repeat(np.arange(len(vals)), space.n_local)
    R = sp.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(len(vals), space.n_dofs))
    R.sum_duplicates()
    return RowSet(R, W, d)
