"""Boundary-localized convolution ``K u(x) = int psi(|z|) u(x + eta(x) z) dz``.

Values are assembled in difference form ``K u(x) - u(x)`` so that the
tiny horizon near the boundary never causes cancellation. Gradients
differentiate the kernel in x (center and scale), which needs no
derivative of u:

    grad K u(x) = (1/eta) int [-d psi grad eta - psi'(|z|)(zhat + |z| grad eta)]
                  (u(x + eta z) - u(x)) dz
"""
import numpy as np
import scipy.sparse as sp

from .assembly.pairs import max_offset_1d, x_subintervals_1d
from .assembly.load import _call, boundary_rule, point_rows
from .femspace import DiscreteFunction, mesh_rule
from .quadrature import gauss_jacobi_unit, gauss_legendre, gauss_legendre_unit

Z_ORDER = 6
ANGULAR = 16


def _sparse(rows_cols_vals, shape):
    r, c, v = rows_cols_vals
    M = sp.csr_matrix((v, (r, c)), shape=shape)
    M.sum_duplicates()
    return M


def _eta_1d(cfg):
    return lambda x: cfg.eta(x[:, None])


def conv_rows_1d(space, cfg, elem, X, want_grad=True):
    """Rows of ``K u - u`` and ``(K u)'`` at points X (m, 1) in elements elem."""
    mesh = space.mesh
    psi = cfg.psi
    R = psi.support
    v = mesh.vertices[:, 0]
    ne = mesh.n_elements
    ED = space.elem_dofs
    nl = space.n_local
    x = X[:, 0]
    eta = cfg.eta(X)
    deta = cfg.grad_eta(X)[:, 0]
    K = max_offset_1d(mesh, R * np.max(eta) * np.ones(ne), np.ones(ne)) if len(x) else 0
    gz, gw = gauss_legendre_unit(Z_ORDER)
    dphi1 = space.basis_grad(elem, X)[:, :, 0]
    hphi1 = space.basis_hess(elem)[:, :, 0, 0]
    phi1 = space.basis(elem, X)
    m = len(x)
    dr, dc, dv = [], [], []
    gr, gc, gv = [], [], []
    pos = eta > 0
    for k in range(-K, K + 1):
        e2 = elem + k
        valid = (e2 >= 0) & (e2 < ne) & pos
        if not valid.any():
            continue
        e2c = np.clip(e2, 0, ne - 1)
        c2, d2 = v[mesh.elements[e2c, 0]], v[mesh.elements[e2c, 1]]
        with np.errstate(divide="ignore", invalid="ignore"):
            zlo = np.maximum((c2 - x) / eta, -R)
            zhi = np.minimum((d2 - x) / eta, R)
        act = valid & (zhi > zlo)
        if not act.any():
            continue
        i = np.flatnonzero(act)
        L = (zhi - zlo)[i]
        z = zlo[i][:, None] + L[:, None] * gz
        wz = L[:, None] * gw
        az = np.abs(z)
        ps = psi(az)
        et = eta[i][:, None]
        if k == 0:
            # exact: u(x + eta z) - u(x) = eta z u' + (eta z)^2 u'' / 2
            diff_over_eta = (z[:, :, None] * dphi1[i][:, None, :]
                             + 0.5 * et[:, :, None] * (z * z)[:, :, None] * hphi1[i][:, None, :])
            cols = np.broadcast_to(ED[elem[i]][:, None, :], diff_over_eta.shape)
        else:
            y = x[i][:, None] + et * z
            ee2 = np.repeat(e2c[i], z.shape[1])
            phi2 = space.basis(ee2, y.reshape(-1, 1)).reshape(z.shape + (nl,))
            diff_over_eta = np.concatenate(
                [phi2, -np.broadcast_to(phi1[i][:, None, :], phi2.shape)], axis=2) / et[:, :, None]
            cols = np.concatenate([np.broadcast_to(ED[e2c[i]][:, None, :], phi2.shape),
                                   np.broadcast_to(ED[elem[i]][:, None, :], phi2.shape)], axis=2)
        rows = np.broadcast_to(i[:, None, None], cols.shape)
        wv = (wz * ps * et)[:, :, None] * diff_over_eta
        dr.append(rows.ravel()); dc.append(cols.ravel()); dv.append(wv.ravel())
        if want_grad:
            kern = -deta[i][:, None] * (ps + az * psi.derivative(az)) - np.sign(z) * psi.derivative(az)
            gvv = (wz * kern)[:, :, None] * diff_over_eta
            gr.append(rows.ravel()); gc.append(cols.ravel()); gv.append(gvv.ravel())
    shape = (m, space.n_dofs)

    def cat(a):
        return np.concatenate(a) if a else np.zeros(0)

    Dm = _sparse((cat(dr).astype(np.int64), cat(dc).astype(np.int64), cat(dv)), shape)
    if not want_grad:
        return Dm, None
    Gm = _sparse((cat(gr).astype(np.int64), cat(gc).astype(np.int64), cat(gv)), shape)
    # at eta == 0 the operator is the identity
    zero = ~pos
    if zero.any():
        idx = np.flatnonzero(zero)
        Gm = Gm + _sparse((np.repeat(idx, nl), ED[elem[idx]].ravel(), dphi1[idx].ravel()), shape)
    return Dm, [Gm]


def conv_rows_2d(space, cfg, elem, X, want_grad=True):
    """Polar-rule version on triangle meshes."""
    mesh = space.mesh
    psi = cfg.psi
    R = psi.support
    ED = space.elem_dofs
    nl = space.n_local
    t, wt = gauss_jacobi_unit(Z_ORDER, 1.0)
    r = R * t
    wr = R**2 * wt
    th = 2.0 * np.pi * (np.arange(ANGULAR) + 0.5) / ANGULAR
    om = np.column_stack([np.cos(th), np.sin(th)])
    wth = 2.0 * np.pi / ANGULAR
    m = len(X)
    eta = cfg.eta(X)
    geta = cfg.grad_eta(X)
    nr, nt = len(r), len(th)
    # points ordered (x, r, theta)
    Z = (r[:, None, None] * om[None, :, :])  # (nr, nt, 2)
    Y = X[:, None, None, :] + eta[:, None, None, None] * Z[None]
    Yf = Y.reshape(-1, 2)
    owner = np.repeat(np.arange(m), nr * nt)
    e1 = elem[owner]
    e2 = mesh.locate(Yf)
    same = e2 == e1
    w = np.tile((wr[:, None] * np.ones(nt)[None, :] * wth).ravel(), m)
    rf = np.tile(np.repeat(r, nt), m)
    omf = np.tile(np.tile(om, (nr, 1)), (m, 1))
    etaf = eta[owner]
    vals = np.zeros((len(Yf), 2 * nl))
    cols = np.hstack([ED[e1], ED[e1]])
    Xf = X[owner]
    if same.any():
        i = np.flatnonzero(same)
        G = space.basis_grad(e1[i], Xf[i])
        H = space.basis_hess(e1[i])
        o = omf[i]
        vals[i, :nl] = rf[i, None] * (np.einsum("mkd,md->mk", G, o)
                                      + 0.5 * (etaf * rf)[i, None] * np.einsum("mkij,mi,mj->mk", H, o, o))
    other = np.flatnonzero(~same)
    if other.size:
        fo = other[e2[other] >= 0]
        vals[other, nl:] = -space.basis(e1[other], Xf[other]) / etaf[other, None]
        if fo.size:
            vals[fo, :nl] = space.basis(e2[fo], Yf[fo]) / etaf[fo, None]
            cols[fo, :nl] = ED[e2[fo]]
    # vals now hold (u(y) - u(x)) / eta
    ps = psi(rf)
    rows = np.repeat(np.arange(len(Yf)) // (nr * nt), 2 * nl)
    pos = etaf > 0
    Dv = (w * ps * etaf * pos)[:, None] * vals
    Dm = _sparse((rows, cols.ravel(), Dv.ravel()), (m, space.n_dofs))
    if not want_grad:
        return Dm, None
    dps = psi.derivative(rf)
    Gs = []
    for k in range(2):
        kern = -2.0 * ps * geta[owner, k] - dps * (omf[:, k] + rf * geta[owner, k])
        Gk = _sparse((rows, cols.ravel(), ((w * kern * pos)[:, None] * vals).ravel()), (m, space.n_dofs))
        Gs.append(Gk)
    zero = eta <= 0
    if zero.any():
        idx = np.flatnonzero(zero)
        G = space.basis_grad(elem[idx], X[idx])
        for k in range(2):
            Gs[k] = Gs[k] + _sparse((np.repeat(idx, nl), ED[elem[idx]].ravel(), G[:, :, k].ravel()),
                                    (m, space.n_dofs))
    return Dm, Gs


def conv_rows(space, cfg, elem, X, want_grad=True):
    if space.d == 1:
        return conv_rows_1d(space, cfg, elem, X, want_grad)
    return conv_rows_2d(space, cfg, elem, X, want_grad)


def outer_rule(space, cfg, order=5):
    """Quadrature over the base domain resolving where the mollifier ball meets vertices."""
    if space.d == 2:
        return mesh_rule(space.mesh, order + 2)
    mesh = space.mesh
    eta_fn = _eta_1d(cfg)
    R = cfg.psi.support
    elems = space.base_elements
    xs = np.linspace(*cfg.domain.bounds[0], 2049)[:, None]
    K = max_offset_1d(mesh, R * float(np.max(cfg.eta(xs))) * np.ones(mesh.n_elements),
                      np.ones(mesh.n_elements))
    owner, lo, hi = x_subintervals_1d(mesh, elems, eta_fn, R, K)
    g, w = gauss_legendre_unit(order)
    L = (hi - lo)[:, None]
    X = (lo[:, None] + L * g).reshape(-1, 1)
    return np.repeat(owner, len(g)), X, (L * w).ravel()


class SmoothedFunction:
    """``K_delta u`` for a discrete function u."""

    def __init__(self, u, cfg):
        self.u = u
        self.cfg = cfg

    def _located(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float)).reshape(-1, self.cfg.d)
        if not np.all(self.cfg.domain.contains(X, closed=True, tol=1e-14)):
            raise ValueError("K_delta is evaluated on the closed domain only")
        elem = self.u.space.mesh.locate(X)
        return elem, X

    def __call__(self, X):
        elem, X = self._located(X)
        Dm, _ = conv_rows(self.u.space, self.cfg, elem, X, want_grad=False)
        return self.u.values_on(elem, X) + Dm @ self.u.coeffs

    def gradient(self, X):
        elem, X = self._located(X)
        _, Gs = conv_rows(self.u.space, self.cfg, elem, X)
        return np.column_stack([G @ self.u.coeffs for G in Gs])

    def pair(self, f):
        return float(smoothed_load_vector(self.u.space, self.cfg, f) @ self.u.coeffs)


def apply_Kdelta(u, cfg, x):
    """``K_delta u`` at points x; boundary points return the trace of u."""
    out = SmoothedFunction(u, cfg)(x)
    return float(out[0]) if np.ndim(x) == 0 or (np.ndim(x) == 1 and cfg.d > 1) else out


def smoothed_load_vector(space, cfg, f):
    """``b_i = <f, K_delta phi_i>``; the boundary term pairs g with the trace."""
    b = np.zeros(space.n_dofs)
    if f.f0 is not None or f.f1 is not None:
        elem, X, W = outer_rule(space, cfg)
        Dm, Gs = conv_rows(space, cfg, elem, X, want_grad=f.f1 is not None)
        if f.f0 is not None:
            wf = W * _call(f.f0, X)
            b += point_rows(space, elem, X).T @ wf + Dm.T @ wf
        if f.f1 is not None:
            F1 = _call(f.f1, X, space.d)
            for k, G in enumerate(Gs):
                b += G.T @ (W * F1[:, k])
    if f.g is not None:
        eb, Xb, Wb = boundary_rule(space.mesh)
        b += point_rows(space, eb, Xb).T @ (Wb * _call(f.g, Xb))
    return b


def smoothed_load_pairing(f, u, cfg):
    return float(smoothed_load_vector(u.space, cfg, f) @ u.coeffs)


def convolution_error(u, cfg, p=2.0, space=None, order=5):
    """``||u - K_delta u||_{L^p}`` for a discrete function or a smooth callable.

    Callables need ``space`` for the outer quadrature (its mesh only).
    """
    if isinstance(u, DiscreteFunction):
        elem, X, W = outer_rule(u.space, cfg, order)
        Dm, _ = conv_rows(u.space, cfg, elem, X, want_grad=False)
        diff = Dm @ u.coeffs
        return float(np.sum(W * np.abs(diff) ** p)) ** (1.0 / p)
    if space is None:
        raise ValueError("a smooth callable needs a space for quadrature")
    elem, X, W = mesh_rule(space.mesh, order + 3)
    eta = cfg.eta(X)
    psi = cfg.psi
    if cfg.d == 1:
        z, wz = gauss_legendre(2 * Z_ORDER, -psi.support, psi.support)
        Y = X[:, 0][:, None] + eta[:, None] * z
        ux = _call(u, X)
        uy = _call(u, Y.reshape(-1, 1)).reshape(Y.shape)
        diff = ((uy - ux[:, None]) * psi(np.abs(z)) * wz).sum(axis=1)
    else:
        t, wt = gauss_jacobi_unit(2 * Z_ORDER, 1.0)
        r = psi.support * t
        wr = psi.support**2 * wt * psi(r)
        th = 2.0 * np.pi * (np.arange(32) + 0.5) / 32
        om = np.column_stack([np.cos(th), np.sin(th)])
        Z = (r[:, None, None] * om[None]).reshape(-1, 2)
        wzz = np.repeat(wr, 32) * (2.0 * np.pi / 32)
        Y = X[:, None, :] + eta[:, None, None] * Z[None]
        ux = _call(u, X)
        uy = _call(u, Y.reshape(-1, 2)).reshape(len(X), -1)
        diff = ((uy - ux[:, None]) * wzz).sum(axis=1)
    return float(np.sum(W * np.abs(diff) ** p)) ** (1.0 / p)


def smoothed(u, cfg):
    return SmoothedFunction(u, cfg)


__all__ = ["SmoothedFunction", "apply_Kdelta", "smoothed_load_pairing", "smoothed_load_vector",
           "convolution_error", "outer_rule", "conv_rows"]
