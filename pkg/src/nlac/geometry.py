"""Domains, structured simplicial meshes, inflated domains and distance fields.

Only intervals (d=1) and axis-aligned rectangles (d=2) are supported.
Points are always handled as arrays of shape ``(m, d)``.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

INTERIOR = 0
LAYER = 1
TAG_NAMES = {INTERIOR: "interior", LAYER: "layer"}


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box ``prod_k (lo_k, hi_k)`` in one or two dimensions."""

    bounds: tuple

    def __post_init__(self):
        b = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if len(b) not in (1, 2):
            raise NotImplementedError("only d = 1 and d = 2 are supported")
        for lo, hi in b:
            if not hi > lo:
                raise ValueError(f"empty side ({lo}, {hi})")
        object.__setattr__(self, "bounds", b)

    @classmethod
    def interval(cls, a=0.0, b=1.0):
        return cls(((a, b),))

    @classmethod
    def rectangle(cls, x0=0.0, x1=1.0, y0=0.0, y1=1.0):
        return cls(((x0, x1), (y0, y1)))

    @property
    def d(self):
        return len(self.bounds)

    @property
    def lengths(self):
        return np.array([hi - lo for lo, hi in self.bounds])

    @property
    def diameter(self):
        return float(np.linalg.norm(self.lengths))

    @property
    def measure(self):
        return float(np.prod(self.lengths))

    @property
    def lo(self):
        return np.array([lo for lo, _ in self.bounds])

    @property
    def hi(self):
        return np.array([hi for _, hi in self.bounds])

    def contains(self, X, closed=True, tol=0.0):
        X = np.atleast_2d(X)
        if closed:
            return np.all((X >= self.lo - tol) & (X <= self.hi + tol), axis=1)
        return np.all((X > self.lo + tol) & (X < self.hi - tol), axis=1)

    def dist_to_boundary(self, X):
        """Euclidean distance from each point to the boundary of the box."""
        X = np.atleast_2d(X)
        inside = self.contains(X, closed=True)
        below = np.maximum(self.lo - X, 0.0)
        above = np.maximum(X - self.hi, 0.0)
        outside_dist = np.linalg.norm(below + above, axis=1)
        inside_dist = np.min(np.minimum(X - self.lo, self.hi - X), axis=1)
        return np.where(inside, inside_dist, outside_dist)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Simplicial mesh with per-element tags.

    ``boundary_facets`` lists facets on the boundary of the base domain
    (vertex indices, shape ``(nf, d)``); for inflated meshes these are
    the facets on the boundary of the base domain, not of the collar.
    """

    vertices: np.ndarray
    elements: np.ndarray
    boundary_facets: np.ndarray
    tags: np.ndarray
    domain: Domain
    h_max: float = field(init=False)
    shape_ratio: float = field(init=False)

    def __post_init__(self):
        for name, dt in (("vertices", float), ("elements", np.int64),
                         ("boundary_facets", np.int64), ("tags", np.int64)):
            object.__setattr__(self, name, _frozen(getattr(self, name), dt))
        d = self.vertices.shape[1]
        if self.elements.shape[1] != d + 1:
            raise ValueError("element arity does not match dimension")
        T = self.vertices[self.elements]  # (ne, d+1, d)
        J = np.transpose(T[:, 1:, :] - T[:, :1, :], (0, 2, 1))  # (ne, d, d)
        Jinv = np.linalg.inv(J)
        # barycentric: lam[1:] = Jinv (x - v0); lam[0] = 1 - sum
        A = np.empty((len(self.elements), d + 1, d))
        A[:, 1:, :] = Jinv
        A[:, 0, :] = -Jinv.sum(axis=1)
        c = np.empty((len(self.elements), d + 1))
        c[:, 1:] = -np.einsum("eij,ej->ei", Jinv, T[:, 0, :])
        c[:, 0] = 1.0 - c[:, 1:].sum(axis=1)
        object.__setattr__(self, "_bary_A", _frozen(A))
        object.__setattr__(self, "_bary_c", _frozen(c))
        object.__setattr__(self, "_det", _frozen(np.abs(np.linalg.det(J))))
        object.__setattr__(self, "_tree", None)
        diam = self.element_diameters()
        object.__setattr__(self, "h_max", float(diam.max()))
        if d == 1:
            ratio = diam.max() / diam.min()
        else:
            ratio = diam.max() / (2.0 * math.sqrt(3.0) * self.element_inradii().min())
        object.__setattr__(self, "shape_ratio", float(ratio))

    @property
    def d(self):
        return self.vertices.shape[1]

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_vertices(self):
        return len(self.vertices)

    def element_measures(self):
        return self._det / math.factorial(self.d)

    def element_diameters(self):
        T = self.vertices[self.elements]
        k = T.shape[1]
        diam = np.zeros(len(T))
        for i in range(k):
            for j in range(i + 1, k):
                diam = np.maximum(diam, np.linalg.norm(T[:, i] - T[:, j], axis=1))
        return diam

    def element_inradii(self):
        T = self.vertices[self.elements]
        if self.d == 1:
            return 0.5 * np.abs(T[:, 1, 0] - T[:, 0, 0])
        a = np.linalg.norm(T[:, 1] - T[:, 2], axis=1)
        b = np.linalg.norm(T[:, 0] - T[:, 2], axis=1)
        c = np.linalg.norm(T[:, 0] - T[:, 1], axis=1)
        return 2.0 * self.element_measures() / (a + b + c)

    def barycentric(self, elem, X):
        """Barycentric coordinates of points ``X`` (m, d) in elements ``elem`` (m,)."""
        return np.einsum("mij,mj->mi", self._bary_A[elem], X) + self._bary_c[elem]

    def barycentric_gradients(self, elem):
        """Constant gradients of the barycentric coordinates, shape (m, d+1, d)."""
        return self._bary_A[elem]

    def to_physical(self, elem, ref):
        """Map reference coordinates (m, d) of elements ``elem`` to physical points."""
        T = self.vertices[self.elements[elem]]
        return T[:, 0, :] + np.einsum("mij,mj->mi", np.transpose(T[:, 1:, :] - T[:, :1, :], (0, 2, 1)), ref)

    def locate(self, X, tol=1e-12):
        """Index of an element containing each point, or -1."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.d == 1:
            v = self.vertices[:, 0]
            order = self.elements[:, 0]
            # 1D meshes are built with consecutive, increasing elements
            e = np.searchsorted(v, X[:, 0], side="right") - 1
            e = np.clip(e, 0, self.n_elements - 1)
            lo = v[order[e]]
            hi = v[self.elements[e, 1]]
            ok = (X[:, 0] >= lo - tol) & (X[:, 0] <= hi + tol)
            return np.where(ok, e, -1)
        if self._tree is None:
            cent = self.vertices[self.elements].mean(axis=1)
            object.__setattr__(self, "_tree", cKDTree(cent))
        k = min(12, self.n_elements)
        _, cand = self._tree.query(X, k=k)
        cand = np.atleast_2d(cand)
        if cand.shape[0] != len(X):
            cand = cand.reshape(len(X), -1)
        out = np.full(len(X), -1, dtype=np.int64)
        for j in range(cand.shape[1]):
            todo = out < 0
            if not todo.any():
                break
            e = cand[todo, j]
            lam = self.barycentric(e, X[todo])
            inside = np.all(lam >= -tol, axis=1)
            idx = np.flatnonzero(todo)[inside]
            out[idx] = e[inside]
        return out

    def export_text(self):
        """Plain-text dump: vertex table then element table.

        Vertex records are ``index x [y]``; element records are
        ``index v0 v1 [v2] tag``.
        """
        lines = [f"# vertices {self.n_vertices} d={self.d}", "# index coords..."]
        for i, v in enumerate(self.vertices):
            lines.append(" ".join([str(i)] + [repr(float(c)) for c in v]))
        lines.append(f"# elements {self.n_elements}")
        lines.append("# index vertex_ids... tag")
        for i, (e, t) in enumerate(zip(self.elements, self.tags)):
            lines.append(" ".join([str(i)] + [str(int(k)) for k in e] + [TAG_NAMES[int(t)]]))
        return "\n".join(lines) + "\n"


def _interval_mesh(domain, x, tags, base_lo, base_hi):
    verts = x[:, None]
    elems = np.column_stack([np.arange(len(x) - 1), np.arange(1, len(x))])
    bfac = [np.flatnonzero(np.isclose(x, base_lo, rtol=0, atol=1e-14 * (1 + abs(base_lo))))[0],
            np.flatnonzero(np.isclose(x, base_hi, rtol=0, atol=1e-14 * (1 + abs(base_hi))))[0]]
    return Mesh(verts, elems, np.array(bfac)[:, None], tags, domain)


def _grid_triangles(xs, ys, keep_cell):
    nx, ny = len(xs) - 1, len(ys) - 1
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    vid = np.arange(verts.shape[0]).reshape(nx + 1, ny + 1)
    tris, cells = [], []
    for i in range(nx):
        for j in range(ny):
            if not keep_cell(i, j):
                continue
            a, b = vid[i, j], vid[i + 1, j]
            c, d = vid[i + 1, j + 1], vid[i, j + 1]
            # alternate the diagonal so neighbouring cells cross
            if (i + j) % 2 == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
            cells += [(i, j), (i, j)]
    tris = np.array(tris)
    used = np.unique(tris)
    remap = -np.ones(verts.shape[0], dtype=np.int64)
    remap[used] = np.arange(len(used))
    return verts[used], remap[tris], np.array(cells)


def _boundary_edges(verts, tris, domain):
    edges = np.sort(np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [0, 2]]]), axis=1)
    edges = np.unique(edges, axis=0)
    P, Q = verts[edges[:, 0]], verts[edges[:, 1]]
    on = np.zeros(len(edges), dtype=bool)
    for k, (lo, hi) in enumerate(domain.bounds):
        for val in (lo, hi):
            on |= np.isclose(P[:, k], val, atol=1e-13) & np.isclose(Q[:, k], val, atol=1e-13)
    # an edge on the plane of a side must also lie inside the closed box
    mid = 0.5 * (P + Q)
    on &= domain.contains(mid, closed=True, tol=1e-13)
    return edges[on]


def build_mesh(domain, n):
    """Uniform mesh with ``n`` subdivisions per side.

    For d=2 each rectangular cell is split along an alternating diagonal
    (crossed pattern), giving ``2 n^2`` triangles.
    """
    n = int(n)
    if n < 1:
        raise ValueError("subdivision count must be >= 1")
    if domain.d == 1:
        (a, b), = domain.bounds
        x = np.linspace(a, b, n + 1)
        return _interval_mesh(domain, x, np.zeros(n, dtype=np.int64), a, b)
    (x0, x1), (y0, y1) = domain.bounds
    verts, tris, _ = _grid_triangles(np.linspace(x0, x1, n + 1), np.linspace(y0, y1, n + 1),
                                     lambda i, j: True)
    bfac = _boundary_edges(verts, tris, domain)
    return Mesh(verts, tris, bfac, np.zeros(len(tris), dtype=np.int64), domain)


@dataclass(frozen=True, eq=False)
class InflatedDomain:
    """Base domain plus the collar of width ``delta`` outside it.

    ``mesh`` covers the base domain and the collar; elements are tagged
    interior/layer. In d=2 the corner squares of the enlarged box lie
    farther than ``delta`` from the base domain and are not meshed.
    """

    base: Domain
    delta: float
    delta_requested: float
    layers: int
    mesh: Mesh

    @property
    def interior_elements(self):
        return np.flatnonzero(self.mesh.tags == INTERIOR)

    @property
    def layer_elements(self):
        return np.flatnonzero(self.mesh.tags == LAYER)

    def in_collar(self, X, tol=1e-12):
        """Points outside the base domain within ``delta`` of its boundary."""
        X = np.atleast_2d(X)
        out = ~self.base.contains(X, closed=False)
        return out & (self.base.dist_to_boundary(X) <= self.delta + tol)


def build_inflated(domain, delta, n, policy="snap"):
    """Mesh of the base domain plus a collar resolved by whole elements.

    ``policy="snap"`` rounds ``delta`` to the nearest positive multiple of
    the mesh size and records the snapped value; ``policy="reject"``
    raises unless ``delta`` is already such a multiple.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    n = int(n)
    if n < 1:
        raise ValueError("subdivision count must be >= 1")
    h = domain.lengths / n
    if domain.d == 2 and not np.isclose(h[0], h[1], rtol=1e-12):
        raise ValueError("inflated 2D meshes need square cells")
    hh = float(h[0])
    ratio = delta / hh
    k = max(1, int(round(ratio)))
    if policy == "reject" and not np.isclose(ratio, k, rtol=1e-10, atol=1e-10):
        raise ValueError(f"delta={delta} is not a multiple of h={hh}")
    if policy not in ("snap", "reject"):
        raise ValueError(f"unknown snap policy {policy!r}")
    snapped = k * hh
    if domain.d == 1:
        (a, b), = domain.bounds
        x = np.concatenate([a - hh * np.arange(k, 0, -1), np.linspace(a, b, n + 1),
                            b + hh * np.arange(1, k + 1)])
        tags = np.full(n + 2 * k, LAYER, dtype=np.int64)
        tags[k:k + n] = INTERIOR
        mesh = _interval_mesh(domain, x, tags, a, b)
    else:
        (x0, x1), (y0, y1) = domain.bounds
        xs = np.concatenate([x0 - hh * np.arange(k, 0, -1), np.linspace(x0, x1, n + 1),
                             x1 + hh * np.arange(1, k + 1)])
        ys = np.concatenate([y0 - hh * np.arange(k, 0, -1), np.linspace(y0, y1, n + 1),
                             y1 + hh * np.arange(1, k + 1)])

        def in_x(i):
            return k <= i < k + n

        def in_y(j):
            return k <= j < k + n

        verts, tris, cells = _grid_triangles(xs, ys, lambda i, j: in_x(i) or in_y(j))
        tags = np.array([INTERIOR if (in_x(i) and in_y(j)) else LAYER for i, j in cells],
                        dtype=np.int64)
        bfac = _boundary_edges(verts, tris[tags == INTERIOR], domain)
        mesh = Mesh(verts, tris, bfac, tags, domain)
    return InflatedDomain(domain, snapped, float(delta), k, mesh)


@dataclass(frozen=True)
class DistanceField:
    """Smooth generalized distance ``lam`` with certified constants."""

    domain: Domain
    kappa0: float
    kappa1: float

    def __call__(self, X):
        X = np.atleast_2d(X)
        lam = self._axis(X)
        if self.domain.d == 1:
            return lam[:, 0]
        lx, ly = lam[:, 0], lam[:, 1]
        s = lx + ly
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(s > 0, lx * ly / np.where(s > 0, s, 1.0), 0.0)
        return out

    def _axis(self, X):
        lo, hi = self.domain.lo, self.domain.hi
        return (X - lo) * (hi - X) / (hi - lo)

    def gradient(self, X):
        X = np.atleast_2d(X)
        lo, hi = self.domain.lo, self.domain.hi
        lam = self._axis(X)
        dlam = (lo + hi - 2.0 * X) / (hi - lo)
        if self.domain.d == 1:
            return dlam
        lx, ly = lam[:, 0], lam[:, 1]
        s2 = (lx + ly) ** 2
        safe = np.where(s2 > 0, s2, 1.0)
        gx = np.where(s2 > 0, ly**2 / safe, 0.0) * dlam[:, 0]
        gy = np.where(s2 > 0, lx**2 / safe, 0.0) * dlam[:, 1]
        return np.column_stack([gx, gy])


def smooth_distance(domain):
    """Polynomial-type surrogate for the distance to the boundary.

    d=1 on (a, b): ``(x-a)(b-x)/(b-a)`` with kappa0 = 2, kappa1 = 1.
    d=2: ``lx*ly/(lx+ly)`` built from the two 1D fields, which stays
    within a factor 4 of the true distance (kappa0 = 4, kappa1 = 1).
    """
    if not isinstance(domain, Domain):
        raise NotImplementedError("unsupported domain shape")
    if domain.d == 1:
        return DistanceField(domain, 2.0, 1.0)
    return DistanceField(domain, 4.0, 1.0)


def interior_samples(domain, n=1024, seed=0):
    """Scrambled Sobol points strictly inside the domain."""
    s = qmc.Sobol(d=domain.d, scramble=True, seed=seed).random(n)
    s = np.clip(s, 1e-9, 1.0 - 1e-9)
    return domain.lo + s * domain.lengths


def check_distance_field(field, n=1024, seed=0):
    """Sampled ratios ``lam/dist`` and gradient norms on interior points."""
    X = interior_samples(field.domain, n, seed)
    ratio = field(X) / field.domain.dist_to_boundary(X)
    grad = np.linalg.norm(field.gradient(X), axis=1)
    return {
        "ratio_min": float(ratio.min()),
        "ratio_max": float(ratio.max()),
        "grad_max": float(grad.max()),
        "ok": bool(ratio.min() >= 1.0 / field.kappa0 and ratio.max() <= field.kappa0
                   and grad.max() <= field.kappa1),
    }
