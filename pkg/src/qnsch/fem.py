"""Lagrange P1/P2 elements on triangles: quadrature, shape functions, element maps, dof maps."""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

from .errors import InvalidArgument
from .mesh import TAGS, locate_points

ORDERS = {"P1": 1, "P2": 2}
N_LOCAL = {1: 3, 2: 6}
# local P2 midpoint nodes 3, 4, 5 sit on local edges (0,1), (1,2), (2,0)
LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))

DEFAULT_TRIANGLE_DEGREE = 5
DEFAULT_EDGE_DEGREE = 5  # 3-point Gauss


def parse_order(order):
    """Accept ``"P1"``, ``"P2"``, 1 or 2 and return the integer polynomial degree."""
    if isinstance(order, str) and order.upper() in ORDERS:
        return ORDERS[order.upper()]
    if not isinstance(order, str) and order in (1, 2):
        return int(order)
    raise InvalidArgument(f"unknown element order {order!r}; expected P1 or P2")


# ---------------------------------------------------------------- quadrature

@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature on the reference triangle or the unit edge.

    Attributes
    ----------
    kind : ``"triangle"`` or ``"edge"``
    degree : highest polynomial degree integrated exactly
    points : (nq, 3) barycentric coordinates for triangles, (nq,) parameters in [0, 1] for edges
    weights : (nq,) positive weights summing to 1/2 (triangle) or 1 (edge)
    """

    kind: str
    degree: int
    points: np.ndarray
    weights: np.ndarray

    @property
    def n_points(self):
        return len(self.weights)


def _orbit_s3(w):
    return [(1 / 3, 1 / 3, 1 / 3)], [w]


def _orbit_s21(a, w):
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)], [w] * 3


def _orbit_s111(a, b, w):
    c = 1.0 - a - b
    pts = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
    return pts, [w] * 6


def _assemble_orbits(*orbits):
    pts, wts = [], []
    for p, w in orbits:
        pts += p
        wts += w
    return np.array(pts, dtype=float), 0.5 * np.array(wts, dtype=float)


def _triangle_rule(degree):
    if degree == 1:
        return _assemble_orbits(_orbit_s3(1.0))
    if degree == 2:
        return _assemble_orbits(_orbit_s21(1 / 6, 1 / 3))
    if degree <= 5:
        # Radon's 7-point rule, exact to degree 5
        s = math.sqrt(15.0)
        return _assemble_orbits(
            _orbit_s3(9 / 40),
            _orbit_s21((6 - s) / 21, (155 - s) / 1200),
            _orbit_s21((6 + s) / 21, (155 + s) / 1200),
        )
    # Dunavant's 12-point rule, exact to degree 6
    pts, wts = _assemble_orbits(
        _orbit_s21(0.063089014491502228, 0.050844906370206817),
        _orbit_s21(0.24928674517091042, 0.11678627572637937),
        _orbit_s111(0.053145049844816947, 0.31035245103378440, 0.082851075618373575),
    )
    return pts, wts


@lru_cache(maxsize=None)
def _cached_rule(kind, degree):
    if kind == "triangle":
        pts, wts = _triangle_rule(degree)
    else:
        n = max(1, math.ceil((degree + 1) / 2))
        x, w = np.polynomial.legendre.leggauss(n)
        pts, wts = 0.5 * (x + 1.0), 0.5 * w
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(kind, degree, pts, wts)


def quadrature(kind="triangle", degree=None):
    """Return a quadrature rule exact for polynomials up to ``degree`` (1..6).

    Triangle default is the 7-point degree-5 rule; edge default is 3-point Gauss.
    """
    if kind not in ("triangle", "edge"):
        raise InvalidArgument(f"unknown quadrature kind {kind!r}")
    if degree is None:
        degree = DEFAULT_TRIANGLE_DEGREE if kind == "triangle" else DEFAULT_EDGE_DEGREE
    if int(degree) != degree or not 1 <= degree <= 6:
        raise InvalidArgument(f"unsupported quadrature degree {degree!r}; expected 1..6")
    return _cached_rule(kind, int(degree))


# ------------------------------------------------------------ shape functions

# reference gradients of the barycentric coordinates with respect to (xi, eta)
_DLAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def tabulate(order, bary):
    """Shape values and reference gradients at many points.

    Parameters
    ----------
    order : P1 or P2
    bary : (n, 3) barycentric coordinates

    Returns
    -------
    values : (n, nloc)
    grads : (n, nloc, 2) gradients with respect to the reference coordinates
    """
    k = parse_order(order)
    lam = np.atleast_2d(np.asarray(bary, dtype=float))
    n = len(lam)
    if k == 1:
        vals = lam.copy()
        grads = np.broadcast_to(_DLAMBDA, (n, 3, 2)).copy()
        return vals, grads
    vals = np.empty((n, 6))
    grads = np.empty((n, 6, 2))
    for i in range(3):
        vals[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
        grads[:, i] = (4.0 * lam[:, i] - 1.0)[:, None] * _DLAMBDA[i]
    for m, (a, b) in enumerate(LOCAL_EDGES):
        vals[:, 3 + m] = 4.0 * lam[:, a] * lam[:, b]
        grads[:, 3 + m] = 4.0 * (lam[:, b, None] * _DLAMBDA[a] + lam[:, a, None] * _DLAMBDA[b])
    return vals, grads


def shape_eval(order, point):
    """Lagrange shape values and reference gradients at one barycentric point.

    Returns ``(values, grads)`` with shapes (nloc,) and (nloc, 2).
    """
    lam = np.asarray(point, dtype=float).reshape(3)
    if np.any(lam < -1e-12) or abs(lam.sum() - 1.0) > 1e-12:
        raise InvalidArgument(f"invalid barycentric coordinates {tuple(lam)}")
    vals, grads = tabulate(order, lam[None])
    return vals[0], grads[0]


# ---------------------------------------------------------------- element map

@dataclass(frozen=True)
class ElementMap:
    """Affine reference-to-physical maps, one per triangle.

    Attributes
    ----------
    origin : (nt, 2) physical image of reference vertex 0
    jac : (nt, 2, 2) Jacobian ``dx/dxi``
    det : (nt,) Jacobian determinant (twice the triangle area)
    inv_t : (nt, 2, 2) inverse transpose of the Jacobian
    """

    origin: np.ndarray
    jac: np.ndarray
    det: np.ndarray
    inv_t: np.ndarray

    @classmethod
    def from_mesh(cls, mesh):
        p = mesh.vertices[mesh.triangles]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        if np.any(det <= 0):
            raise InvalidArgument("degenerate or clockwise triangle")
        inv_t = np.empty_like(jac)
        inv_t[:, 0, 0] = jac[:, 1, 1] / det
        inv_t[:, 0, 1] = -jac[:, 1, 0] / det
        inv_t[:, 1, 0] = -jac[:, 0, 1] / det
        inv_t[:, 1, 1] = jac[:, 0, 0] / det
        return cls(p[:, 0].copy(), jac, det, inv_t)

    def to_physical(self, bary):
        """Map barycentric points (nq, 3) to physical points (nt, nq, 2)."""
        ref = np.asarray(bary)[:, 1:]
        return self.origin[:, None, :] + np.einsum("tij,qj->tqi", self.jac, ref)

    def physical_gradients(self, ref_grads):
        """Push reference gradients (nq, nloc, 2) forward to (nt, nq, nloc, 2)."""
        return np.einsum("tij,qaj->tqai", self.inv_t, ref_grads)


# -------------------------------------------------------------- function space

class FunctionSpace:
    """Continuous Lagrange space of order 1 or 2 on a mesh.

    Dofs are numbered vertices first; for P2 the midpoint of unique edge ``e``
    gets index ``n_vertices + e``.
    """

    def __init__(self, mesh, order="P1"):
        self.mesh = mesh
        self.degree = parse_order(order)
        self.order = f"P{self.degree}"
        self.n_local = N_LOCAL[self.degree]
        nv = mesh.n_vertices
        if self.degree == 1:
            self.cell_dofs = mesh.triangles.copy()
            self.dof_coords = mesh.vertices.copy()
        else:
            edges, tri_edges = mesh.edge_table()
            self.cell_dofs = np.hstack([mesh.triangles, nv + tri_edges])
            mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
            self.dof_coords = np.vstack([mesh.vertices, mids])
        self.n_dofs = len(self.dof_coords)
        self.emap = ElementMap.from_mesh(mesh)
        self._boundary = self._boundary_tables()

    def _boundary_tables(self):
        """Owning triangle, local edge and edge dofs for every boundary edge."""
        mesh = self.mesh
        t = mesh.triangles
        owner = {}
        for k, (a, b) in enumerate(LOCAL_EDGES):
            for tri, (u, v) in enumerate(zip(t[:, a], t[:, b])):
                owner[(u, v)] = (tri, k)
        tri = np.empty(len(mesh.boundary_edges), dtype=np.int64)
        loc = np.empty(len(mesh.boundary_edges), dtype=np.int64)
        for i, (u, v) in enumerate(mesh.boundary_edges):
            tri[i], loc[i] = owner[(int(u), int(v))]
        return {"tri": tri, "local_edge": loc}

    @property
    def boundary_triangles(self):
        return self._boundary["tri"]

    @property
    def boundary_local_edges(self):
        return self._boundary["local_edge"]

    def edge_dofs(self, edge_ids):
        """Dofs lying on the given boundary edges, shape (n, 2) or (n, 3)."""
        tri = self.boundary_triangles[edge_ids]
        loc = self.boundary_local_edges[edge_ids]
        a = np.array([e[0] for e in LOCAL_EDGES])[loc]
        b = np.array([e[1] for e in LOCAL_EDGES])[loc]
        cols = [self.cell_dofs[tri, a], self.cell_dofs[tri, b]]
        if self.degree == 2:
            cols.append(self.cell_dofs[tri, 3 + loc])
        return np.column_stack(cols)

    def boundary_dofs(self, *tags):
        """Sorted unique dofs on boundary edges carrying any of ``tags``."""
        for tag in tags:
            if tag not in TAGS:
                raise InvalidArgument(f"unknown boundary tag {tag!r}")
        edges = self.mesh.edges_with_tag(*tags)
        return np.unique(self.edge_dofs(edges))

    def interpolate(self, func):
        """Nodal interpolant of ``func(x, y)`` (vectorised over arrays)."""
        x, y = self.dof_coords[:, 0], self.dof_coords[:, 1]
        vals = np.asarray(func(x, y), dtype=float)
        return np.broadcast_to(vals, (self.n_dofs,)).copy()

    def evaluate(self, coeffs, points, grad=False):
        """Evaluate a finite element function at arbitrary physical points.

        Raises NotFound for points outside the mesh.
        """
        tri, bary = locate_points(self.mesh, points)
        vals, rgrads = tabulate(self.degree, bary)
        local = np.asarray(coeffs)[self.cell_dofs[tri]]
        out = np.einsum("na,na->n", vals, local)
        if not grad:
            return out
        g = np.einsum("nij,naj->nai", self.emap.inv_t[tri], rgrads)
        return out, np.einsum("nai,na->ni", g, local)

    def vertex_values(self, coeffs):
        return np.asarray(coeffs)[: self.mesh.n_vertices]

