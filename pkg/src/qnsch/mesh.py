"""Triangular meshes of rectangles and point location."""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, NotFound

TAGS = ("wall_bottom", "wall_top", "lateral_left", "lateral_right")
WALL_TAGS = ("wall_bottom", "wall_top")
LATERAL_TAGS = ("lateral_left", "lateral_right")

LOCATE_TOL = 1e-10


@dataclass(frozen=True)
class Mesh:
    """Conforming triangulation of ``[0, Lx] x [0, Ly]``.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise
    boundary_edges : (nb, 2) int array, oriented counterclockwise around the domain
    boundary_tags : (nb,) int array indexing :data:`TAGS`
    extents : (Lx, Ly)
    shape : (nx, ny) cell counts of the underlying grid
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    extents: tuple
    shape: tuple
    _edges: dict = field(default=None, repr=False, compare=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def area(self):
        return self.extents[0] * self.extents[1]

    @property
    def cell_size(self):
        """Grid spacing along the short side of the rectangle."""
        nx, ny = self.shape
        Lx, Ly = self.extents
        return Ly / ny if Ly <= Lx else Lx / nx

    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edges_with_tag(self, *tags):
        codes = [TAGS.index(t) for t in tags]
        return np.flatnonzero(np.isin(self.boundary_tags, codes))

    def edge_table(self):
        """Unique undirected edges ``(ne, 2)`` and the per-triangle edge index ``(nt, 3)``.

        Local edge k of a triangle joins local vertices ``(k, (k+1) % 3)``.
        """
        if self._edges is not None:
            return self._edges["edges"], self._edges["tri_edges"]
        t = self.triangles
        pairs = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1)  # (nt,3,2)
        flat = np.sort(pairs.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(flat, axis=0, return_inverse=True)
        tri_edges = inverse.reshape(-1, 3)
        object.__setattr__(self, "_edges", {"edges": edges, "tri_edges": tri_edges})
        return edges, tri_edges

    def validate(self):
        """Check the structural invariants; raises InvalidArgument on failure."""
        areas = self.signed_areas()
        if np.any(areas <= 0):
            raise InvalidArgument("triangle with nonpositive signed area")
        if abs(areas.sum() - self.area) > 1e-12 * self.area:
            raise InvalidArgument("triangle areas do not sum to the rectangle area")
        edges, tri_edges = self.edge_table()
        counts = np.bincount(tri_edges.ravel(), minlength=len(edges))
        be = np.sort(self.boundary_edges, axis=1)
        lookup = {tuple(e): i for i, e in enumerate(edges)}
        for e in be:
            idx = lookup.get(tuple(e))
            if idx is None or counts[idx] != 1:
                raise InvalidArgument(f"boundary edge {tuple(e)} is not owned by exactly one triangle")
        if np.count_nonzero(counts == 1) != len(be):
            raise InvalidArgument("boundary edge list does not cover the mesh boundary")
        used = np.unique(self.triangles)
        if used[0] != 0 or used[-1] != self.n_vertices - 1 or len(used) != self.n_vertices:
            raise InvalidArgument("vertex indices are not contiguous")
        return True

    def dump(self, path):
        """Write a plain-text node/element/boundary listing (debugging aid)."""
        with open(path, "w") as fh:
            fh.write(f"# qnsch mesh {self.shape[0]}x{self.shape[1]} on {self.extents[0]!r}x{self.extents[1]!r}\n")
            fh.write(f"vertices {self.n_vertices}\n")
            for i, (x, y) in enumerate(self.vertices):
                fh.write(f"{i} {x:.17g} {y:.17g}\n")
            fh.write(f"triangles {self.n_triangles}\n")
            for i, (a, b, c) in enumerate(self.triangles):
                fh.write(f"{i} {a} {b} {c}\n")
            fh.write(f"boundary_edges {len(self.boundary_edges)}\n")
            for (a, b), t in zip(self.boundary_edges, self.boundary_tags):
                fh.write(f"{a} {b} {TAGS[t]}\n")


def generate_rect_mesh(extents, nx, ny):
    """Uniform triangulation of ``[0, Lx] x [0, Ly]`` with ``nx * ny`` cells.

    Every cell is cut along its lower-left/upper-right diagonal. Bottom and top
    edges are tagged as walls, the two sides as lateral boundaries.
    """
    Lx, Ly = (float(v) for v in extents)
    if not (Lx > 0 and Ly > 0):
        raise InvalidArgument(f"extents must be positive, got {extents!r}")
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise InvalidArgument(f"cell counts must be positive integers, got nx={nx!r}, ny={ny!r}")
    nx, ny = int(nx), int(ny)

    xs = np.linspace(0.0, Lx, nx + 1)
    ys = np.linspace(0.0, Ly, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    I, J = np.meshgrid(np.arange(nx), np.arange(ny))
    I, J = I.ravel(), J.ravel()
    v00, v10, v11, v01 = vid(I, J), vid(I + 1, J), vid(I + 1, J + 1), vid(I, J + 1)
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    # cell k owns triangles 2k (below the diagonal) and 2k+1
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    i = np.arange(nx)
    j = np.arange(ny)
    bottom = np.column_stack([vid(i, 0), vid(i + 1, 0)])
    right = np.column_stack([vid(nx, j), vid(nx, j + 1)])
    top = np.column_stack([vid(i + 1, ny), vid(i, ny)])[::-1]
    left = np.column_stack([vid(0, j + 1), vid(0, j)])[::-1]
    boundary_edges = np.vstack([bottom, right, top, left]).astype(np.int64)
    boundary_tags = np.concatenate([
        np.full(nx, TAGS.index("wall_bottom")),
        np.full(ny, TAGS.index("lateral_right")),
        np.full(nx, TAGS.index("wall_top")),
        np.full(ny, TAGS.index("lateral_left")),
    ])
    return Mesh(vertices, triangles, boundary_edges, boundary_tags, (Lx, Ly), (nx, ny))


def barycentric(mesh, tri, points):
    """Barycentric coordinates of ``points`` (n, 2) with respect to triangles ``tri`` (n,)."""
    p = mesh.vertices[mesh.triangles[tri]]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    r = points - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    l1 = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
    l2 = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
    return np.column_stack([1.0 - l1 - l2, l1, l2])


def _clamp_to_domain(mesh, pts):
    Lx, Ly = mesh.extents
    tol = LOCATE_TOL * max(Lx, Ly)
    outside = (
        (pts[:, 0] < -tol) | (pts[:, 0] > Lx + tol) | (pts[:, 1] < -tol) | (pts[:, 1] > Ly + tol)
    )
    if np.any(outside):
        bad = pts[np.argmax(outside)]
        raise NotFound(f"point ({bad[0]!r}, {bad[1]!r}) lies outside the mesh")
    return np.column_stack([np.clip(pts[:, 0], 0.0, Lx), np.clip(pts[:, 1], 0.0, Ly)])


def locate_points(mesh, points):
    """Vectorised point location on a mesh built by :func:`generate_rect_mesh`.

    Returns ``(tri, bary)`` with ``tri`` of shape (n,) and ``bary`` of shape (n, 3).
    Points up to ``1e-10`` (relative) outside the rectangle are clamped onto it.
    """
    pts = _clamp_to_domain(mesh, np.atleast_2d(np.asarray(points, dtype=float)))
    nx, ny = mesh.shape
    Lx, Ly = mesh.extents
    sx = pts[:, 0] / Lx * nx
    sy = pts[:, 1] / Ly * ny
    i = np.clip(np.floor(sx).astype(np.int64), 0, nx - 1)
    j = np.clip(np.floor(sy).astype(np.int64), 0, ny - 1)
    fx = sx - i
    fy = sy - j
    cell = j * nx + i
    tri = 2 * cell + (fy > fx)
    return tri, barycentric(mesh, tri, pts)


def locate_point(mesh, x):
    """Find the triangle containing ``x`` and its barycentric coordinates."""
    tri, bary = locate_points(mesh, np.asarray(x, dtype=float).reshape(1, 2))
    return int(tri[0]), bary[0]


def locate_point_bruteforce(mesh, x, tol=1e-12):
    """Reference implementation: scan every triangle."""
    pts = _clamp_to_domain(mesh, np.asarray(x, dtype=float).reshape(1, 2))
    n = mesh.n_triangles
    bary = barycentric(mesh, np.arange(n), np.repeat(pts, n, axis=0))
    inside = np.flatnonzero(np.all(bary >= -tol, axis=1))
    if inside.size == 0:
        raise NotFound(f"no triangle contains {tuple(pts[0])}")
    k = inside[0]
    return int(k), bary[k]
