"""Assembly of the coupled (c, mu_bar, u, p_bar) system for one Picard iteration.

Representation
--------------
All four fields use the same continuous Lagrange space ``V_h``. The phase field
``c`` and the velocity components are plain ``V_h`` functions. The two
potential-like fields are stored through density-weighted coefficients::

    mu_bar_h = rho(c_h) * sum_i m_i phi_i,    p_bar_h = rho(c_h) * sum_i pi_i phi_i

and the concentration and pressure equations are tested with ``rho(c_h) * V_h``.
Because ``1/rho`` is affine in ``c``, the constants and ``rho c`` both lie in
``rho(c_h) V_h``, so the per-phase mass identities and the discrete energy law
both hold at the quadrature level once the Picard loop has converged.
Inside a Picard iteration the weight is ``rho`` of the latest iterate.

Unknown vector layout: ``[c, m, u_x, u_y, pi]`` each of length ``n_dofs``; the
mean-value constraint on ``p_bar`` adds one Lagrange multiplier at the end.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import os

import numpy as np
import scipy.sparse as sp

from . import constitutive as cst
from .errors import InvalidArgument, NumericalFailure
from .fem import FunctionSpace, LOCAL_EDGES, quadrature, tabulate
from .mesh import LATERAL_TAGS, TAGS, WALL_TAGS

FIELDS = ("c", "mu_bar", "u_x", "u_y", "p_bar")
C, MU, UX, UY, P = range(5)

RESIDUAL_SCALE_FLOOR = 1e-6
CHUNK = 16384  # elements per assembly chunk; fixed so results never depend on worker count


def _n_workers():
    try:
        return max(1, int(os.environ.get("QNSCH_THREADS", "1")))
    except ValueError:
        return 1


# ------------------------------------------------------------------ state

@dataclass(frozen=True)
class FieldState:
    """Coefficient vectors of one time level.

    ``mu_bar`` and ``p_bar`` hold the density-weighted coefficients described in
    the module docstring; use :meth:`Discretization.mu_bar_values` and friends
    to obtain the physical fields.
    """

    time: float
    c: np.ndarray
    mu_bar: np.ndarray
    u: np.ndarray  # shape (2, n)
    p_bar: np.ndarray

    def __post_init__(self):
        n = len(self.c)
        for name in ("mu_bar", "p_bar"):
            if len(getattr(self, name)) != n:
                raise InvalidArgument(f"{name} has length {len(getattr(self, name))}, expected {n}")
        if np.shape(self.u) != (2, n):
            raise InvalidArgument(f"u has shape {np.shape(self.u)}, expected (2, {n})")

    @property
    def n(self):
        return len(self.c)

    def vector(self):
        return np.concatenate([self.c, self.mu_bar, self.u[0], self.u[1], self.p_bar])

    @classmethod
    def from_vector(cls, time, x, n):
        x = np.asarray(x)
        return cls(float(time), x[:n].copy(), x[n:2 * n].copy(),
                   np.vstack([x[2 * n:3 * n], x[3 * n:4 * n]]), x[4 * n:5 * n].copy())

    def is_finite(self):
        return bool(np.all(np.isfinite(self.vector())))


@dataclass
class BlockSystem:
    """Sparse system over ``[c, m, u_x, u_y, pi]`` (plus the gauge multiplier once gauged).

    Attributes
    ----------
    matrix : scipy sparse matrix
    rhs : right-hand side
    n : dofs per field
    gauge : vector ``b`` with ``b @ pi = integral of p_bar``
    gauged : whether the multiplier row and column are present
    dirichlet : indices of rows replaced by essential conditions
    """

    matrix: sp.spmatrix
    rhs: np.ndarray
    n: int
    gauge: np.ndarray
    dirichlet: np.ndarray
    gauged: bool = False
    info: dict = field(default_factory=dict)

    def field_slice(self, k):
        return slice(k * self.n, (k + 1) * self.n)


# --------------------------------------------------------- discretization

class Discretization:
    """Mesh, function space, quadrature and the fixed sparsity pattern.

    Parameters
    ----------
    mesh : Mesh
    order : "P1" or "P2"
    degree : triangle quadrature degree (default 5)
    edge_degree : edge quadrature degree (default 5, i.e. 3-point Gauss)
    """

    def __init__(self, mesh, order="P1", degree=5, edge_degree=5):
        self.mesh = mesh
        self.space = FunctionSpace(mesh, order)
        self.order = self.space.order
        self.n = self.space.n_dofs
        self.rule = quadrature("triangle", degree)
        self.erule = quadrature("edge", edge_degree)
        self.phi, self.ref_dphi = tabulate(self.space.degree, self.rule.points)
        self.cell_dofs = self.space.cell_dofs
        self.det = self.space.emap.det
        self.inv_t = self.space.emap.inv_t
        self._build_pattern()
        self._build_walls()
        self._build_dirichlet()

    # -- geometry helpers

    def grads(self, sl):
        """Physical basis gradients on element slice ``sl``: (nt, nq, nloc, 2)."""
        return np.einsum("tij,qaj->tqai", self.inv_t[sl], self.ref_dphi)

    def wq(self, sl):
        return self.det[sl, None] * self.rule.weights[None, :]

    def chunks(self):
        nt = self.mesh.n_triangles
        return [slice(s, min(s + CHUNK, nt)) for s in range(0, nt, CHUNK)]

    def quad_points(self, sl=slice(None)):
        return self.space.emap.to_physical(self.rule.points)[sl]

    def eval(self, coeffs, sl, dphi=None):
        """Values (nt, nq) and, if ``dphi`` is given, gradients (nt, nq, 2)."""
        loc = np.asarray(coeffs)[self.cell_dofs[sl]]
        v = loc @ self.phi.T
        if dphi is None:
            return v
        return v, np.einsum("tqai,ta->tqi", dphi, loc)

    # -- sparsity

    def _build_pattern(self):
        n, cd = self.n, self.cell_dofs
        nl = cd.shape[1]
        rows = np.repeat(cd, nl, axis=1).ravel()
        cols = np.tile(cd, (1, nl)).ravel()
        keys = np.unique(rows.astype(np.int64) * n + cols)
        pr, pc = keys // n, keys % n
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, pr + 1, 1)
        indptr = np.cumsum(indptr)
        self.p_indptr, self.p_indices = indptr, pc
        self.nnz = len(keys)
        self.loc_pos = np.searchsorted(keys, rows.astype(np.int64) * n + cols).reshape(-1, nl, nl)
        # full 5x5 block layout: block (i, j) entries of scalar row r sit at
        # i*5*nnz + 4*indptr[r] + j*rowlen[r] + (scalar position)
        rowlen = np.diff(indptr)
        prow = np.repeat(np.arange(n), rowlen)
        self._base = 4 * indptr[prow] + np.arange(self.nnz)
        self._rowlen = rowlen[prow]
        ind = np.empty(25 * self.nnz, dtype=np.int64)
        for i in range(5):
            for j in range(5):
                ind[self.block_pos(i, j)] = j * n + pc
        self.f_indices = ind
        starts = np.concatenate([i * 5 * self.nnz + 5 * indptr[:-1] for i in range(5)])
        self.f_indptr = np.append(starts, 25 * self.nnz)
        self.f_rows = np.repeat(np.arange(5 * n), np.diff(self.f_indptr))

    def block_pos(self, i, j):
        return i * 5 * self.nnz + self._base + j * self._rowlen

    # -- walls

    def _build_walls(self):
        mesh, space = self.mesh, self.space
        eids = mesh.edges_with_tag(*WALL_TAGS)
        tri = space.boundary_triangles[eids]
        loc = space.boundary_local_edges[eids]
        t = self.erule.points
        nqe = len(t)
        bary = np.zeros((len(eids), nqe, 3))
        a = np.array([e[0] for e in LOCAL_EDGES])[loc]
        b = np.array([e[1] for e in LOCAL_EDGES])[loc]
        rows = np.arange(len(eids))[:, None]
        bary[rows, np.arange(nqe)[None, :], a[:, None]] = 1.0 - t[None, :]
        bary[rows, np.arange(nqe)[None, :], b[:, None]] = t[None, :]
        vals, rgrads = tabulate(space.degree, bary.reshape(-1, 3))
        nl = space.n_local
        self.w_phi = vals.reshape(len(eids), nqe, nl)
        g = np.einsum("eij,eqaj->eqai", self.inv_t[tri], rgrads.reshape(len(eids), nqe, nl, 2))
        self.w_dxphi = g[..., 0]
        ends = mesh.vertices[mesh.boundary_edges[eids]]
        length = np.linalg.norm(ends[:, 1] - ends[:, 0], axis=1)
        self.w_wq = length[:, None] * self.erule.weights[None, :]
        self.w_tri = tri
        self.w_dofs = self.cell_dofs[tri]
        self.w_pos = self.loc_pos[tri]
        tags = np.array(TAGS)[mesh.boundary_tags[eids]]
        self.w_tags = tags
        self.wall_length = float(length.sum())

    def wall_speed(self, params):
        return np.array([params.wall_velocity[str(t)] for t in self.w_tags])

    def wall_eval(self, coeffs, deriv=False):
        loc = np.asarray(coeffs)[self.w_dofs]
        v = np.einsum("eqa,ea->eq", self.w_phi, loc)
        if not deriv:
            return v
        return v, np.einsum("eqa,ea->eq", self.w_dxphi, loc)

    # -- essential conditions

    def _build_dirichlet(self):
        n = self.n
        wall = self.space.boundary_dofs(*WALL_TAGS)
        lateral = self.space.boundary_dofs(*LATERAL_TAGS)
        self.dir_ux = lateral
        self.dir_uy = wall
        rows = np.concatenate([UX * n + lateral, UY * n + wall])
        self.dirichlet = np.sort(rows)
        isdir = np.zeros(5 * n, dtype=bool)
        isdir[self.dirichlet] = True
        self._dir_mask = isdir[self.f_rows]
        self._dir_diag = np.flatnonzero(self._dir_mask & (self.f_indices == self.f_rows))

    # -- physical fields

    def zero_state(self, time=0.0):
        z = np.zeros(self.n)
        return FieldState(time, z.copy(), z.copy(), np.zeros((2, self.n)), z.copy())

    def check_state(self, state):
        if state.n != self.n:
            raise InvalidArgument(f"state has {state.n} dofs per field, space has {self.n}")

    def weighted_nodal(self, state, coeffs, params):
        """Nodal values of ``rho(c) * coeffs`` (exact at the Lagrange nodes)."""
        return cst.scheme_density(state.c, params) * coeffs

    def mu_bar_nodal(self, state, params):
        return self.weighted_nodal(state, state.mu_bar, params)

    def p_bar_nodal(self, state, params):
        return self.weighted_nodal(state, state.p_bar, params)


# ---------------------------------------------------------- local kernels

def _mass(K, wq, Ti, Tj):
    """sum_q wq K Ti[a] Tj[b] -> (nt, nloc, nloc); Ti, Tj broadcast to (nt, nq, nloc)."""
    A = (K * wq)[..., None] * Ti
    Tj = np.broadcast_to(Tj, A.shape[:2] + (Tj.shape[-1],))
    return np.matmul(A.transpose(0, 2, 1), Tj)


def _grad(K, wq, Gi, Gj):
    """sum_q wq K grad Ti[a] . grad Tj[b] for gradient arrays (nt, nq, nloc, 2)."""
    A = (K * wq)[..., None, None] * Gi
    nt, nq, nl, _ = A.shape
    A = A.transpose(0, 2, 1, 3).reshape(nt, nl, 2 * nq)
    B = Gj.transpose(0, 1, 3, 2).reshape(nt, 2 * nq, nl)
    return np.matmul(A, B)


def _load(F, wq, Ti):
    """sum_q wq F Ti[a] -> (nt, nloc)."""
    return np.einsum("tq,tqa->ta", F * wq, np.broadcast_to(Ti, F.shape + (Ti.shape[-1],)))


def _edge_mass(K, wq, Ti, Tj):
    A = (K * wq)[..., None] * Ti
    return np.matmul(A.transpose(0, 2, 1), Tj)


class _Accumulator:
    def __init__(self, ctx):
        self.ctx = ctx
        self.blocks = {}
        self.loads = np.zeros((5, ctx.n))

    def add(self, i, j, local, pos):
        data = np.bincount(pos.ravel(), weights=local.ravel(), minlength=self.ctx.nnz)
        if (i, j) in self.blocks:
            self.blocks[(i, j)] += data
        else:
            self.blocks[(i, j)] = data

    def load(self, i, local, dofs):
        self.loads[i] += np.bincount(dofs.ravel(), weights=local.ravel(), minlength=self.ctx.n)

    def merge(self, other):
        for k, v in other.blocks.items():
            if k in self.blocks:
                self.blocks[k] += v
            else:
                self.blocks[k] = v.copy()
        self.loads += other.loads


def _check_finite(name, arr, ctx, sl):
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        tri = (sl.start or 0) + int(bad[0])
        xy = ctx.mesh.vertices[ctx.mesh.triangles[tri]].mean(axis=0)
        raise NumericalFailure(f"non-finite {name} in triangle {tri} near ({xy[0]:.6g}, {xy[1]:.6g})")


def _bulk_chunk(ctx, sl, sn, sk, params):
    """Local contributions of the element slice ``sl``."""
    acc = _Accumulator(ctx)
    dt, eps, beta, Re, M, alpha = params.dt, params.eps, params.beta, params.Re, params.M, params.alpha
    dphi = ctx.grads(sl)
    wq = ctx.wq(sl)
    phi = ctx.phi[None]
    pos = ctx.loc_pos[sl]
    dofs = ctx.cell_dofs[sl]

    cn, gcn = ctx.eval(sn.c, sl, dphi)
    ck, gck = ctx.eval(sk.c, sl, dphi)
    unx, uny = ctx.eval(sn.u[0], sl), ctx.eval(sn.u[1], sl)
    ukx, uky = ctx.eval(sk.u[0], sl), ctx.eval(sk.u[1], sl)
    mk = ctx.eval(sk.mu_bar, sl)
    for name, arr in (("c", ck), ("c^n", cn), ("u", ukx), ("u", uky), ("mu_bar", mk)):
        _check_finite(name, arr, ctx, sl)

    rn = cst.scheme_density(cn, params)
    rk, drk = cst.scheme_density(ck, params, with_derivative=True)
    rh = 0.5 * (rk + rn)
    eta = cst.viscosity(cn, params) / Re

    # density-weighted basis rho_k * phi and its gradient
    W = rk[..., None] * phi
    grk = drk[..., None] * gck
    dW = rk[..., None, None] * dphi + phi[..., None] * grk[:, :, None, :]

    # concentration row, tested with W
    adv_k = np.einsum("tq,tqa->tqa", ukx, dphi[..., 0]) + np.einsum("tq,tqa->tqa", uky, dphi[..., 1])
    acc.add(C, C, _mass(rn / dt, wq, W, phi) + _mass(rk, wq, W, adv_k), pos)
    Kmob = _grad(np.full_like(wq, M), wq, dW, dW)
    acc.add(C, MU, Kmob, pos)
    acc.add(C, P, alpha * Kmob, pos)
    acc.add(C, UX, _mass(rk * gck[..., 0], wq, W, phi), pos)
    acc.add(C, UY, _mass(rk * gck[..., 1], wq, W, phi), pos)
    adv_c = ukx * gck[..., 0] + uky * gck[..., 1]
    acc.load(C, _load(rn * cn / dt + rk * adv_c, wq, W), dofs)

    # chemical potential row, tested with phi
    Gk, _ = cst.bulk_potential(ck)
    Gn, _ = cst.bulk_potential(cn)
    g = cst.g_discrete(ck, cn)
    g1 = cst.g_discrete_d1(ck, cn)
    Fh = 0.5 * ((Gk + Gn) / eps + 0.5 * eps * (np.sum(gck ** 2, -1) + np.sum(gcn ** 2, -1)))
    acc.add(MU, MU, _mass(rn, wq, phi, W), pos)
    acc.add(MU, C, _mass(-rh * g1 / eps, wq, phi, phi) + _grad(-0.5 * eps * rh, wq, dphi, dphi), pos)
    f_mu = _load(rh * (g - g1 * ck) / eps - alpha * rn * rk * Fh, wq, phi)
    f_mu += np.einsum("tq,tqi,tqai->ta", 0.5 * eps * rh * wq, gcn, dphi)
    acc.load(MU, f_mu, dofs)

    # momentum rows, tested with phi
    dx, dy = dphi[..., 0], dphi[..., 1]
    adv_n = unx[..., None] * dx + uny[..., None] * dy
    mass_u = _mass(0.5 * (rn + rk) / dt, wq, phi, phi)
    conv = 0.5 * (_mass(rn, wq, phi, adv_n) - _mass(rn, wq, adv_n, phi))
    one = np.ones_like(wq)
    xx, yy = _mass(eta, wq, dx, dx), _mass(eta, wq, dy, dy)
    acc.add(UX, UX, mass_u + conv + 4.0 / 3.0 * xx + yy, pos)
    acc.add(UY, UY, mass_u + conv + xx + 4.0 / 3.0 * yy, pos)
    acc.add(UX, UY, _mass(eta, wq, dy, dx) - 2.0 / 3.0 * _mass(eta, wq, dx, dy), pos)
    acc.add(UY, UX, _mass(eta, wq, dx, dy) - 2.0 / 3.0 * _mass(eta, wq, dy, dx), pos)
    acc.add(UX, P, _mass(one / beta, wq, phi, dW[..., 0]), pos)
    acc.add(UY, P, _mass(one / beta, wq, phi, dW[..., 1]), pos)
    rk2 = rk * rk / beta
    acc.add(UX, MU, _mass(-rk2 * gck[..., 0], wq, phi, phi), pos)
    acc.add(UY, MU, _mass(-rk2 * gck[..., 1], wq, phi, phi), pos)
    acc.add(UX, C, _mass(-rk2 * mk, wq, phi, dx), pos)
    acc.add(UY, C, _mass(-rk2 * mk, wq, phi, dy), pos)
    gx, gy = params.gravity
    acc.load(UX, _load(rn * unx / dt - rk2 * mk * gck[..., 0] + rk * gx, wq, phi), dofs)
    acc.load(UY, _load(rn * uny / dt - rk2 * mk * gck[..., 1] + rk * gy, wq, phi), dofs)

    # pressure row, tested with W
    acc.add(P, UX, -_mass(one, wq, dW[..., 0], phi), pos)
    acc.add(P, UY, -_mass(one, wq, dW[..., 1], phi), pos)
    acc.add(P, MU, alpha * Kmob, pos)
    acc.add(P, P, alpha * alpha * Kmob, pos)

    # gauge vector: integral of rho_k phi_i
    acc.gauge = np.bincount(dofs.ravel(), weights=_load(one, wq, W).ravel(), minlength=ctx.n)
    return acc


def _wall_terms(ctx, acc, sn, sk, params):
    dt, beta, Re, MG, aw = params.dt, params.beta, params.Re, params.M_Gamma, params.alpha_w
    phi, dxphi, wq, pos, dofs = ctx.w_phi, ctx.w_dxphi, ctx.w_wq, ctx.w_pos, ctx.w_dofs
    cn, dcn = ctx.wall_eval(sn.c, deriv=True)
    ck, dck = ctx.wall_eval(sk.c, deriv=True)
    ukx = ctx.wall_eval(sk.u[0])
    uw = ctx.wall_speed(params)[:, None] * np.ones_like(wq)
    ls = cst.slip_length(cn, params)
    a = 0.5 * (dck + dcn)
    q = cst.fw_quotient(ck, cn, params.theta_s, params.fw_quotient_threshold)
    q1 = cst.fw_quotient_d1(ck, cn, params.theta_s)
    L0 = (cn / dt + 0.5 * ukx * dck) / MG

    # chemical potential row: + int (L - alpha_w q) chi over the walls
    acc.add(MU, C, _edge_mass(-1.0 / (MG * dt) - aw * q1, wq, phi, phi)
            + _edge_mass(-0.5 * ukx / MG, wq, phi, dxphi), pos)
    acc.add(MU, UX, _edge_mass(-a / MG, wq, phi, phi), pos)
    acc.load(MU, np.einsum("eq,eqa->ea", wq * (-L0 + aw * (q - q1 * ck)), phi), dofs)

    # tangential momentum: friction and uncompensated Young stress
    acc.add(UX, UX, _edge_mass(1.0 / (Re * ls) + a * a / (beta * MG), wq, phi, phi), pos)
    acc.add(UX, C, _edge_mass(a / (beta * MG * dt), wq, phi, phi)
            + _edge_mass(0.5 * a * ukx / (beta * MG), wq, phi, dxphi), pos)
    acc.load(UX, np.einsum("eq,eqa->ea", wq * (uw / (Re * ls) + L0 * a / beta), phi), dofs)


def _accumulate(ctx, state_n, iterate, params, walls=True):
    chunks = ctx.chunks()
    workers = min(_n_workers(), len(chunks))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(lambda sl: _bulk_chunk(ctx, sl, state_n, iterate, params), chunks))
    else:
        parts = [_bulk_chunk(ctx, sl, state_n, iterate, params) for sl in chunks]
    acc = parts[0]
    for other in parts[1:]:
        acc.merge(other)
        acc.gauge = acc.gauge + other.gauge
    if walls:
        _wall_terms(ctx, acc, state_n, iterate, params)
    return acc


def assemble(state_n, iterate, params, ctx, walls=True):
    """Linearized system whose solution is the next Picard iterate.

    Coefficients are frozen at ``iterate``; bilinear couplings (transport of c,
    capillary force, wall transport) are expanded to first order about it, and
    ``g`` and the wall-energy quotient are linearized in their first argument.
    At a fixed point the fully nonlinear scheme is satisfied. ``walls=False``
    drops the slip and wall-relaxation terms, leaving homogeneous natural
    conditions on the walls.
    """
    ctx.check_state(state_n)
    ctx.check_state(iterate)
    acc = _accumulate(ctx, state_n, iterate, params, walls)
    data = np.zeros(25 * ctx.nnz)
    for (i, j), block in acc.blocks.items():
        data[ctx.block_pos(i, j)] = block
    rhs = acc.loads.ravel().copy()
    # essential conditions u.n = 0
    data[ctx._dir_mask] = 0.0
    data[ctx._dir_diag] = 1.0
    rhs[ctx.dirichlet] = 0.0
    n5 = 5 * ctx.n
    A = sp.csr_matrix((data, ctx.f_indices, ctx.f_indptr), shape=(n5, n5))
    return BlockSystem(A, rhs, ctx.n, acc.gauge, ctx.dirichlet)


def apply_gauge(system):
    """Append the multiplier enforcing ``integral of p_bar = 0``.

    The multiplier column enters the pressure rows only; at an exact solution
    the multiplier vanishes because those rows annihilate the constant mode.
    """
    if system.gauged:
        return system
    n = system.n
    n5 = 5 * n
    A = sp.csr_matrix(system.matrix)
    indptr = A.indptr.astype(np.int64)
    # one extra entry (last column) per pressure row; explicit zeros are kept
    # so the pattern never depends on values
    extra = np.zeros(n5 + 1, dtype=np.int64)
    extra[P * n + 1:] = np.arange(1, n + 1)
    new_indptr = np.empty(n5 + 2, dtype=np.int64)
    new_indptr[:-1] = indptr + extra
    new_indptr[-1] = new_indptr[-2] + n
    nnz = new_indptr[-1]
    data = np.empty(nnz)
    indices = np.empty(nnz, dtype=np.int64)
    rows = np.repeat(np.arange(n5), np.diff(indptr))
    dest = np.arange(len(A.data)) + extra[rows]
    data[dest] = A.data
    indices[dest] = A.indices
    tail = new_indptr[P * n + 1:n5 + 1] - 1
    data[tail] = system.gauge
    indices[tail] = n5
    data[new_indptr[n5]:] = system.gauge
    indices[new_indptr[n5]:] = np.arange(P * n, n5)
    A = sp.csr_matrix((data, indices, new_indptr), shape=(n5 + 1, n5 + 1))
    rhs = np.append(system.rhs, 0.0)
    return BlockSystem(A, rhs, n, system.gauge, system.dirichlet, gauged=True, info=dict(system.info))


def residual(state_n, iterate, params, ctx, system=None):
    """Nonlinear residual of the scheme at ``iterate``.

    Returns ``(F, scaled)`` where ``F = A(X) X - f(X)`` over the five fields and
    ``scaled`` is the largest per-field ratio ``max|F| / max(|A||X| + |f|)``, the
    denominator floored at ``RESIDUAL_SCALE_FLOOR`` times the larger of its
    largest entry over all fields and the largest row sum of ``|A|``.
    """
    if system is None:
        system = assemble(state_n, iterate, params, ctx)
    x = iterate.vector()
    A = system.matrix
    F = A @ x - system.rhs
    absA = abs(A)
    ref = absA @ np.abs(x) + np.abs(system.rhs)
    scaled = 0.0
    n = ctx.n
    # a field whose whole row scale sits at roundoff relative to the system is not measured on
    # its own; the unit-state response keeps the floor meaningful when x and f both vanish
    floor = RESIDUAL_SCALE_FLOOR * max(ref.max(), (absA @ np.ones(A.shape[1])).max())
    for k in range(5):
        s = slice(k * n, (k + 1) * n)
        den = max(ref[s].max(), floor)
        num = np.abs(F[s]).max()
        if num > 0:
            scaled = max(scaled, num / den if den > 0 else np.inf)
    return F, scaled


# --------------------------------------------------- viscous identity check

def strain_split(gux, guy):
    """Both sides of the viscous dissipation identity at quadrature points.

    ``gux``, ``guy`` are gradients (..., 2) of the velocity components. The
    planar field is embedded in three dimensions with ``u_3 = 0`` and no
    dependence on ``x_3``, so the pair sums run over (1,2), (1,3), (2,3).
    """
    a, b = gux[..., 0], guy[..., 1]
    s = gux[..., 1] + guy[..., 0]
    div = a + b
    lhs = 2 * a * a + 2 * b * b + s * s - 2.0 / 3.0 * div * div
    shear = s * s
    dil = 2.0 / 3.0 * ((a - b) ** 2 + a * a + b * b)
    return lhs, shear, dil


def dissipation_identity_check(u, ctx, weight=None):
    """Integrate both sides of the viscous tensor identity for the velocity ``u`` (2, n).

    Returns ``(lhs, rhs)`` computed with the assembly quadrature.
    """
    u = np.asarray(u)
    lhs = rhs = 0.0
    for sl in ctx.chunks():
        dphi = ctx.grads(sl)
        wq = ctx.wq(sl)
        _, gx = ctx.eval(u[0], sl, dphi)
        _, gy = ctx.eval(u[1], sl, dphi)
        l, sh, dl = strain_split(gx, gy)
        w = wq if weight is None else wq * weight(sl)
        lhs += float(np.sum(w * l))
        rhs += float(np.sum(w * (sh + dl)))
    return lhs, rhs


def viscous_form(u, v, ctx, params, c=None):
    """Assembled viscous bilinear form ``a(u, v)`` evaluated directly (for cross-checks)."""
    total = 0.0
    for sl in ctx.chunks():
        dphi = ctx.grads(sl)
        wq = ctx.wq(sl)
        eta = np.ones_like(wq) / params.Re if c is None else cst.viscosity(ctx.eval(c, sl), params) / params.Re
        _, gux = ctx.eval(u[0], sl, dphi)
        _, guy = ctx.eval(u[1], sl, dphi)
        _, gvx = ctx.eval(v[0], sl, dphi)
        _, gvy = ctx.eval(v[1], sl, dphi)
        Du = np.stack([gux, guy], axis=-2)  # [..., i, j] = d_j u_i
        Dv = np.stack([gvx, gvy], axis=-2)
        sym = Du + np.swapaxes(Du, -1, -2)
        t = np.sum(sym * Dv, axis=(-1, -2)) - 2.0 / 3.0 * np.trace(Du, axis1=-2, axis2=-1) * np.trace(Dv, axis1=-2, axis2=-1)
        total += float(np.sum(wq * eta * t))
    return total
