"""Scalar functionals of discrete states: energies, dissipation, masses and flow measures."""

from dataclasses import dataclass, asdict, field
import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import constitutive as cst
from .assembly import strain_split
from .errors import InvalidArgument, NumericalFailure, NotFound, UndefinedDiagnostic
from .fem import tabulate

CSV_COLUMNS = (
    "time", "E_total", "E_kinetic", "E_mixing", "E_wall", "mass_rho", "mass_rhoc",
    "div_u_l2", "picard_iters", "picard_resid", "V_c", "contact_distance",
)

DISSIPATION_TERMS = (
    "viscous_shear", "viscous_dilational", "bulk_mobility", "wall_mobility",
    "wall_friction", "wall_input", "kinetic_increment", "body_force",
)


@dataclass
class DiagnosticsRecord:
    """Per-step scalars written to the diagnostics CSV."""

    time: float
    E_total: float
    E_kinetic: float
    E_mixing: float
    E_wall: float
    mass_rho: float
    mass_rhoc: float
    div_u_l2: float
    picard_iters: int = 0
    picard_resid: float = 0.0
    V_c: float = float("nan")
    contact_distance: float = 0.0
    dissipation: dict = field(default_factory=dict)

    def row(self):
        return [getattr(self, k) for k in CSV_COLUMNS]

    def as_dict(self):
        return asdict(self)


def _integrate(ctx, fn):
    """Sum of ``fn(sl, dphi, wq)`` over element chunks."""
    total = 0.0
    for sl in ctx.chunks():
        total += float(fn(sl, ctx.grads(sl), ctx.wq(sl)))
    return total


def total_energy(state, params, ctx):
    """Discrete total energy and its parts ``{"kinetic", "mixing", "wall"}``."""

    def kin(sl, dphi, wq):
        rho = cst.scheme_density(ctx.eval(state.c, sl), params)
        ux, uy = ctx.eval(state.u[0], sl), ctx.eval(state.u[1], sl)
        return np.sum(wq * 0.5 * rho * (ux * ux + uy * uy))

    def mix(sl, dphi, wq):
        c, gc = ctx.eval(state.c, sl, dphi)
        rho = cst.scheme_density(c, params)
        G, _ = cst.bulk_potential(c)
        return np.sum(wq * rho * (G / params.eps + 0.5 * params.eps * np.sum(gc * gc, -1))) / params.beta

    cw = ctx.wall_eval(state.c)
    fw, _ = cst.wall_energy(cw, params.theta_s)
    parts = {
        "kinetic": _integrate(ctx, kin),
        "mixing": _integrate(ctx, mix),
        "wall": params.alpha_w / params.beta * float(np.sum(ctx.w_wq * fw)),
    }
    return parts["kinetic"] + parts["mixing"] + parts["wall"], parts


def dissipation_terms(state_n, state_np1, params, ctx):
    """Signed energy changes over one step, one entry per mechanism.

    All terms already carry the factor ``dt``; their sum equals
    ``E(state_np1) - E(state_n)`` for a converged step. Every term is
    nonpositive except ``wall_input`` and ``body_force``.
    """
    dt, beta, Re, alpha = params.dt, params.beta, params.Re, params.alpha
    acc = dict.fromkeys(DISSIPATION_TERMS, 0.0)
    for sl in ctx.chunks():
        dphi = ctx.grads(sl)
        wq = ctx.wq(sl)
        cn = ctx.eval(state_n.c, sl)
        c1, gc1 = ctx.eval(state_np1.c, sl, dphi)
        rn = cst.scheme_density(cn, params)
        r1, dr1 = cst.scheme_density(c1, params, with_derivative=True)
        eta = cst.viscosity(cn, params)
        _, gux = ctx.eval(state_np1.u[0], sl, dphi)
        _, guy = ctx.eval(state_np1.u[1], sl, dphi)
        _, shear, dil = strain_split(gux, guy)
        acc["viscous_shear"] -= dt / Re * np.sum(wq * eta * shear)
        acc["viscous_dilational"] -= dt / Re * np.sum(wq * eta * dil)
        # mu_tilde = rho (m + alpha pi)
        s, gs = ctx.eval(state_np1.mu_bar + alpha * state_np1.p_bar, sl, dphi)
        gmt = r1[..., None] * gs + s[..., None] * dr1[..., None] * gc1
        acc["bulk_mobility"] -= dt / beta * params.M * np.sum(wq * np.sum(gmt * gmt, -1))
        du = [ctx.eval(state_np1.u[i] - state_n.u[i], sl) for i in range(2)]
        acc["kinetic_increment"] -= 0.5 * np.sum(wq * rn * (du[0] ** 2 + du[1] ** 2))
        gx, gy = params.gravity
        if gx or gy:
            u1 = [ctx.eval(state_np1.u[i], sl) for i in range(2)]
            acc["body_force"] += dt * np.sum(wq * r1 * (gx * u1[0] + gy * u1[1]))
    cn, dcn = ctx.wall_eval(state_n.c, deriv=True)
    c1, dc1 = ctx.wall_eval(state_np1.c, deriv=True)
    ux = ctx.wall_eval(state_np1.u[0])
    uw = ctx.wall_speed(params)[:, None]
    ls = cst.slip_length(cn, params)
    L = -((c1 - cn) / dt + ux * 0.5 * (dc1 + dcn)) / params.M_Gamma
    us = ux - uw
    acc["wall_mobility"] = -dt / beta * params.M_Gamma * float(np.sum(ctx.w_wq * L * L))
    acc["wall_friction"] = -dt * float(np.sum(ctx.w_wq * us * us / (Re * ls)))
    acc["wall_input"] = -dt * float(np.sum(ctx.w_wq * us * uw / (Re * ls)))
    return {k: float(v) for k, v in acc.items()}


def energy_balance(state_n, state_np1, params, ctx):
    """``E(n+1) - E(n) - sum(dissipation_terms)``; zero for an exactly solved step."""
    e0, _ = total_energy(state_n, params, ctx)
    e1, _ = total_energy(state_np1, params, ctx)
    terms = dissipation_terms(state_n, state_np1, params, ctx)
    return (e1 - e0) - sum(terms.values()), terms


def masses(state, params, ctx):
    """Total mass and phase-1 mass ``(int rho, int rho c)``."""
    m0 = m1 = 0.0
    for sl in ctx.chunks():
        wq = ctx.wq(sl)
        c = ctx.eval(state.c, sl)
        rho = cst.scheme_density(c, params)
        m0 += float(np.sum(wq * rho))
        m1 += float(np.sum(wq * rho * c))
    return m0, m1


def _mass_factor(ctx):
    """Cached LU factors of the consistent mass matrix of ``ctx``."""
    lu = getattr(ctx, "_mass_lu", None)
    if lu is None:
        cd = ctx.cell_dofs
        nl = cd.shape[1]
        wq = ctx.wq(slice(None))
        local = np.einsum("tq,qa,qb->tab", wq, ctx.phi, ctx.phi)
        rows = np.repeat(cd, nl, axis=1).ravel()
        cols = np.tile(cd, (1, nl)).ravel()
        M = sp.csc_matrix((local.ravel(), (rows, cols)), shape=(ctx.n, ctx.n))
        lu = spla.splu(M)
        ctx._mass_lu = lu
    return lu


def _div_load(state, ctx):
    r = np.zeros(ctx.n)
    for sl in ctx.chunks():
        dphi = ctx.grads(sl)
        wq = ctx.wq(sl)
        _, gx = ctx.eval(state.u[0], sl, dphi)
        _, gy = ctx.eval(state.u[1], sl, dphi)
        d = (gx[..., 0] + gy[..., 1]) * wq
        r += np.bincount(ctx.cell_dofs[sl].ravel(), weights=(d @ ctx.phi).ravel(), minlength=ctx.n)
    return r


def divergence_field(state, ctx):
    """Coefficients of the discrete divergence: the L2 projection of div u onto V_h.

    This is the divergence the continuity equation acts on; it vanishes up to
    the solver tolerance when both phases have equal density.
    """
    return _mass_factor(ctx).solve(_div_load(state, ctx))


def div_u_l2(state, ctx):
    """L2 norm of the discrete divergence :func:`divergence_field`."""
    r = _div_load(state, ctx)
    d = _mass_factor(ctx).solve(r)
    return math.sqrt(max(float(d @ r), 0.0))


def div_u_l2_pointwise(state, ctx):
    """L2 norm of the elementwise divergence of u (includes components orthogonal to V_h)."""

    def f(sl, dphi, wq):
        _, gx = ctx.eval(state.u[0], sl, dphi)
        _, gy = ctx.eval(state.u[1], sl, dphi)
        d = gx[..., 0] + gy[..., 1]
        return np.sum(wq * d * d)

    return math.sqrt(max(_integrate(ctx, f), 0.0))


def div_u_band_fraction(state, ctx, lo=0.05, hi=0.95):
    """Share of the squared discrete-divergence norm carried where ``lo < c < hi``."""
    dcoef = divergence_field(state, ctx)
    inside = total = 0.0
    for sl in ctx.chunks():
        wq = ctx.wq(sl)
        c = ctx.eval(state.c, sl)
        d2 = wq * ctx.eval(dcoef, sl) ** 2
        total += float(np.sum(d2))
        inside += float(np.sum(d2[(c > lo) & (c < hi)]))
    if total == 0.0:
        return 1.0
    return inside / total


def rising_velocity(state, ctx, tol=1e-14):
    """``V_c = int u_y c / int c``; raises UndefinedDiagnostic when ``int c`` vanishes."""
    num = den = 0.0
    for sl in ctx.chunks():
        wq = ctx.wq(sl)
        c = ctx.eval(state.c, sl)
        uy = ctx.eval(state.u[1], sl)
        num += float(np.sum(wq * uy * c))
        den += float(np.sum(wq * c))
    if den <= tol * ctx.mesh.area:
        raise UndefinedDiagnostic("rising velocity undefined: phase 1 has vanishing volume")
    return num / den


def contact_distance(state, ctx, wall="wall_bottom", level=0.5):
    """Distance between the outermost crossings of ``c = level`` along a wall.

    Uses vertex values and linear interpolation along the wall; returns 0 when
    fewer than two crossings exist (detached droplet).
    """
    mesh = ctx.mesh
    eids = mesh.edges_with_tag(wall)
    verts = np.unique(mesh.boundary_edges[eids])
    x = mesh.vertices[verts, 0]
    order = np.argsort(x)
    x = x[order]
    c = np.asarray(state.c)[verts][order] - level
    s = np.sign(c)
    idx = np.flatnonzero(s[:-1] * s[1:] < 0)
    cross = list(x[idx] - c[idx] * (x[idx + 1] - x[idx]) / (c[idx + 1] - c[idx]))
    cross += list(x[c == 0.0])
    if len(cross) < 2:
        return 0.0
    return float(max(cross) - min(cross))


def l2_error(coarse, coarse_ctx, reference, ref_ctx, fields=("u_x", "u_y", "c")):
    """L2 distance per field, evaluating the coarse state at reference quadrature points."""
    getters = {
        "c": lambda s: s.c,
        "u_x": lambda s: s.u[0],
        "u_y": lambda s: s.u[1],
    }
    for f in fields:
        if f not in getters:
            raise InvalidArgument(f"unknown field {f!r}")
    if tuple(coarse_ctx.mesh.extents) != tuple(ref_ctx.mesh.extents):
        raise InvalidArgument("coarse and reference meshes cover different domains")
    acc = dict.fromkeys(fields, 0.0)
    if coarse_ctx is ref_ctx:
        for sl in ref_ctx.chunks():
            wq = ref_ctx.wq(sl)
            for f in fields:
                d = ref_ctx.eval(getters[f](coarse) - getters[f](reference), sl)
                acc[f] += float(np.sum(wq * d * d))
        return {f: math.sqrt(v) for f, v in acc.items()}
    for sl in ref_ctx.chunks():
        wq = ref_ctx.wq(sl)
        pts = ref_ctx.quad_points(sl).reshape(-1, 2)
        try:
            tri, bary = _locate(coarse_ctx, pts)
        except NotFound as exc:
            raise NumericalFailure(f"cross-mesh evaluation failed: {exc}") from exc
        vals, _ = tabulate(coarse_ctx.space.degree, bary)
        dofs = coarse_ctx.cell_dofs[tri]
        for f in fields:
            cv = np.einsum("na,na->n", vals, getters[f](coarse)[dofs]).reshape(wq.shape)
            rv = ref_ctx.eval(getters[f](reference), sl)
            acc[f] += float(np.sum(wq * (cv - rv) ** 2))
    return {f: math.sqrt(v) for f, v in acc.items()}


def _locate(ctx, pts):
    from .mesh import locate_points
    return locate_points(ctx.mesh, pts)


def convergence_rate(errs):
    """Observed orders ``ln(e[i-1]/e[i]) / ln(h[i-1]/h[i])`` for a list of ``(h, err)``."""
    errs = [(float(h), float(e)) for h, e in errs]
    if len(errs) < 2:
        raise InvalidArgument("need at least two (h, err) pairs")
    for h, e in errs:
        if not (e > 0 and h > 0):
            raise InvalidArgument(f"errors and mesh sizes must be positive, got ({h}, {e})")
    for (h0, _), (h1, _) in zip(errs, errs[1:]):
        if not h1 < h0:
            raise InvalidArgument("mesh sizes must be strictly decreasing")
    return [math.log(e0 / e1) / math.log(h0 / h1) for (h0, e0), (h1, e1) in zip(errs, errs[1:])]


def record(state, params, ctx, stats=None, previous=None):
    """Build the DiagnosticsRecord of ``state``; ``previous`` adds the dissipation breakdown."""
    e, parts = total_energy(state, params, ctx)
    m0, m1 = masses(state, params, ctx)
    try:
        vc = rising_velocity(state, ctx)
    except UndefinedDiagnostic:
        vc = float("nan")
    rec = DiagnosticsRecord(
        time=state.time, E_total=e, E_kinetic=parts["kinetic"], E_mixing=parts["mixing"],
        E_wall=parts["wall"], mass_rho=m0, mass_rhoc=m1, div_u_l2=div_u_l2(state, ctx),
        picard_iters=0 if stats is None else stats.iterations,
        picard_resid=0.0 if stats is None else stats.residual,
        V_c=vc, contact_distance=contact_distance(state, ctx),
    )
    if previous is not None:
        rec.dissipation = dissipation_terms(previous, state, params, ctx)
    return rec
