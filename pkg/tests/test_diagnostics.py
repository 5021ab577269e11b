import math

import numpy as np
import pytest
import sympy as sy
from scipy import integrate

from qnsch import constitutive as cst
from qnsch import diagnostics as dg
from qnsch.assembly import Discretization, FieldState
from qnsch.errors import InvalidArgument, UndefinedDiagnostic
from qnsch.fem import quadrature
from qnsch.mesh import generate_rect_mesh
from qnsch.scenarios import TanhBand, Uniform, preset
from qnsch.timestepper import advance, initialize_state


def ctx_for(extents=(0.6, 0.1), nx=24, ny=4, order="P1"):
    return Discretization(generate_rect_mesh(extents, nx, ny), order)


def state(ctx, c, ux=None, uy=None):
    x, y = ctx.space.dof_coords.T
    cv = np.broadcast_to(np.asarray(c(x, y) if callable(c) else c, float), (ctx.n,)).copy()
    u = np.zeros((2, ctx.n))
    if ux is not None:
        u[0] = ux(x, y)
    if uy is not None:
        u[1] = uy(x, y)
    return FieldState(0.0, cv, np.zeros(ctx.n), u, np.zeros(ctx.n))


def composite(ctx, fn, levels=3):
    """Integrate ``fn(c_h, u_h)`` with the degree-6 rule on 4**levels sub-triangles per element."""
    q = quadrature("triangle", 6)
    sub = [np.eye(3)]
    for _ in range(levels):
        new = []
        for T in sub:
            a, b, c = T
            ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
            new += [np.array(t) for t in ((a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca))]
        sub = new
    bary = np.vstack([q.points @ T for T in sub])
    w = np.concatenate([q.weights / 4**levels for _ in sub])
    from qnsch.fem import tabulate
    phi, _ = tabulate(ctx.space.degree, bary)
    return lambda coeffs_list: float(np.sum(ctx.det[:, None] * w[None, :] * fn(
        *[coeffs[ctx.cell_dofs] @ phi.T for coeffs in coeffs_list])))


# ------------------------------------------------------------------ energy

def test_energy_zero_for_neutral_pure_phase():
    p = preset("couette_low").params.with_(theta_s=math.pi / 2)
    ctx = ctx_for()
    e, parts = dg.total_energy(state(ctx, 1.0), p, ctx)
    assert abs(e) <= 1e-16


def test_energy_wall_term_pure_phase():
    p = preset("couette_low").params
    ctx = ctx_for()
    e, parts = dg.total_energy(state(ctx, 1.0), p, ctx)
    expected = p.alpha_w / p.beta * 0.25 * 2 * 0.6
    assert e == pytest.approx(expected, rel=1e-13)
    assert parts["mixing"] == pytest.approx(0.0, abs=1e-18)


def test_mixing_energy_converges_to_profile_oracle():
    p = preset("couette_low").params
    ic = TanhBand(0.3, 0.15)
    s2 = math.sqrt(2.0) * p.eps

    def density_energy(x):
        c = float(ic(x, 0.0, p.eps))
        d = 0.15 - abs(x - 0.3)
        dc = 0.5 / s2 / math.cosh(d / s2) ** 2
        G, _ = cst.bulk_potential(c)
        return float(cst.scheme_density(c, p)) * (G / p.eps + 0.5 * p.eps * dc * dc)

    oracle = 0.1 / p.beta * integrate.quad(density_energy, 0.0, 0.6, points=[0.15, 0.3, 0.45], limit=400)[0]
    errs = []
    for nx in (48, 96, 192):
        ctx = ctx_for(nx=nx, ny=2 if nx < 96 else 2)
        _, parts = dg.total_energy(state(ctx, lambda x, y: ic(x, y, p.eps)), p, ctx)
        errs.append(abs(parts["mixing"] - oracle) / oracle)
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.02


# ------------------------------------------------------------- dissipation

def _pair(ctx, ux=None, uy=None, c=1.0):
    s0 = state(ctx, c)
    s1 = state(ctx, c, ux, uy)
    return s0, s1


def test_rigid_rotation_no_viscous_dissipation():
    p = preset("couette_low").params.with_(wall_velocity={"wall_bottom": 0.0, "wall_top": 0.0})
    ctx = ctx_for()
    s0, s1 = _pair(ctx, lambda x, y: -(y - 0.05), lambda x, y: x - 0.3)
    t = dg.dissipation_terms(s0, s1, p, ctx)
    assert abs(t["viscous_shear"]) < 1e-15 and abs(t["viscous_dilational"]) < 1e-15


def test_pure_shear_viscous_term():
    p = preset("couette_low").params
    ctx = ctx_for()
    s0, s1 = _pair(ctx, lambda x, y: y)
    t = dg.dissipation_terms(s0, s1, p, ctx)
    assert t["viscous_shear"] == pytest.approx(-p.dt / p.Re * 0.06, rel=1e-12)
    assert abs(t["viscous_dilational"]) < 1e-18


def test_converged_step_energy_balance():
    sc = preset("couette_low")
    p = sc.params
    ctx = ctx_for(nx=24, ny=4)
    s0 = initialize_state(sc.c0, p, ctx)
    s1, _ = advance(s0, p, ctx)
    gap, terms = dg.energy_balance(s0, s1, p, ctx)
    e0, _ = dg.total_energy(s0, p, ctx)
    assert abs(gap) <= 100 * p.picard_tol * abs(e0)
    for k, v in terms.items():
        if k not in ("wall_input", "body_force"):
            assert v <= 0.0, k


# ------------------------------------------------------------------ masses

def test_masses_pure_phases():
    p = preset("couette_low").params
    ctx = ctx_for()
    assert dg.masses(state(ctx, 1.0), p, ctx) == pytest.approx((0.8 * 0.06, 0.8 * 0.06), rel=1e-14)
    m0, m1 = dg.masses(state(ctx, 0.0), p, ctx)
    assert m0 == pytest.approx(0.06, rel=1e-14) and m1 == 0.0


def test_masses_match_composite_quadrature():
    sc = preset("couette_low")
    p = sc.params
    ctx = ctx_for(nx=48, ny=8)
    s = state(ctx, sc.c0)
    m0, m1 = dg.masses(s, p, ctx)
    quad = composite(ctx, lambda c: cst.scheme_density(c, p), levels=2)
    quad1 = composite(ctx, lambda c: cst.scheme_density(c, p) * c, levels=2)
    assert m0 == pytest.approx(quad([s.c]), rel=1e-10)
    assert m1 == pytest.approx(quad1([s.c]), rel=1e-10)


# -------------------------------------------------------------- divergence

@pytest.mark.parametrize("order", ["P1", "P2"])
def test_divergence_norms(order):
    ctx = ctx_for(order=order)
    assert dg.div_u_l2(state(ctx, 0.5), ctx) == 0.0
    assert dg.div_u_l2(state(ctx, 0.5, lambda x, y: x, lambda x, y: -y), ctx) <= 1e-12
    assert dg.div_u_l2(state(ctx, 0.5, lambda x, y: x), ctx) == pytest.approx(math.sqrt(0.06), rel=1e-12)
    assert dg.div_u_l2_pointwise(state(ctx, 0.5, lambda x, y: x), ctx) == pytest.approx(math.sqrt(0.06), rel=1e-12)


def test_divergence_band_fraction_bounds():
    sc = preset("couette_low")
    ctx = ctx_for()
    s = state(ctx, sc.c0, lambda x, y: np.sin(20 * x))
    f = dg.div_u_band_fraction(s, ctx)
    assert 0.0 <= f <= 1.0
    assert dg.div_u_band_fraction(state(ctx, sc.c0), ctx) == 1.0


# ---------------------------------------------------------- rising velocity

def test_rising_velocity_cases():
    sc = preset("bubble")
    ctx = ctx_for((0.15, 0.15), 30, 30)
    assert dg.rising_velocity(state(ctx, sc.c0), ctx) == 0.0
    assert dg.rising_velocity(state(ctx, sc.c0, uy=lambda x, y: 1.0 + 0 * x), ctx) == pytest.approx(1.0, rel=1e-14)
    s = state(ctx, sc.c0, uy=lambda x, y: y)
    num = composite(ctx, lambda c, v: c * v)([s.c, s.u[1]])
    den = composite(ctx, lambda c: c)([s.c])
    assert dg.rising_velocity(s, ctx) == pytest.approx(num / den, rel=1e-8)
    with pytest.raises(UndefinedDiagnostic):
        dg.rising_velocity(state(ctx, 0.0), ctx)


# --------------------------------------------------------- contact distance

def test_contact_distance_droplet():
    sc = preset("droplet")
    ctx = ctx_for((4.0, 0.5), 256, 32)
    h = 4.0 / 256
    assert dg.contact_distance(state(ctx, sc.c0), ctx) == pytest.approx(0.4, abs=2 * h)
    assert dg.contact_distance(state(ctx, 1.0), ctx) == 0.0
    shifted = sc.with_(initial=type(sc.initial)((2.0, 0.0), 0.2))
    d0 = dg.contact_distance(state(ctx, sc.c0), ctx)
    assert dg.contact_distance(state(ctx, shifted.c0), ctx) == pytest.approx(d0, abs=1e-12)


# ---------------------------------------------------------------- l2 error

def test_l2_error_identical_states_zero():
    ctx = ctx_for()
    s = state(ctx, preset("couette_low").c0, lambda x, y: x * y)
    assert dg.l2_error(s, ctx, s, ctx) == {"u_x": 0.0, "u_y": 0.0, "c": 0.0}


def test_l2_error_linear_interpolant_of_quadratic():
    mesh = generate_rect_mesh((1.0, 1.0), 2, 2)
    coarse, ref = Discretization(mesh, "P1"), Discretization(mesh, "P2")
    q = lambda x, y: x * x + x * y
    e = dg.l2_error(state(coarse, q), coarse, state(ref, q), ref, fields=("c",))["c"]
    # symbolic oracle: integrate (I_h q - q)^2 triangle by triangle
    x, y = sy.symbols("x y")
    total = 0
    for tri in mesh.triangles:
        P = mesh.vertices[tri]
        a, b, c = sy.symbols("a b c")
        lin = a + b * x + c * y
        sol = sy.solve([lin.subs({x: px, y: py}) - float(px * px + px * py) for px, py in P], [a, b, c])
        f = (lin.subs(sol) - (x * x + x * y)) ** 2
        s, t = sy.symbols("s t")
        (x0, y0), (x1, y1), (x2, y2) = [tuple(map(sy.nsimplify, v)) for v in P]
        sub = {x: x0 + (x1 - x0) * s + (x2 - x0) * t, y: y0 + (y1 - y0) * s + (y2 - y0) * t}
        det = abs((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))
        total += sy.integrate(sy.integrate(sy.expand(f.subs(sub)) * det, (t, 0, 1 - s)), (s, 0, 1))
    assert e == pytest.approx(math.sqrt(float(total)), rel=1e-8)


def test_l2_error_p2_exact_reproduction():
    q = lambda x, y: 1 + x - 2 * y + x * x - 3 * x * y + y * y
    coarse = ctx_for(nx=6, ny=2, order="P2")
    ref = ctx_for(nx=18, ny=5, order="P2")
    e = dg.l2_error(state(coarse, q, q, q), coarse, state(ref, q, q, q), ref)
    assert max(e.values()) <= 1e-12


def test_l2_error_rejects_mismatched_domains():
    a, b = ctx_for(), ctx_for((1.0, 1.0), 4, 4)
    with pytest.raises(InvalidArgument):
        dg.l2_error(state(a, 0.0), a, state(b, 0.0), b)


# ---------------------------------------------------------------- rates

def test_convergence_rate_cases():
    assert dg.convergence_rate([(0.1, 1.0), (0.05, 0.5)]) == [pytest.approx(1.0)]
    assert dg.convergence_rate([(1 / 160, 4.9e-2), (1 / 226, 1.9e-2)])[0] == pytest.approx(2.74, abs=0.01)
    hs = [0.1, 0.07, 0.05, 0.02]
    for r in dg.convergence_rate([(h, 3.7 * h**3) for h in hs]):
        assert r == pytest.approx(3.0, abs=1e-6)
    with pytest.raises(InvalidArgument):
        dg.convergence_rate([(0.1, 1.0)])
    with pytest.raises(InvalidArgument):
        dg.convergence_rate([(0.1, 1.0), (0.2, 0.5)])


def test_record_fields():
    sc = preset("couette_low")
    ctx = ctx_for()
    s = initialize_state(sc.c0, sc.params, ctx)
    rec = dg.record(s, sc.params, ctx)
    assert len(rec.row()) == len(dg.CSV_COLUMNS)
    assert rec.time == 0.0 and rec.picard_iters == 0
    assert rec.contact_distance == pytest.approx(0.3, abs=0.6 / 24)
