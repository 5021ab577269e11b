import numpy as np
import pytest
import scipy.sparse as sp
import sympy as sy

from qnsch.assembly import (C, MU, P, UX, UY, Discretization, FieldState, apply_gauge, assemble,
                            dissipation_identity_check, residual)
from qnsch.errors import InvalidArgument
from qnsch.mesh import generate_rect_mesh
from qnsch.scenarios import preset
from qnsch.timestepper import initialize_state, linear_solve


def block(system, i, j):
    n = system.n
    return system.matrix[i * n:(i + 1) * n, j * n:(j + 1) * n].toarray()


def couette_setup(nx=12, ny=3, order="P1", **kw):
    sc = preset("couette_low").with_(**kw) if kw else preset("couette_low")
    ctx = Discretization(generate_rect_mesh(sc.extents, nx, ny), order)
    p = sc.resolved_params()
    return sc, ctx, p, initialize_state(sc.c0, p, ctx)


def test_steady_pure_phase_residual():
    _, ctx, p, _ = couette_setup(wall_velocity={"wall_bottom": 0.0, "wall_top": 0.0})
    s = FieldState(0.0, np.ones(ctx.n), np.zeros(ctx.n), np.zeros((2, ctx.n)), np.zeros(ctx.n))
    F, scaled = residual(s, s, p, ctx)
    assert np.linalg.norm(F) <= 1e-12


def test_equal_density_decouples_pressure_row():
    _, ctx, p, s = couette_setup(rho1=1.0, rho2=1.0)
    system = assemble(s, s, p, ctx)
    for j in (C, MU, P):
        assert np.abs(block(system, P, j)).max() == 0.0
    assert np.abs(block(system, P, UX)).max() > 0.0


def test_pressure_block_is_alpha_squared_mobility_stiffness():
    _, ctx, p, s = couette_setup()
    system = assemble(s, s, p, ctx)
    np.testing.assert_allclose(block(system, P, P), p.alpha * block(system, C, MU) * p.alpha,
                               rtol=1e-13, atol=1e-30)


def _hand_p1(order_mesh):
    """Hand-integrated P1 mass and stiffness on each triangle of a mesh (sympy oracle)."""
    x, y = sy.symbols("x y")
    n = order_mesh.n_vertices
    M = np.zeros((n, n))
    K = np.zeros((n, n))
    for tri in order_mesh.triangles:
        P0, P1, P2 = [sy.Matrix(order_mesh.vertices[v]) for v in tri]
        # barycentric basis as explicit linear functions
        T = sy.Matrix([[P1[0] - P0[0], P2[0] - P0[0]], [P1[1] - P0[1], P2[1] - P0[1]]])
        ref = T.inv() * sy.Matrix([x - P0[0], y - P0[1]])
        lam = [1 - ref[0] - ref[1], ref[0], ref[1]]
        xi, eta = sy.symbols("xi eta")
        sub = {x: P0[0] + T[0, 0] * xi + T[0, 1] * eta, y: P0[1] + T[1, 0] * xi + T[1, 1] * eta}
        det = abs(T.det())
        for a in range(3):
            for b in range(3):
                m = sy.integrate(sy.integrate((lam[a] * lam[b]).subs(sub) * det, (eta, 0, 1 - xi)), (xi, 0, 1))
                k = (sy.diff(lam[a], x) * sy.diff(lam[b], x) + sy.diff(lam[a], y) * sy.diff(lam[b], y)) * det / 2
                M[tri[a], tri[b]] += float(m)
                K[tri[a], tri[b]] += float(k)
    return M, K


def test_blocks_match_hand_integration():
    mesh = generate_rect_mesh((0.6, 0.1), 1, 1)
    ctx = Discretization(mesh, "P1")
    p = preset("couette_low").params.with_(rho1=1.0, rho2=1.0)
    c = 0.3 + 0.4 * mesh.vertices[:, 0]  # linear field
    s = FieldState(0.0, c, np.zeros(4), np.zeros((2, 4)), np.zeros(4))
    system = assemble(s, s, p, ctx)
    M, K = _hand_p1(mesh)
    np.testing.assert_allclose(block(system, C, C), M / p.dt, rtol=1e-13, atol=1e-14)
    np.testing.assert_allclose(block(system, C, MU), p.M * K, rtol=1e-13, atol=1e-22)
    np.testing.assert_allclose(block(system, MU, MU), M, rtol=1e-13, atol=1e-16)


def test_gauge_row_detects_shift():
    _, ctx, p, s = couette_setup()
    system = apply_gauge(assemble(s, s, p, ctx))
    x, _ = linear_solve(system)
    n = ctx.n
    assert abs(x[-1]) <= 1e-10
    assert abs(system.matrix[-1] @ x) <= 1e-12
    shifted = x.copy()
    shifted[P * n:(P + 1) * n] += 1.0
    assert abs(system.matrix[-1] @ shifted) > 1e-3


def test_gauged_pattern_is_value_independent():
    _, ctx, p, s = couette_setup()
    a = apply_gauge(assemble(s, s, p, ctx)).matrix
    z = FieldState(0.0, np.zeros(ctx.n), np.zeros(ctx.n), np.zeros((2, ctx.n)), np.zeros(ctx.n))
    b = apply_gauge(assemble(z, z, p, ctx)).matrix
    assert np.array_equal(a.indptr, b.indptr) and np.array_equal(a.indices, b.indices)
    ref = sp.bmat([[assemble(s, s, p, ctx).matrix, None], [None, sp.csr_matrix((1, 1))]]).tolil()
    sysm = assemble(s, s, p, ctx)
    n5 = 5 * ctx.n
    ref[P * ctx.n:n5, n5] = sysm.gauge[:, None]
    ref[n5, P * ctx.n:n5] = sysm.gauge[None, :]
    np.testing.assert_allclose(a.toarray(), ref.toarray(), rtol=0, atol=0)


def test_smallest_singular_value_bounded_away():
    _, ctx, p, s = couette_setup(nx=4, ny=4)
    A = apply_gauge(assemble(s, s, p, ctx)).matrix.toarray()
    sv = np.linalg.svd(A, compute_uv=False)
    assert sv.min() > 1e-10
    assert sv.max() / sv.min() < 1e14


def test_dirichlet_rows():
    _, ctx, p, s = couette_setup()
    system = assemble(s, s, p, ctx)
    A = system.matrix.tocsr()
    for r in system.dirichlet[:10]:
        row = A.getrow(r)
        assert row[0, r] == 1.0 and abs(row).sum() == 1.0
        assert system.rhs[r] == 0.0


def test_assemble_rejects_mismatched_state():
    _, ctx, p, s = couette_setup()
    small = FieldState(0.0, np.zeros(3), np.zeros(3), np.zeros((2, 3)), np.zeros(3))
    with pytest.raises(InvalidArgument):
        assemble(small, s, p, ctx)


# -------------------------------------------------------- viscous identity

@pytest.fixture(scope="module")
def p2_ctx():
    return Discretization(generate_rect_mesh((1.0, 1.0), 8, 8), "P2")


def test_rigid_rotation_zero(p2_ctx):
    x, y = p2_ctx.space.dof_coords.T
    lhs, rhs = dissipation_identity_check(np.vstack([-y, x]), p2_ctx)
    assert abs(lhs) < 1e-13 and abs(rhs) < 1e-13


def test_pure_shear_equals_area(p2_ctx):
    x, y = p2_ctx.space.dof_coords.T
    lhs, rhs = dissipation_identity_check(np.vstack([y, 0 * x]), p2_ctx)
    assert lhs == pytest.approx(1.0, rel=1e-13)
    assert rhs == pytest.approx(1.0, rel=1e-13)


def test_random_p2_fields(p2_ctx, rng):
    for _ in range(5):
        lhs, rhs = dissipation_identity_check(rng.standard_normal((2, p2_ctx.n)), p2_ctx)
        assert abs(lhs - rhs) <= 1e-12 * abs(lhs)
