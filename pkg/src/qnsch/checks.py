"""Built-in invariant suite run by ``qnsch check``.

Each check returns a :class:`CheckResult`; none of them needs files or network.
"""

from dataclasses import dataclass
import itertools
import math
import time

import numpy as np

from . import constitutive as cst
from .assembly import Discretization, dissipation_identity_check
from .fem import quadrature
from .mesh import generate_rect_mesh
from .scenarios import Uniform, preset, run


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    limit: float
    seconds: float
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.value:.3e} (limit {self.limit:.1e}, {self.seconds:.2f}s) {self.detail}".rstrip()


def constitutive_identities(n_pairs=10_000, seed=0):
    """Density and double-well difference identities over random pairs, both Couette ratios.

    Returns the worst deviation for the two identities (absolute for g,
    relative to rho(c1) rho(c0) |c1 - c0| scale for the density) and for
    ``g(c, c) = G'(c)``.
    """
    rng = np.random.default_rng(seed)
    c1, c0 = rng.random(n_pairs), rng.random(n_pairs)
    worst_rho = 0.0
    for name in ("couette_low", "couette_high"):
        p = preset(name).params
        r1, r0 = cst.density(c1, p), cst.density(c0, p)
        scale = np.maximum(np.abs(r1), np.abs(r0))
        worst_rho = max(worst_rho, float(np.max(cst.rho_identity_check(c1, c0, p) / scale)))
    worst_g = float(np.max(cst.g_identity_check(c1, c0)))
    _, dG = cst.bulk_potential(c1)
    worst_diag = float(np.max(np.abs(cst.g_discrete(c1, c1) - dG)))
    return worst_rho, worst_g, worst_diag


def check_constitutive():
    t = time.time()
    rho, g, diag = constitutive_identities()
    val = max(rho, g)
    ok = rho <= 1e-13 and g <= 1e-13 and diag <= 1e-14
    return CheckResult("constitutive identities", ok, val, 1e-13, time.time() - t,
                       f"rho {rho:.1e}, G {g:.1e}, g(c,c)-G' {diag:.1e}")


def viscous_identity_worst(n_fields=100, n=16, seed=1):
    """Worst relative gap between the two sides of the viscous split for random P2 fields."""
    rng = np.random.default_rng(seed)
    ctx = Discretization(generate_rect_mesh((1.0, 1.0), n, n), "P2")
    worst = 0.0
    for _ in range(n_fields):
        u = rng.standard_normal((2, ctx.n))
        lhs, rhs = dissipation_identity_check(u, ctx)
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
    return worst


def check_viscous_identity():
    t = time.time()
    w = viscous_identity_worst()
    return CheckResult("viscous dissipation split", w <= 1e-12, w, 1e-12, time.time() - t,
                       "100 random P2 fields, 16x16")


def steady_pure_phase(value, n_steps=100, resolution=(48, 8), order="P1"):
    """Largest coefficient change and Picard counts for a uniform phase with walls at rest."""
    sc = preset("couette_low").with_(initial=Uniform(value),
                                     wall_velocity={"wall_bottom": 0.0, "wall_top": 0.0})
    res = run(sc, resolution, order, n_steps=n_steps)
    change = float(np.max(np.abs(res.state.vector() - res.initial_state.vector())))
    iters = [s.iterations for s in res.stats]
    return change, iters


def check_steady():
    t = time.time()
    worst, all_one = 0.0, True
    for v in (1.0, 0.0):
        change, iters = steady_pure_phase(v)
        worst = max(worst, change)
        all_one = all_one and all(i == 1 for i in iters)
    return CheckResult("steady pure phase", worst <= 1e-10 and all_one, worst, 1e-10, time.time() - t,
                       "100 steps, c=1 and c=0" + ("" if all_one else ", extra Picard iterations"))


def quadrature_worst():
    """Largest monomial integration error over all rules and their declared degrees."""
    worst = 0.0
    for d in range(1, 7):
        tri = quadrature("triangle", d)
        x, y = tri.points[:, 1], tri.points[:, 2]
        for a, b in itertools.product(range(d + 1), repeat=2):
            if a + b > d:
                continue
            exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            worst = max(worst, abs(float(tri.weights @ (x ** a * y ** b)) - exact))
        edge = quadrature("edge", d)
        for a in range(d + 1):
            worst = max(worst, abs(float(edge.weights @ edge.points ** a) - 1.0 / (a + 1)))
    return worst


def check_quadrature():
    t = time.time()
    w = quadrature_worst()
    return CheckResult("quadrature exactness", w <= 1e-13, w, 1e-13, time.time() - t, "degrees 1-6")


SUITES = (check_constitutive, check_viscous_identity, check_steady, check_quadrature)


def run_all():
    return [f() for f in SUITES]
