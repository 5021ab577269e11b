"""Picard time stepping of the fully discrete scheme."""

from dataclasses import asdict, dataclass, replace
import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import FIELDS, MU, FieldState, apply_gauge, assemble, residual
from . import _umfpack
from .errors import InvalidArgument, NonConvergence, NumericalFailure

log = logging.getLogger(__name__)

LINEAR_RTOL = 1e-10
MAX_REFINE = 8
# correction solves measure their residual against at least this fraction of |b|
CORRECTION_FLOOR = 1e-6


@dataclass
class StepStats:
    """Bookkeeping for one call of :func:`advance`."""

    iterations: int
    update: float
    residual: float
    converged: bool
    linear_iterations: int = 0
    linear_residual: float = 0.0
    solver: str = "umfpack"

    def as_dict(self):
        return asdict(self)


def _describe_row(row, n):
    if row >= 5 * n:
        return "gauge multiplier row"
    return f"field {FIELDS[row // n]} row {row % n}"


def _zero_line(A):
    A = sp.csr_matrix(A)
    nz = np.diff(A.indptr)
    empty = np.flatnonzero(nz == 0)
    if len(empty):
        return int(empty[0])
    Ac = sp.csc_matrix(A)
    empty = np.flatnonzero(np.diff(Ac.indptr) == 0)
    return int(empty[0]) if len(empty) else None


class LinearSolver:
    """Sparse LU solver for the gauged block systems, with factorization reuse.

    The first call factorizes. With ``reuse`` enabled, later calls run GMRES
    preconditioned by the stored factors and refactorize only when GMRES needs
    more than ``max_krylov`` iterations, so one factorization typically serves
    a whole Picard loop and several time steps. The outcome depends only on
    the sequence of systems passed in, never on timing.

    Parameters
    ----------
    rtol : relative residual ``|b - A x| / |b|`` every solve must reach
    reuse : keep factors between calls
    max_krylov : GMRES iteration budget before refactorizing
    backend : ``"umfpack"``, ``"superlu"`` or ``"auto"`` (UMFPACK when the library loads)
    """

    def __init__(self, rtol=LINEAR_RTOL, reuse=True, max_krylov=30, backend=None):
        backend = (backend or "auto").lower()
        if backend not in ("auto", "umfpack", "superlu"):
            raise InvalidArgument(f"unknown linear solver backend {backend!r}")
        if backend == "auto":
            backend = "umfpack" if _umfpack.available() else "superlu"
        elif backend == "umfpack" and not _umfpack.available():
            raise InvalidArgument("UMFPACK shared library not found")
        self.backend = backend
        self.rtol = rtol
        self.reuse = reuse
        self.max_krylov = max_krylov
        self._symbolic = None
        self._solve_lu = None
        self._shape = None
        self.factorizations = 0

    def _factorize(self, A, n):
        try:
            if self.backend == "umfpack":
                sym = self._symbolic
                if sym is None or not sym.matches(A.indptr, A.indices):
                    sym = self._symbolic = _umfpack.Symbolic(A.shape[0], A.indptr, A.indices, A.data)
                # CSR arrays of A are the CSC arrays of A^T
                self._solve_lu = _umfpack.Factor(sym, A.data, transposed=True).solve
            else:
                self._solve_lu = spla.splu(sp.csc_matrix(A), permc_spec="COLAMD").solve
        except (RuntimeError, _umfpack.UmfpackError) as exc:
            self._solve_lu = None
            row = _zero_line(A)
            where = _describe_row(row, n) if row is not None else "no empty row or column"
            raise NumericalFailure(f"singular factorization ({exc}); {where}") from exc
        self._shape = A.shape
        self.factorizations += 1

    def _krylov(self, A, b, x0, maxiter):
        count = [0]

        def cb(_):
            count[0] += 1

        M = spla.LinearOperator(A.shape, self._solve_lu)
        x, _ = spla.gmres(A, b, x0=x0, M=M, rtol=self.rtol, atol=0.0, restart=maxiter,
                          maxiter=1, callback=cb, callback_type="pr_norm")
        return x, count[0]

    def solve(self, system, x0=None, floor=0.0):
        """Return ``(x, info)`` for a block system (gauged on the fly if needed).

        ``x0`` is an optional starting vector for the Krylov path (for instance
        the previous Picard iterate); it never changes the tolerance met. The
        residual is measured against ``max(|b|, floor)``.
        """
        if not system.gauged:
            system = apply_gauge(system)
        A = sp.csr_matrix(system.matrix)
        b = np.asarray(system.rhs, dtype=float)
        bnorm = max(np.linalg.norm(b), floor)
        scale = bnorm if bnorm > 0 else 1.0
        info = {"iterations": 0, "factorized": False, "backend": self.backend}
        if self.reuse and self._solve_lu is not None and self._shape == A.shape:
            if x0 is None or len(x0) != len(b):
                x0 = self._solve_lu(b)
            x = np.asarray(x0, dtype=float)
            budget = self.max_krylov
            rel = np.linalg.norm(b - A @ x) / scale
            # GMRES stops on the preconditioned residual; restart until the true one passes
            while rel > self.rtol and budget > 0:
                x, its = self._krylov(A, b, x, budget)
                if not np.all(np.isfinite(x)):
                    break
                rel = np.linalg.norm(b - A @ x) / scale
                info["iterations"] += its
                budget -= max(its, 1)
            if np.all(np.isfinite(x)) and rel <= self.rtol:
                info["residual"] = float(rel)
                return x, info
        self._factorize(A, system.n)
        info["factorized"] = True
        x = self._solve_lu(b)
        r = b - A @ x
        rel = np.linalg.norm(r) / scale
        sweeps = 0
        while rel > self.rtol and sweeps < MAX_REFINE and np.all(np.isfinite(x)):
            x = x + self._solve_lu(r)
            r = b - A @ x
            rel = np.linalg.norm(r) / scale
            sweeps += 1
        info["iterations"] += sweeps
        if not np.all(np.isfinite(x)):
            raise NumericalFailure("linear solve produced non-finite values")
        if rel > self.rtol:
            x, its = self._krylov(A, b, x, 50)
            info["iterations"] += its
            rel = np.linalg.norm(b - A @ x) / scale
            if rel > self.rtol:
                raise NumericalFailure(f"linear solve residual {rel:.3e} exceeds {self.rtol:.1e}")
        if not self.reuse:
            self._solve_lu = None
        info["residual"] = float(rel)
        return x, info


def linear_solve(system, rtol=LINEAR_RTOL):
    """Solve a block system by sparse LU with iterative refinement (no reuse).

    Returns ``(x, info)``; ``info["residual"]`` is the achieved relative residual.
    Raises NumericalFailure when the factorization is singular or the residual
    bound cannot be met.
    """
    return LinearSolver(rtol=rtol, reuse=False).solve(system)


def initialize_state(c0, params, ctx, u0=None, time=0.0):
    """Initial FieldState from an analytic phase field ``c0(x, y)``.

    c is interpolated at the nodes, u from ``u0`` (zero by default), p_bar is
    zero and mu_bar solves its defining equation with both time levels equal
    to c0 (a weighted mass-matrix solve). The wall terms are left out there:
    with both levels equal the relaxation rate vanishes and the wall-energy
    flux would act as a boundary delta scaling like ``alpha_w / (h rho)``.
    Leaving them out gives the chemical potential of c0 under its own natural
    condition, which is exact for profiles with zero normal derivative on
    the walls (all preset initial conditions).
    """
    space = ctx.space
    c = space.interpolate(c0)
    if u0 is None:
        u = np.zeros((2, ctx.n))
    else:
        ux, uy = u0
        u = np.vstack([space.interpolate(ux), space.interpolate(uy)])
    z = np.zeros(ctx.n)
    state = FieldState(float(time), c, z.copy(), u, z.copy())
    system = assemble(state, state, params, ctx, walls=False)
    n = ctx.n
    rows = slice(MU * n, (MU + 1) * n)
    A = system.matrix[rows]
    Amm = sp.csc_matrix(A[:, rows])
    x = state.vector()
    r = system.rhs[rows] - A @ x
    m = spla.spsolve(Amm, r)
    return FieldState(float(time), c, np.asarray(m), u, z.copy())


def _update_norm(x_new, x_old, n):
    worst = 0.0
    for k in range(5):
        s = slice(k * n, (k + 1) * n)
        d = np.linalg.norm(x_new[s] - x_old[s])
        worst = max(worst, d / (np.linalg.norm(x_new[s]) + 1.0))
    return worst


def advance(state_n, params, ctx, initial_guess=None, solver=None):
    """Advance one time step.

    Picard loop: assemble at the latest iterate, gauge, solve, and stop once both
    the relative update and the scaled nonlinear residual are below
    ``params.picard_tol``. ``initial_guess`` seeds the loop (``state_n`` by
    default); ``solver`` is a :class:`LinearSolver` whose factors may be reused
    across calls. Returns ``(state, StepStats)``.
    """
    if not state_n.is_finite():
        raise NumericalFailure("input state contains non-finite values")
    if solver is None:
        solver = LinearSolver()
    n = ctx.n
    t_new = state_n.time + params.dt
    it = state_n if initial_guess is None else initial_guess
    it = FieldState(t_new, it.c, it.mu_bar, it.u, it.p_bar)
    system = assemble(state_n, it, params, ctx)
    x_prev = np.append(it.vector(), 0.0)
    lin_iters = 0
    lin_res = 0.0
    stats = None
    for k in range(1, params.picard_max_iters + 1):
        # solve for the correction so an exact fixed point is kept to roundoff
        gs = apply_gauge(system)
        r = gs.rhs - gs.matrix @ x_prev
        floor = CORRECTION_FLOOR * np.linalg.norm(gs.rhs)
        try:
            delta, info = solver.solve(replace(gs, rhs=r), floor=floor)
            sol = x_prev + delta
        except NumericalFailure:
            # singular pressure block (equal densities): roundoff in r excites the null modes
            sol, info = solver.solve(gs, x0=x_prev)
        x_prev = sol
        lin_iters += info["iterations"]
        lin_res = max(lin_res, info["residual"])
        x_old = it.vector()
        x_new = sol[: 5 * n]
        upd = _update_norm(x_new, x_old, n)
        it = FieldState.from_vector(t_new, x_new, n)
        system = assemble(state_n, it, params, ctx)
        _, res = residual(state_n, it, params, ctx, system)
        stats = StepStats(k, float(upd), float(res), False, lin_iters, lin_res, solver.backend)
        log.debug("t=%.6g Picard %d: update %.3e residual %.3e linear its %d",
                  t_new, k, upd, res, info["iterations"])
        if not np.isfinite(upd) or not np.isfinite(res):
            raise NumericalFailure(f"Picard iteration {k} diverged (update {upd}, residual {res})")
        if upd <= params.picard_tol and res <= params.picard_tol:
            stats.converged = True
            return it, stats
    raise NonConvergence(
        f"Picard loop did not converge in {params.picard_max_iters} iterations "
        f"(update {stats.update:.3e}, residual {stats.residual:.3e})", stats)
