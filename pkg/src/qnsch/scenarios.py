"""Preset experiments, the time loop with output sinks, and multi-run studies."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import math

import numpy as np

from . import diagnostics as dg
from .assembly import Discretization, FieldState
from .constitutive import Parameters
from .errors import ConfigError, InvalidArgument, QnschError
from .mesh import generate_rect_mesh
from .timestepper import LinearSolver, advance, initialize_state

log = logging.getLogger(__name__)

PRESETS = ("couette_low", "couette_high", "droplet", "bubble")

# tanh profile 0.5 +- 0.5 tanh(d / (sqrt(2) eps)) passes 0.05 and 0.95 this many eps apart
INTERFACE_WIDTH_EPS = 2.0 * math.sqrt(2.0) * math.atanh(0.9)
MIN_CELLS_PER_INTERFACE = 4


# ------------------------------------------------------ initial conditions

@dataclass(frozen=True)
class TanhBand:
    """Vertical band of phase 1: ``0.5 + 0.5 tanh((w - |x - x0|) / (sqrt(2) eps))``."""

    center: float
    half_width: float

    def __call__(self, x, y, eps):
        d = self.half_width - np.abs(np.asarray(x) - self.center)
        return 0.5 + 0.5 * np.tanh(d / (math.sqrt(2.0) * eps)) + 0.0 * np.asarray(y)


@dataclass(frozen=True)
class HalfDisk:
    """Disk of phase 1 centred on a wall: ``0.5 - 0.5 tanh((r - R) / (sqrt(2) eps))``."""

    center: tuple
    radius: float

    def __call__(self, x, y, eps):
        r = np.hypot(np.asarray(x) - self.center[0], np.asarray(y) - self.center[1])
        return 0.5 - 0.5 * np.tanh((r - self.radius) / (math.sqrt(2.0) * eps))


@dataclass(frozen=True)
class Uniform:
    """Constant phase field."""

    value: float

    def __call__(self, x, y, eps):
        return np.full(np.shape(x), float(self.value))


# ------------------------------------------------------------- scenarios

@dataclass(frozen=True)
class Scenario:
    """A complete experiment description.

    Attributes
    ----------
    name : preset or user label
    extents : ``(Lx, Ly)`` of the rectangle ``[0, Lx] x [0, Ly]``
    params : Parameters (wall speeds are constant in time)
    initial : callable ``(x, y, eps) -> c0``; eps is taken from ``params`` at run time
    T : end time, an integer multiple of ``params.dt``
    gravity : body acceleration, or None when it must still be configured
    u0 : optional pair of callables ``(x, y) -> u_x, u_y`` (zero velocity by default)
    output_every : field-output cadence in steps (0 writes only the first and last state)
    resolution : default ``(nx, ny)``
    """

    name: str
    extents: tuple
    params: Parameters
    initial: object
    T: float
    gravity: tuple = (0.0, 0.0)
    u0: object = None
    output_every: int = 0
    resolution: tuple = (48, 8)

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise InvalidArgument(f"end time must be positive, got {self.T!r}")
        self.n_steps  # validates T / dt
        if len(self.extents) != 2 or min(self.extents) <= 0:
            raise InvalidArgument(f"invalid extents {self.extents!r}")
        if int(self.output_every) != self.output_every or self.output_every < 0:
            raise InvalidArgument("output_every must be a nonnegative integer")

    @property
    def n_steps(self):
        dt = self.params.dt
        n = round(self.T / dt)
        if n < 1 or abs(n * dt - self.T) > 1e-12:
            raise InvalidArgument(f"end time {self.T!r} is not a multiple of dt={dt!r}")
        return int(n)

    def with_(self, **changes):
        """Copy with scenario fields replaced; parameter names go to ``params``."""
        pnames = set(Parameters.__dataclass_fields__) - {"gravity"}
        pchanges = {k: changes.pop(k) for k in list(changes) if k in pnames}
        sc = self
        if pchanges:
            sc = replace(sc, params=sc.params.with_(**pchanges))
        return replace(sc, **changes) if changes else sc

    def resolved_params(self):
        """Parameters with the scenario gravity applied; errors if gravity is unset."""
        if self.gravity is None:
            raise ConfigError(f"scenario {self.name!r} requires a gravity vector", key="gravity")
        return self.params.with_(gravity=tuple(self.gravity))

    def c0(self, x, y):
        return self.initial(x, y, self.params.eps)

    def h_label(self, ny):
        """Mesh label ``1/ny`` used in study tables."""
        return 1.0 / ny


def _couette_low():
    p = Parameters(Re=200.0, beta=1.76e-2, M=1.5e-8, M_Gamma=5e5, eps=0.01, alpha_w=8.33e-4,
                   rho1=0.8, rho2=1.0, eta1=1.0, eta2=1.0, theta_s=math.radians(120.0),
                   ls1=0.02, ls2=0.02, dt=8e-4,
                   wall_velocity={"wall_bottom": -1.0, "wall_top": 1.0})
    return Scenario("couette_low", (0.6, 0.1), p, TanhBand(0.3, 0.15), T=0.2, resolution=(48, 8))


def preset(name):
    """Scenario for one of ``couette_low``, ``couette_high``, ``droplet``, ``bubble``."""
    if name == "couette_low":
        return _couette_low()
    if name == "couette_high":
        sc = _couette_low()
        return replace(sc, name="couette_high", params=sc.params.with_(
            Re=20.0, rho1=0.1, rho2=10.0, eta1=0.1, eta2=10.0, ls1=0.01, ls2=0.0027))
    if name == "droplet":
        p = Parameters(Re=5.0, beta=7.14e-3, M=2.8e-4, M_Gamma=5e8, eps=0.005, alpha_w=0.129,
                       rho1=0.8, rho2=1.0, eta1=1.0, eta2=1.0, theta_s=math.radians(120.0),
                       ls1=6.667e-5, ls2=6.667e-5, dt=4e-4,
                       wall_velocity={"wall_bottom": 0.0, "wall_top": 1.0})
        return Scenario("droplet", (4.0, 0.5), p, HalfDisk((1.0, 0.0), 0.2), T=0.2,
                        resolution=(256, 32))
    if name == "bubble":
        # neutral wetting: at alpha_w = 100 any other angle makes the first Picard solve diverge
        p = Parameters(Re=300.0, beta=0.09, M=6.67e-17, M_Gamma=5e8, eps=0.01, alpha_w=100.0,
                       rho1=0.001, rho2=1.0, eta1=0.01, eta2=1.0, theta_s=math.radians(90.0),
                       ls1=0.04, ls2=0.04, dt=2e-4)
        return Scenario("bubble", (0.15, 0.15), p, HalfDisk((0.075, 0.0), 0.05), T=0.06,
                        gravity=None, resolution=(81, 81))
    raise InvalidArgument(f"unknown preset {name!r}; expected one of {', '.join(PRESETS)}")


# ----------------------------------------------------------------- sinks

class Sink:
    """Output consumer. Records arrive in step order; fields at the cadence."""

    def start(self, scenario, ctx, params, initial_record):
        pass

    def record(self, step, rec):
        pass

    def fields(self, step, state, ctx, params):
        pass

    def close(self, status="ok"):
        pass


class MemorySink(Sink):
    """Keeps every record and field snapshot in memory."""

    def __init__(self):
        self.records = []
        self.snapshots = []
        self.status = None

    def record(self, step, rec):
        self.records.append(rec)

    def fields(self, step, state, ctx, params):
        self.snapshots.append((step, state))

    def close(self, status="ok"):
        self.status = status


@dataclass
class RunResult:
    """Outcome of :func:`run`.

    ``records[k]`` describes the state after step ``k + 1``; ``initial`` the state at t=0.
    """

    state: FieldState
    initial: dg.DiagnosticsRecord
    records: list
    stats: list
    ctx: Discretization
    params: Parameters
    initial_state: FieldState = None
    factorizations: int = 0


def build_context(scenario, resolution=None, order="P1"):
    nx, ny = resolution if resolution is not None else scenario.resolution
    if min(nx, ny) < 4:
        raise InvalidArgument(f"resolution {nx}x{ny} below 4 cells per side")
    mesh = generate_rect_mesh(scenario.extents, nx, ny)
    return Discretization(mesh, order)


def _extrapolate(s1, s0, t):
    return FieldState(t, 2 * s1.c - s0.c, 2 * s1.mu_bar - s0.mu_bar, 2 * s1.u - s0.u,
                      2 * s1.p_bar - s0.p_bar)


def run(scenario, resolution=None, order="P1", sink=None, n_steps=None, ctx=None):
    """Initialize and advance a scenario to its end time.

    Parameters
    ----------
    scenario : Scenario
    resolution : ``(nx, ny)``; defaults to ``scenario.resolution``
    order : "P1" or "P2"
    sink : Sink receiving a record per step and fields at the cadence
    n_steps : optional override of the number of steps

    Errors from the time loop are re-raised with the failing step in the message
    (and as ``exc.step``) after the sink has been closed with status "failed".
    """
    params = scenario.resolved_params()
    if ctx is None:
        ctx = build_context(scenario, resolution, order)
    sink = sink or Sink()
    steps = scenario.n_steps if n_steps is None else int(n_steps)
    u0 = scenario.u0
    state = initialize_state(scenario.c0, params, ctx, u0=u0)
    first = state
    initial = dg.record(state, params, ctx)
    sink.start(scenario, ctx, params, initial)
    sink.fields(0, state, ctx, params)
    solver = LinearSolver()
    records, stats = [], []
    prev = None
    every = scenario.output_every
    k = 0
    try:
        for k in range(1, steps + 1):
            guess = None if prev is None else _extrapolate(state, prev, state.time + params.dt)
            new, st = advance(state, params, ctx, initial_guess=guess, solver=solver)
            rec = dg.record(new, params, ctx, st, previous=state)
            records.append(rec)
            stats.append(st)
            sink.record(k, rec)
            if (every and k % every == 0) or k == steps:
                sink.fields(k, new, ctx, params)
            prev, state = state, new
    except QnschError as exc:
        sink.close("failed")
        exc.step = k
        if exc.args:
            exc.args = (f"step {k}: {exc.args[0]}",) + exc.args[1:]
        raise
    sink.close("ok")
    return RunResult(state, initial, records, stats, ctx, params, first, solver.factorizations)


# --------------------------------------------------------------- studies

def _resolution(scenario, r):
    if isinstance(r, (tuple, list)):
        nx, ny = (int(v) for v in r)
    else:
        ny = int(r)
        nx = int(round(ny * scenario.extents[0] / scenario.extents[1]))
    return nx, ny


@dataclass
class ConvergenceTable:
    """Errors against the finest run and observed rates per field.

    ``h[i]`` is the ``1/ny`` label of run ``i``; the reference is excluded from
    ``errors`` and ``rates``. ``rates[f][i]`` compares runs ``i`` and ``i + 1``.
    """

    order: str
    resolutions: list
    h: list
    reference: tuple
    errors: dict
    rates: dict
    fields: tuple = ("u_x", "u_y", "c")

    def rows(self):
        out = []
        for i, h in enumerate(self.h):
            row = {"h": h, "nx": self.resolutions[i][0], "ny": self.resolutions[i][1]}
            for f in self.fields:
                row[f] = self.errors[f][i]
                row[f + "_rate"] = self.rates[f][i - 1] if i > 0 else float("nan")
            out.append(row)
        return out

    def min_rate(self):
        return min(min(v) for v in self.rates.values())


def _run_final(args):
    scenario, res, order = args
    result = run(scenario, res, order)
    return result.state


def convergence_study(scenario, resolutions, order="P1", max_workers=1):
    """Run every resolution to ``scenario.T`` and compare with the finest one.

    ``resolutions`` are ``ny`` values (``nx`` follows the aspect ratio) or
    ``(nx, ny)`` pairs, ordered coarse to fine; the last is the reference.
    """
    if len(resolutions) < 3:
        raise InvalidArgument("need >= 3 resolutions")
    res = [_resolution(scenario, r) for r in resolutions]
    if any(b[1] <= a[1] for a, b in zip(res, res[1:])):
        raise InvalidArgument("resolutions must be strictly increasing")
    jobs = [(scenario, r, order) for r in res]
    if max_workers > 1:
        with ProcessPoolExecutor(max_workers) as ex:
            finals = list(ex.map(_run_final, jobs))
    else:
        finals = [_run_final(j) for j in jobs]
    ctxs = [build_context(scenario, r, order) for r in res]
    ref, rctx = finals[-1], ctxs[-1]
    fields = ("u_x", "u_y", "c")
    errors = {f: [] for f in fields}
    for st, cx in zip(finals[:-1], ctxs[:-1]):
        e = dg.l2_error(st, cx, ref, rctx, fields)
        for f in fields:
            errors[f].append(e[f])
    h = [scenario.h_label(r[1]) for r in res[:-1]]
    rates = {f: dg.convergence_rate(list(zip(h, errors[f]))) for f in fields}
    return ConvergenceTable(ctxs[0].order, res[:-1], h, res[-1], errors, rates, fields)


@dataclass
class EpsSweep:
    """Per-epsilon time series of the divergence norm."""

    eps: list
    times: dict
    div_u: dict
    warnings: list = field(default_factory=list)

    def time_average(self, eps):
        return float(np.mean(self.div_u[eps]))


def interface_cells(scenario, resolution, eps):
    """Cells across the 5%-95% transition layer of width about 4.16 eps."""
    nx, ny = resolution
    h = max(scenario.extents[0] / nx, scenario.extents[1] / ny)
    return INTERFACE_WIDTH_EPS * eps / h


def eps_sweep(scenario, eps_values, resolution=None, order="P1", n_steps=None):
    """One run per epsilon (decreasing) recording ``div_u_l2`` after every step."""
    eps_values = [float(e) for e in eps_values]
    if not eps_values or any(e <= 0 for e in eps_values):
        raise InvalidArgument("epsilon values must be positive")
    if any(b >= a for a, b in zip(eps_values, eps_values[1:])):
        raise InvalidArgument("epsilon values must be strictly decreasing")
    res = resolution if resolution is not None else scenario.resolution
    out = EpsSweep(eps_values, {}, {})
    for eps in eps_values:
        cells = interface_cells(scenario, res, eps)
        if cells < MIN_CELLS_PER_INTERFACE:
            msg = f"eps={eps:g}: only {cells:.2f} cells across the interface on a {res[0]}x{res[1]} mesh"
            log.warning(msg)
            out.warnings.append(msg)
        result = run(scenario.with_(eps=eps), res, order, n_steps=n_steps)
        out.times[eps] = [r.time for r in result.records]
        out.div_u[eps] = [r.div_u_l2 for r in result.records]
    return out
