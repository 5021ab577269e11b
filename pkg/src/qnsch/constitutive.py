"""Pointwise material laws and the scheme's nonlinear functions of the phase variable."""

from dataclasses import dataclass, field, fields, replace
import logging
import math

import numpy as np

from .errors import InvalidArgument

log = logging.getLogger(__name__)

WALL_TAG_NAMES = ("wall_bottom", "wall_top")

# below this |c1 - c0| the wall-energy difference quotient switches to the midpoint derivative
FW_QUOTIENT_TAU = 1e-8


@dataclass(frozen=True)
class Parameters:
    """Dimensionless physical and numerical constants.

    ``alpha = (rho2 - rho1) / (rho1 * rho2)`` is derived. ``gravity`` is a body
    acceleration vector added to the momentum balance as ``rho * gravity``.
    ``wall_velocity`` maps wall tags to the tangential (x) speed of that wall.
    """

    Re: float
    beta: float
    M: float
    M_Gamma: float
    eps: float
    alpha_w: float
    rho1: float
    rho2: float
    eta1: float
    eta2: float
    theta_s: float
    ls1: float
    ls2: float
    dt: float
    gravity: tuple = (0.0, 0.0)
    wall_velocity: dict = field(default_factory=lambda: {"wall_bottom": 0.0, "wall_top": 0.0})
    picard_tol: float = 1e-8
    picard_max_iters: int = 30
    fw_quotient_threshold: float = FW_QUOTIENT_TAU

    def __post_init__(self):
        positive = ("Re", "beta", "M", "M_Gamma", "eps", "alpha_w", "rho1", "rho2",
                    "eta1", "eta2", "ls1", "ls2", "dt", "picard_tol", "fw_quotient_threshold")
        for name in positive:
            v = getattr(self, name)
            if not (isinstance(v, (int, float, np.floating)) and math.isfinite(v) and v > 0):
                raise InvalidArgument(f"parameter {name} must be a positive finite number, got {v!r}")
        if not 0.0 < self.theta_s < math.pi:
            raise InvalidArgument(f"theta_s must lie in (0, pi), got {self.theta_s!r}")
        if int(self.picard_max_iters) != self.picard_max_iters or self.picard_max_iters < 1:
            raise InvalidArgument("picard_max_iters must be a positive integer")
        g = tuple(float(x) for x in self.gravity)
        if len(g) != 2 or not all(math.isfinite(x) for x in g):
            raise InvalidArgument(f"gravity must be a finite 2-vector, got {self.gravity!r}")
        object.__setattr__(self, "gravity", g)
        wv = {"wall_bottom": 0.0, "wall_top": 0.0}
        for k, v in dict(self.wall_velocity).items():
            if k not in wv:
                raise InvalidArgument(f"unknown wall tag {k!r} in wall_velocity")
            if not math.isfinite(float(v)):
                raise InvalidArgument(f"wall velocity for {k} must be finite")
            wv[k] = float(v)
        object.__setattr__(self, "wall_velocity", wv)
        object.__setattr__(self, "picard_max_iters", int(self.picard_max_iters))

    @property
    def alpha(self):
        return (self.rho2 - self.rho1) / (self.rho1 * self.rho2)

    @property
    def density_ratio(self):
        return (self.rho1, self.rho2)

    @property
    def walls_at_rest(self):
        return all(v == 0.0 for v in self.wall_velocity.values())

    def with_(self, **changes):
        """Copy with some fields replaced (invariants re-checked)."""
        return replace(self, **changes)

    def as_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = dict(v) if isinstance(v, dict) else v
        out["alpha"] = self.alpha
        return out


def _clamp(c):
    c = np.asarray(c, dtype=float)
    return np.clip(c, 0.0, 1.0)


def density(c, params):
    """Mixture density from ``1/rho = c/rho1 + (1-c)/rho2`` with c clamped to [0, 1]."""
    c = _clamp(c)
    return 1.0 / (c / params.rho1 + (1.0 - c) / params.rho2)


def specific_volume(c, params):
    """``1/rho``, affine in c: ``1/rho2 + alpha * c`` (no clamping)."""
    return 1.0 / params.rho2 + params.alpha * np.asarray(c, dtype=float)


def scheme_density(c, params, with_derivative=False):
    """Density used inside the discrete scheme.

    The affine specific volume is used without clamping so that the discrete
    density identity holds for slight over- and undershoots of c. Only where the
    specific volume would drop below half of its smaller pure-phase value is it
    floored; there the derivative is zero and a warning is logged.
    """
    sigma = specific_volume(c, params)
    floor = 0.5 * min(1.0 / params.rho1, 1.0 / params.rho2)
    low = sigma < floor
    if np.any(low):
        log.warning("phase field left the admissible density range at %d points; density floored",
                    int(np.count_nonzero(low)))
        sigma = np.where(low, floor, sigma)
    rho = 1.0 / sigma
    if not with_derivative:
        return rho
    drho = np.where(low, 0.0, -params.alpha * rho * rho)
    return rho, drho


def viscosity(c, params):
    """Harmonic viscosity average ``1/eta = c/eta1 + (1-c)/eta2`` (c clamped)."""
    c = _clamp(c)
    return 1.0 / (c / params.eta1 + (1.0 - c) / params.eta2)


def slip_length(c, params):
    """Slip length ``c*ls1 + (1-c)*ls2`` (c clamped)."""
    c = _clamp(c)
    return c * params.ls1 + (1.0 - c) * params.ls2


def bulk_potential(c):
    """Double-well ``G = c^2 (1-c)^2 / 4`` and its derivative."""
    c = np.asarray(c, dtype=float)
    G = 0.25 * c * c * (1.0 - c) ** 2
    dG = 0.5 * c * (1.0 - c) * (1.0 - 2.0 * c)
    return G, dG


def g_discrete(c1, c0):
    """Difference quotient of G: ``G(c1) - G(c0) = g(c1, c0) * (c1 - c0)``."""
    c1 = np.asarray(c1, dtype=float)
    c0 = np.asarray(c0, dtype=float)
    return 0.25 * (c1 * (c1 - 1.0) + c0 * (c0 - 1.0)) * (c1 + c0 - 1.0)


def g_discrete_d1(c1, c0):
    """Partial derivative of :func:`g_discrete` with respect to its first argument."""
    c1 = np.asarray(c1, dtype=float)
    c0 = np.asarray(c0, dtype=float)
    return 0.25 * ((2.0 * c1 - 1.0) * (c1 + c0 - 1.0) + c1 * (c1 - 1.0) + c0 * (c0 - 1.0))


def wall_energy(c, theta_s):
    """Wall energy ``f_w = -cos(theta)/2 * sin((2c-1) pi/2)`` and its derivative."""
    c = np.asarray(c, dtype=float)
    a = -0.5 * math.cos(theta_s)
    arg = (2.0 * c - 1.0) * math.pi / 2.0
    return a * np.sin(arg), a * math.pi * np.cos(arg)


def _wall_energy_d2(c, theta_s):
    a = -0.5 * math.cos(theta_s)
    arg = (2.0 * np.asarray(c, dtype=float) - 1.0) * math.pi / 2.0
    return -a * math.pi ** 2 * np.sin(arg)


def _wall_energy_d3(c, theta_s):
    a = -0.5 * math.cos(theta_s)
    arg = (2.0 * np.asarray(c, dtype=float) - 1.0) * math.pi / 2.0
    return -a * math.pi ** 3 * np.cos(arg)


def fw_quotient(c1, c0, theta_s, tau=FW_QUOTIENT_TAU):
    """Difference quotient of f_w, switching to the midpoint derivative when ``|c1-c0| <= tau``."""
    c1 = np.asarray(c1, dtype=float)
    c0 = np.asarray(c0, dtype=float)
    d = c1 - c0
    far = np.abs(d) > tau
    f1, _ = wall_energy(c1, theta_s)
    f0, _ = wall_energy(c0, theta_s)
    _, dmid = wall_energy(0.5 * (c1 + c0), theta_s)
    safe = np.where(far, d, 1.0)
    return np.where(far, (f1 - f0) / safe, dmid)


def fw_quotient_d1(c1, c0, theta_s, tau=1e-4):
    """Derivative of the difference quotient with respect to ``c1`` (used for linearization)."""
    c1 = np.asarray(c1, dtype=float)
    c0 = np.asarray(c0, dtype=float)
    d = c1 - c0
    far = np.abs(d) > tau
    safe = np.where(far, d, 1.0)
    f1, df1 = wall_energy(c1, theta_s)
    f0, _ = wall_energy(c0, theta_s)
    exact = (df1 * safe - (f1 - f0)) / (safe * safe)
    m = 0.5 * (c1 + c0)
    taylor = 0.5 * _wall_energy_d2(m, theta_s) + _wall_energy_d3(m, theta_s) * d / 12.0
    return np.where(far, exact, taylor)


def rho_identity_check(c1, c0, params):
    """Residual of ``rho(c1) - rho(c0) = -alpha rho(c1) rho(c0) (c1 - c0)``."""
    r1 = density(c1, params)
    r0 = density(c0, params)
    return np.abs(r1 - r0 + params.alpha * r1 * r0 * (np.asarray(c1) - np.asarray(c0)))


def g_identity_check(c1, c0):
    """Residual of ``G(c1) - G(c0) = g(c1, c0) (c1 - c0)``."""
    G1, _ = bulk_potential(c1)
    G0, _ = bulk_potential(c0)
    return np.abs(G1 - G0 - g_discrete(c1, c0) * (np.asarray(c1) - np.asarray(c0)))
