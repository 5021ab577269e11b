"""Run configuration documents, diagnostics CSV, legacy VTK fields and run metadata."""

import configparser
from dataclasses import dataclass, field
import json
import math
import os
import time

import numpy as np

from . import constitutive as cst
from . import diagnostics as dg
from .errors import ConfigError, InvalidArgument, IOFailure
from .fem import parse_order
from .scenarios import PRESETS, HalfDisk, Scenario, Sink, TanhBand, Uniform, preset

# ------------------------------------------------------------------ config

RUN_KEYS = ("scenario", "nx", "ny", "order", "T", "dt", "picard_tol", "picard_max_iters",
            "output_dir", "output_every", "gravity", "wall_bottom", "wall_top")
SCENARIO_KEYS = ("extents", "initial")
PARAM_KEYS = ("Re", "beta", "M", "M_Gamma", "eps", "alpha_w", "rho1", "rho2", "eta1", "eta2",
              "theta_s_deg", "ls1", "ls2")
INT_KEYS = {"nx", "ny", "picard_max_iters", "output_every"}


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run description (preset values merged under overrides).

    ``parameters`` holds the physical constants in document units (contact angle
    in degrees); :meth:`scenario_obj` builds the solver-side Scenario.
    """

    scenario: str
    nx: int
    ny: int
    order: str
    T: float
    dt: float
    picard_tol: float
    picard_max_iters: int
    output_dir: str
    output_every: int
    gravity: tuple
    wall_bottom: float
    wall_top: float
    extents: tuple
    initial: str
    parameters: dict = field(default_factory=dict)

    def params(self):
        kw = {k: v for k, v in self.parameters.items() if k != "theta_s_deg"}
        kw["theta_s"] = math.radians(self.parameters["theta_s_deg"])
        return cst.Parameters(dt=self.dt, picard_tol=self.picard_tol,
                              picard_max_iters=self.picard_max_iters,
                              wall_velocity={"wall_bottom": self.wall_bottom, "wall_top": self.wall_top},
                              gravity=self.gravity, **kw)

    def scenario_obj(self):
        return Scenario(self.scenario, self.extents, self.params(), parse_initial(self.initial),
                        T=self.T, gravity=self.gravity, output_every=self.output_every,
                        resolution=(self.nx, self.ny))

    @property
    def resolution(self):
        return (self.nx, self.ny)


def format_initial(ic):
    if isinstance(ic, TanhBand):
        return f"band {ic.center!r} {ic.half_width!r}"
    if isinstance(ic, HalfDisk):
        return f"half_disk {float(ic.center[0])!r} {float(ic.center[1])!r} {ic.radius!r}"
    if isinstance(ic, Uniform):
        return f"uniform {float(ic.value)!r}"
    raise InvalidArgument(f"initial condition {ic!r} has no document form")


def parse_initial(text):
    """``band x0 w`` | ``half_disk x0 y0 r`` | ``uniform value``."""
    parts = str(text).split()
    kinds = {"band": 2, "half_disk": 3, "uniform": 1}
    if not parts or parts[0] not in kinds or len(parts) != kinds[parts[0]] + 1:
        raise ConfigError(f"invalid initial condition {text!r}", key="initial")
    try:
        vals = [float(v) for v in parts[1:]]
    except ValueError:
        raise ConfigError(f"invalid number in initial condition {text!r}", key="initial") from None
    if parts[0] == "band":
        return TanhBand(*vals)
    if parts[0] == "half_disk":
        return HalfDisk((vals[0], vals[1]), vals[2])
    return Uniform(vals[0])


def _num(key, text, integer=False):
    try:
        if integer:
            v = int(text)
        else:
            v = float(text)
    except (TypeError, ValueError):
        kind = "an integer" if integer else "a number"
        raise ConfigError(f"{key} must be {kind}, got {text!r}", key=key) from None
    if not integer and not math.isfinite(v):
        raise ConfigError(f"{key} must be finite, got {text!r}", key=key)
    return v


def _pair(key, text):
    parts = [p for p in str(text).replace(",", " ").split()]
    if len(parts) != 2:
        raise ConfigError(f"{key} needs two numbers, got {text!r}", key=key)
    return tuple(_num(key, p) for p in parts)


def _preset_values(name):
    sc = preset(name)
    p = sc.params
    params = {k: getattr(p, k) for k in PARAM_KEYS if k != "theta_s_deg"}
    params["theta_s_deg"] = round(math.degrees(p.theta_s), 10)
    run = {"T": sc.T, "dt": p.dt, "picard_tol": p.picard_tol, "picard_max_iters": p.picard_max_iters,
           "output_every": sc.output_every, "gravity": sc.gravity,
           "wall_bottom": p.wall_velocity["wall_bottom"], "wall_top": p.wall_velocity["wall_top"],
           "nx": sc.resolution[0], "ny": sc.resolution[1]}
    return run, {"extents": tuple(sc.extents), "initial": format_initial(sc.initial)}, params


def parse_config(text):
    """Parse a configuration document into a resolved RunConfig.

    The document has a ``[run]`` section and optional ``[scenario]`` and
    ``[parameters]`` sections. ``scenario`` names a preset, or is ``custom``
    in which case every scenario and parameter key must be given.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    allowed = {"run": RUN_KEYS, "scenario": SCENARIO_KEYS, "parameters": PARAM_KEYS}
    for sec in cp.sections():
        if sec not in allowed:
            raise ConfigError(f"unknown section [{sec}]", key=sec)
        for key in cp[sec]:
            if key not in allowed[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", key=key)
    run = dict(cp["run"]) if cp.has_section("run") else {}
    scen = dict(cp["scenario"]) if cp.has_section("scenario") else {}
    pars = dict(cp["parameters"]) if cp.has_section("parameters") else {}
    name = run.get("scenario", "").strip()
    if not name:
        raise ConfigError("missing required key 'scenario'", key="scenario")
    if name in PRESETS:
        base_run, base_scen, base_par = _preset_values(name)
    elif name == "custom":
        base_run = {"T": None, "dt": None, "picard_tol": 1e-8, "picard_max_iters": 30,
                    "output_every": 0, "gravity": (0.0, 0.0), "wall_bottom": 0.0, "wall_top": 0.0,
                    "nx": None, "ny": None}
        base_scen = {"extents": None, "initial": None}
        base_par = dict.fromkeys(PARAM_KEYS)
    else:
        raise ConfigError(f"unknown scenario {name!r}; expected one of {', '.join(PRESETS)} or custom",
                          key="scenario")

    vals = dict(base_run)
    for key, text in run.items():
        if key in ("scenario", "order", "output_dir"):
            continue
        if key == "gravity":
            vals[key] = _pair(key, text)
        else:
            vals[key] = _num(key, text, key in INT_KEYS)
    scen_vals = dict(base_scen)
    if "extents" in scen:
        scen_vals["extents"] = _pair("extents", scen["extents"])
    if "initial" in scen:
        parse_initial(scen["initial"])
        scen_vals["initial"] = " ".join(scen["initial"].split())
    par_vals = dict(base_par)
    for key, text in pars.items():
        par_vals[key] = _num(key, text)

    for key, v in list(vals.items()) + list(scen_vals.items()) + list(par_vals.items()):
        if v is None:
            if key == "gravity":
                raise ConfigError(f"scenario {name!r} requires key 'gravity' (no default)", key="gravity")
            raise ConfigError(f"missing required key {key!r}", key=key)
    order = run.get("order", "P1").strip().upper()
    try:
        parse_order(order)
    except InvalidArgument as exc:
        raise ConfigError(str(exc), key="order") from None
    cfg = RunConfig(
        scenario=name, nx=vals["nx"], ny=vals["ny"], order=order, T=vals["T"], dt=vals["dt"],
        picard_tol=vals["picard_tol"], picard_max_iters=vals["picard_max_iters"],
        output_dir=run.get("output_dir", "qnsch_output").strip(), output_every=vals["output_every"],
        gravity=tuple(vals["gravity"]), wall_bottom=vals["wall_bottom"], wall_top=vals["wall_top"],
        extents=tuple(scen_vals["extents"]), initial=scen_vals["initial"],
        parameters={k: par_vals[k] for k in PARAM_KEYS})
    # type-check everything against the solver invariants
    try:
        sc = cfg.scenario_obj()
        if min(cfg.nx, cfg.ny) < 4:
            raise InvalidArgument(f"resolution {cfg.nx}x{cfg.ny} below 4 cells per side")
    except ConfigError:
        raise
    except InvalidArgument as exc:
        raise ConfigError(f"invalid configuration: {exc}", key=_guess_key(str(exc))) from None
    del sc
    return cfg


def _guess_key(message):
    for key in RUN_KEYS + SCENARIO_KEYS + PARAM_KEYS + ("theta_s", "end time", "resolution"):
        if key in message:
            return {"theta_s": "theta_s_deg", "end time": "T", "resolution": "nx"}.get(key, key)
    return None


def _fmt(v):
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg):
    """Canonical document for a RunConfig; ``parse_config`` of it returns an equal config."""
    lines = ["[run]"]
    for key in RUN_KEYS:
        lines.append(f"{key} = {_fmt(getattr(cfg, key))}")
    lines += ["", "[scenario]", f"extents = {_fmt(cfg.extents)}", f"initial = {cfg.initial}",
              "", "[parameters]"]
    for key in PARAM_KEYS:
        lines.append(f"{key} = {_fmt(float(cfg.parameters[key]))}")
    return "\n".join(lines) + "\n"


def load_config(path):
    """Read and parse a configuration file; a missing file is a configuration error."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ConfigError(f"configuration file not found: {path}", key="path") from None
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}", path) from None
    return parse_config(text)


# --------------------------------------------------------------------- CSV

def _csv_value(v):
    return f"{float(v):.17e}"


def format_diagnostics_csv(records):
    lines = [",".join(dg.CSV_COLUMNS)]
    for rec in records:
        lines.append(",".join(_csv_value(v) for v in rec.row()))
    return "\n".join(lines) + "\n"


def _write_text(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}", str(path)) from None
    return path


def write_diagnostics_csv(records, path):
    """Header plus one row per record, every number as ``%.17e``."""
    return _write_text(path, format_diagnostics_csv(records))


def read_diagnostics_csv(path):
    """Columns of a diagnostics CSV as a dict of float arrays."""
    try:
        data = np.genfromtxt(path, delimiter=",", names=True, ndmin=1)
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}", str(path)) from None
    return {k: np.atleast_1d(data[k]) for k in data.dtype.names}


# --------------------------------------------------------------------- VTK

def format_fields_vtk(state, ctx, params, title="qnsch fields"):
    """Legacy ASCII unstructured grid with vertex values (P2 midpoint data is dropped)."""
    mesh = ctx.mesh
    nv, nt = mesh.n_vertices, mesh.n_triangles
    rho = cst.scheme_density(state.c, params)
    div = dg.divergence_field(state, ctx)
    out = ["# vtk DataFile Version 3.0", f"{title} t={state.time!r}", "ASCII",
           "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    out += [f"{x!r} {y!r} 0.0" for x, y in mesh.vertices]
    out.append(f"CELLS {nt} {4 * nt}")
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    out.append(f"CELL_TYPES {nt}")
    out += ["5"] * nt
    out.append(f"POINT_DATA {nv}")
    scalars = (("c", state.c), ("mu_bar", rho * state.mu_bar), ("p_bar", rho * state.p_bar),
               ("div_u", div))
    for name, vals in scalars:
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        out += [repr(float(v)) for v in vals[:nv]]
    out.append("VECTORS u double")
    out += [f"{float(a)!r} {float(b)!r} 0.0" for a, b in zip(state.u[0][:nv], state.u[1][:nv])]
    return "\n".join(out) + "\n"


def write_fields_vtk(state, ctx, params, path, title="qnsch fields"):
    return _write_text(path, format_fields_vtk(state, ctx, params, title))


# ---------------------------------------------------------------- metadata

def package_version():
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "0.1.0"


class DirectorySink(Sink):
    """Writes ``diagnostics.csv``, ``fields_<step>.vtk`` and ``metadata.json`` to a directory.

    Data files are deterministic; wall-clock information lives only in the metadata.
    CSV rows are flushed as they arrive so a failed run leaves complete rows.
    """

    def __init__(self, out_dir, config=None, vtk=True, extra=None):
        self.out_dir = str(out_dir)
        self.config = config
        self.vtk = vtk
        self.extra = dict(extra or {})
        self.records = []
        self._t0 = None
        self._meta = {}
        self._fh = None
        try:
            os.makedirs(self.out_dir, exist_ok=True)
        except OSError as exc:
            raise IOFailure(f"cannot create output directory {self.out_dir}: {exc}", self.out_dir) from None
        self.csv_path = os.path.join(self.out_dir, "diagnostics.csv")
        self.meta_path = os.path.join(self.out_dir, "metadata.json")

    def start(self, scenario, ctx, params, initial_record):
        self._t0 = time.time()
        self._ctx, self._params = ctx, params
        self._meta = {
            "version": package_version(),
            "scenario": scenario.name,
            "order": ctx.order,
            "resolution": list(ctx.mesh.shape),
            "n_dofs_per_field": ctx.n,
            "parameters": params.as_dict(),
            "end_time": scenario.T,
            "n_steps": scenario.n_steps,
            "tolerances": {"picard_tol": params.picard_tol, "picard_max_iters": params.picard_max_iters,
                           "linear_rtol": 1e-10},
            "initial": {"E_total": initial_record.E_total, "mass_rho": initial_record.mass_rho,
                        "mass_rhoc": initial_record.mass_rhoc},
            "config": serialize_config(self.config) if self.config is not None else None,
        }
        self._meta.update(self.extra)
        self._write_meta("running")
        try:
            self._fh = open(self.csv_path, "w", encoding="utf-8", newline="\n")
            self._fh.write(",".join(dg.CSV_COLUMNS) + "\n")
            self._fh.flush()
        except OSError as exc:
            raise IOFailure(f"cannot write {self.csv_path}: {exc}", self.csv_path) from None

    def record(self, step, rec):
        self.records.append(rec)
        try:
            self._fh.write(",".join(_csv_value(v) for v in rec.row()) + "\n")
            self._fh.flush()
        except OSError as exc:
            raise IOFailure(f"cannot write {self.csv_path}: {exc}", self.csv_path) from None

    def fields(self, step, state, ctx, params):
        if self.vtk:
            write_fields_vtk(state, ctx, params, os.path.join(self.out_dir, f"fields_{step:06d}.vtk"))

    def close(self, status="ok"):
        if self._fh is not None:
            self._fh.close()
            self._fh = None
        self._write_meta(status)

    def _write_meta(self, status):
        meta = dict(self._meta)
        meta["status"] = status
        meta["steps_completed"] = len(self.records)
        meta["wall_clock_seconds"] = None if self._t0 is None else time.time() - self._t0
        _write_text(self.meta_path, json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
