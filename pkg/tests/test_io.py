import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qnsch import io
from qnsch.assembly import Discretization, FieldState
from qnsch.diagnostics import CSV_COLUMNS, DiagnosticsRecord
from qnsch.errors import ConfigError, IOFailure
from qnsch.mesh import generate_rect_mesh
from qnsch.scenarios import preset, run

GOLDEN_HEADER = ("time,E_total,E_kinetic,E_mixing,E_wall,mass_rho,mass_rhoc,div_u_l2,"
                 "picard_iters,picard_resid,V_c,contact_distance")


def test_minimal_config_fills_preset_defaults():
    cfg = io.parse_config("[run]\nscenario = couette_low\nnx = 48\nny = 8\norder = P1\n")
    p = cfg.params()
    ref = preset("couette_low").params
    assert (cfg.nx, cfg.ny, cfg.order) == (48, 8, "P1")
    assert cfg.T == 0.2 and cfg.dt == 8e-4
    assert (p.Re, p.beta, p.M, p.eps, p.rho1, p.rho2) == (ref.Re, ref.beta, ref.M, ref.eps, ref.rho1, ref.rho2)
    assert p.theta_s == pytest.approx(ref.theta_s, abs=1e-12)
    assert (cfg.wall_bottom, cfg.wall_top) == (-1.0, 1.0)


def test_bubble_without_gravity_names_key():
    with pytest.raises(ConfigError) as exc:
        io.parse_config("[run]\nscenario = bubble\n")
    assert exc.value.key == "gravity"
    assert "gravity" in str(exc.value)
    cfg = io.parse_config("[run]\nscenario = bubble\ngravity = 0, -1\n")
    assert cfg.gravity == (0.0, -1.0)


@pytest.mark.parametrize("text,key", [
    ("[run]\nscenario = couette_low\ncolour = red\n", "colour"),
    ("[run]\nscenario = couette_low\n[parameters]\nRe2 = 1\n", "Re2"),
    ("[run]\nscenario = couette_low\n[extra]\nx = 1\n", "extra"),
    ("[run]\nscenario = couette_low\nnx = 4.5\n", "nx"),
    ("[run]\nscenario = couette_low\n[parameters]\nRe = fast\n", "Re"),
    ("[run]\nscenario = couette_low\n[parameters]\nrho1 = -1\n", "rho1"),
    ("[run]\nscenario = couette_low\norder = P3\n", "order"),
    ("[run]\nscenario = nowhere\n", "scenario"),
    ("[run]\nnx = 4\n", "scenario"),
])
def test_bad_documents_name_the_key(text, key):
    with pytest.raises(ConfigError) as exc:
        io.parse_config(text)
    assert exc.value.key == key


def test_custom_scenario_requires_everything():
    with pytest.raises(ConfigError) as exc:
        io.parse_config("[run]\nscenario = custom\nnx = 8\nny = 8\n")
    assert exc.value.key is not None


@pytest.mark.parametrize("name", ["couette_low", "couette_high", "droplet"])
def test_round_trip_is_parse_stable(name):
    cfg = io.parse_config(f"[run]\nscenario = {name}\nnx = 32\nny = 8\n")
    text = io.serialize_config(cfg)
    again = io.parse_config(text)
    assert again == cfg
    assert io.serialize_config(again) == text


@settings(max_examples=30, deadline=None)
@given(Re=st.floats(1e-3, 1e4), eps=st.floats(1e-3, 0.05), theta=st.floats(1.0, 179.0),
       every=st.integers(0, 50))
def test_round_trip_property(Re, eps, theta, every):
    text = (f"[run]\nscenario = couette_low\noutput_every = {every}\n"
            f"[parameters]\nRe = {Re!r}\neps = {eps!r}\ntheta_s_deg = {theta!r}\n")
    cfg = io.parse_config(text)
    assert io.parse_config(io.serialize_config(cfg)) == cfg


def _records(n):
    return [DiagnosticsRecord(time=0.1 * (k + 1), E_total=1.0 / 3.0 + k, E_kinetic=0.5, E_mixing=k,
                              E_wall=-1e-300, mass_rho=math.pi, mass_rhoc=2.0, div_u_l2=1e-9,
                              picard_iters=k + 1, picard_resid=1e-10, V_c=float("nan"))
            for k in range(n)]


def test_csv_golden_header():
    assert ",".join(CSV_COLUMNS) == GOLDEN_HEADER


def test_csv_empty_is_header_only(tmp_path):
    path = tmp_path / "d.csv"
    io.write_diagnostics_csv([], path)
    assert path.read_text() == GOLDEN_HEADER + "\n"


def test_csv_three_records_four_lines(tmp_path):
    path = tmp_path / "d.csv"
    io.write_diagnostics_csv(_records(3), path)
    lines = path.read_text().splitlines()
    assert len(lines) == 4
    assert lines[1].split(",")[1] == f"{1.0 / 3.0:.17e}"
    cols = io.read_diagnostics_csv(path)
    assert np.array_equal(cols["picard_iters"], [1.0, 2.0, 3.0])
    assert cols["mass_rho"][0] == math.pi


def test_csv_write_failure_is_io_error(tmp_path):
    with pytest.raises(IOFailure):
        io.write_diagnostics_csv(_records(1), tmp_path / "missing" / "d.csv")


def two_triangles():
    return Discretization(generate_rect_mesh((1.0, 1.0), 1, 1), "P1")


def test_vtk_two_triangles(tmp_path):
    ctx = two_triangles()
    n = ctx.n
    st_ = FieldState(0.0, np.ones(n), np.zeros(n), np.zeros((2, n)), np.zeros(n))
    path = tmp_path / "f.vtk"
    io.write_fields_vtk(st_, ctx, preset("couette_low").params, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert "POINTS 4 double" in lines
    assert "CELLS 2 8" in lines
    i = lines.index("CELL_TYPES 2")
    assert lines[i + 1:i + 3] == ["5", "5"]
    j = lines.index("SCALARS c double 1")
    assert lines[j + 1] == "LOOKUP_TABLE default"
    assert [float(v) for v in lines[j + 2:j + 6]] == [1.0] * 4
    for name in ("mu_bar", "p_bar", "div_u"):
        assert f"SCALARS {name} double 1" in lines
    assert "VECTORS u double" in lines


def test_vtk_p2_emits_vertex_values_only(tmp_path):
    ctx = Discretization(generate_rect_mesh((1.0, 1.0), 2, 2), "P2")
    n = ctx.n
    st_ = FieldState(0.0, np.full(n, 0.25), np.zeros(n), np.zeros((2, n)), np.zeros(n))
    text = io.format_fields_vtk(st_, ctx, preset("couette_low").params)
    assert "POINTS 9 double" in text and "POINT_DATA 9" in text


def test_directory_sink_is_deterministic_and_writes_metadata(tmp_path):
    cfg = io.parse_config("[run]\nscenario = couette_low\nnx = 24\nny = 4\noutput_every = 2\n")
    outs = []
    for k in range(2):
        d = tmp_path / f"r{k}"
        run(cfg.scenario_obj(), cfg.resolution, cfg.order, sink=io.DirectorySink(d, config=cfg), n_steps=3)
        outs.append(d)
    a, b = (sorted(os.listdir(d)) for d in outs)
    assert a == b
    assert "fields_000002.vtk" in a
    for name in a:
        if name != "metadata.json":
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    meta = json.loads((outs[0] / "metadata.json").read_text())
    assert meta["status"] == "ok" and meta["steps_completed"] == 3
    assert io.parse_config(meta["config"]) == cfg
    assert meta["tolerances"]["picard_tol"] == cfg.picard_tol


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError) as exc:
        io.load_config(tmp_path / "nope.ini")
    assert "nope.ini" in str(exc.value)
