from dataclasses import replace

import numpy as np
import pytest

from srpflow import __version__, fem
from srpflow.cli import main, provenance
from srpflow.config import ConfigError, RunConfig, parse_config_text, serialize_config
from srpflow.fem import FESpace
from srpflow.mesh import generate_unit_square
from srpflow.mms import ManufacturedCase
from srpflow.vtk import format_vtk, write_vtk

GOLDEN = """\
# vtk DataFile Version 2.0
golden
ASCII
DATASET UNSTRUCTURED_GRID
POINTS 4 double
0 0 0
1 0 0
0 1 0
1 1 0
CELLS 2 8
3 0 1 3
3 0 3 2
CELL_TYPES 2
5
5
POINT_DATA 4
VECTORS velocity double
0 0 0
0 0 0
0 0 0
0 0 0
SCALARS pressure double 1
LOOKUP_TABLE default
0
0
0
0
"""


# -- configuration --------------------------------------------------------------------


def test_defaults():
    c = parse_config_text("")
    assert c == RunConfig()
    assert c.fixed_point_tol == 1e-8 and c.alpha == 1.0 and c.variant == "SRP"
    assert c.scheme_config().prediction_solver.rtol == 1e-8


def test_bad_variant_names_key_and_choices():
    with pytest.raises(ConfigError) as e:
        parse_config_text("dt = 0.1\nvariant = SRQ\n")
    assert e.value.key == "variant" and e.value.lineno == 2
    assert "IP" in str(e.value) and "SRP" in str(e.value)


@pytest.mark.parametrize("text, key", [
    ("dt = -1", "dt"),
    ("dt = abc", "dt"),
    ("alpha = 0", "alpha"),
    ("nu_inf = 2", "nu_inf"),
    ("mesh = /no/such/file", "mesh"),
    ("experiment = cylinder\nmesh = 8", "mesh"),
    ("experiment = mms-time\ndts = 0.1, 0.05", "dts"),
    ("deterministic = maybe", "deterministic"),
    ("dt = 0.1\ndt = 0.2", "dt"),
])
def test_validation_errors(text, key):
    with pytest.raises(ConfigError) as e:
        parse_config_text(text)
    assert e.value.key == key


def test_unknown_key_suggestion():
    with pytest.raises(ConfigError, match="did you mean 'fixed_point_tol'"):
        parse_config_text("fixed_point_tl = 1e-8")


def test_syntax_and_comments():
    c = parse_config_text("# comment\n  dt = 1/80   # inline\nns = 4, 8 ,16\nspace_oracle = no\n")
    assert c.dt == 1 / 80 and c.ns == (4, 8, 16) and c.space_oracle is False
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text("dt 0.1")


def test_round_trip_and_hash():
    c = RunConfig(dt=1 / 80, dts=(0.1, 1 / 30), m=0.7, deterministic=False)
    text = serialize_config(c)
    assert parse_config_text(text) == c
    assert c.config_hash() == parse_config_text(text).config_hash()
    assert replace(c, m=0.4).config_hash() != c.config_hash()


def test_mesh_sources(tmp_path):
    assert RunConfig(mesh="5").load_mesh().n_cells == 50
    from srpflow.mesh import write_mesh

    p = tmp_path / "m.mesh"
    write_mesh(generate_unit_square(2), p)
    c = RunConfig(mesh=str(p))
    assert c.load_mesh().n_cells == 8 and "sha256=" in c.mesh_identity()


# -- VTK ------------------------------------------------------------------------------


def test_vtk_golden():
    m = generate_unit_square(1)
    text = format_vtk({"velocity": np.zeros((4, 2)), "pressure": np.zeros(4)}, m, "golden")
    assert text == GOLDEN


@pytest.mark.parametrize("n", [1, 3, 7])
def test_vtk_cell_count(n):
    lines = format_vtk({}, generate_unit_square(n)).splitlines()
    cells = next(l for l in lines if l.startswith("CELLS"))
    assert cells == f"CELLS {2 * n * n} {8 * n * n}"
    assert f"POINTS {(n + 1) ** 2} double" in lines


def test_vtk_rejects_bad_input():
    m = generate_unit_square(1)
    with pytest.raises(ValueError):
        format_vtk({"bad name": np.zeros(4)}, m)
    with pytest.raises(ValueError):
        format_vtk({"p": np.zeros(5)}, m)


def test_vtk_reread_with_meshio(tmp_path):
    meshio = pytest.importorskip("meshio")
    m = generate_unit_square(8)
    case = ManufacturedCase()
    u = fem.interpolate(FESpace(m, 2, 2), lambda x, y: case.velocity(0.3, x, y))
    p = fem.interpolate(FESpace(m, 1, 1), lambda x, y: case.pressure(0.3, x, y))
    path = tmp_path / "s.vtk"
    write_vtk({"velocity": u, "pressure": p}, m, path)
    r = meshio.read(path)
    assert r.points.shape == (m.n_nodes, 3)
    assert np.array_equal(r.cells_dict["triangle"], m.cells)
    exact = case.pressure(0.3, m.nodes[:, 0], m.nodes[:, 1])
    assert np.max(np.abs(r.point_data["pressure"].ravel() - exact)) < 1e-6
    assert np.max(np.abs(r.point_data["velocity"][:, :2]
                         - np.column_stack(case.velocity(0.3, m.nodes[:, 0], m.nodes[:, 1])))) < 1e-6


# -- command line ---------------------------------------------------------------------


def _cfg(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return str(p)


def test_check_exits_zero(tmp_path, capsys):
    cfg = _cfg(tmp_path, f"output_dir = {tmp_path / 'out'}\n")
    assert main(["check", "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert "preflight PASS" in out
    assert (tmp_path / "out" / "preflight.txt").read_text() == out


def test_missing_config_exits_two(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.cfg")]) == 2
    assert "not found" in capsys.readouterr().err


def test_bad_config_and_usage_exit_two(tmp_path, capsys):
    assert main(["run", "--config", _cfg(tmp_path, "variant = SRQ\n")]) == 2
    assert "variant" in capsys.readouterr().err
    assert main(["frobnicate"]) == 2
    assert main(["run"]) == 2


def test_runtime_failure_exits_one(tmp_path, monkeypatch):
    import srpflow.cli as cli

    def boom(cfg, out):
        raise RuntimeError("solver blew up")

    monkeypatch.setitem(cli.HANDLERS, "run", boom)
    assert main(["run", "--config", _cfg(tmp_path, "")]) == 1


MMS_CFG = """\
mesh = 4
dts = 0.2, 0.1, 0.05
final_time = 0.4
dt = 0.2
"""


def test_mms_time_table(tmp_path):
    cfg = _cfg(tmp_path, MMS_CFG)
    assert main(["mms-time", "--config", cfg, "--output-dir", str(tmp_path / "a")]) == 0
    text = (tmp_path / "a" / "mms_time_SRP_im.csv").read_text()
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    assert lines[0] == "dt_or_dx,vel_l2L2,vel_l2H1,pre_l2L2,pre_linfLinf"
    assert [l.split(",")[0] for l in lines[1:]] == ["0.2", "0.1", "0.05", "slope"]
    head = [l[2:] for l in text.splitlines() if l.startswith("#")]
    assert head[0] == f"srpflow {__version__}"
    assert head[1].startswith("config_hash ") and "variant SRP_im" in head and "mesh unit_square n=4" in head


def test_deterministic_output_is_bitwise_identical(tmp_path):
    cfg = _cfg(tmp_path, MMS_CFG)
    for d in ("a", "b"):
        assert main(["mms-time", "--config", cfg, "--output-dir", str(tmp_path / d)]) == 0
    a = (tmp_path / "a" / "mms_time_SRP_im.csv").read_bytes()
    b = (tmp_path / "b" / "mms_time_SRP_im.csv").read_bytes()
    assert a == b


def test_run_writes_per_step_csv_and_snapshots(tmp_path):
    cfg = _cfg(tmp_path, "mesh = 3\ndt = 0.1\nfinal_time = 0.2\nsnapshot_period = 1\nvariant = IP\n")
    assert main(["run", "--config", cfg, "--output-dir", str(tmp_path / "o")]) == 0
    rows = [l for l in (tmp_path / "o" / "run.csv").read_text().splitlines() if not l.startswith("#")]
    assert rows[0].startswith("step,t,vel_L2") and len(rows) == 3
    assert sorted(p.name for p in (tmp_path / "o").glob("*.vtk")) == ["snapshot_00001.vtk", "snapshot_00002.vtk"]


def test_provenance_timestamp_only_when_nondeterministic():
    assert not any(l.startswith("created") for l in provenance(RunConfig(), "x"))
    assert any(l.startswith("created") for l in provenance(RunConfig(deterministic=False), "x"))


def test_cylinder_command_on_coarse_mesh(tmp_path):
    from srpflow.mesh import CylinderGeometry, generate_cylinder, write_mesh

    mesh = tmp_path / "cyl.mesh"
    write_mesh(generate_cylinder(CylinderGeometry(), n_theta=32, n_radial=10, first_cell=0.1), mesh)
    cfg = _cfg(tmp_path, f"mesh = {mesh}\ndt = 0.5\nfinal_time = 0.5\nm_values = 1.0\nmax_time = 2\n")
    assert main(["cylinder", "--config", cfg, "--output-dir", str(tmp_path / "c")]) == 0
    text = (tmp_path / "c" / "cylinder_SRP_im.csv").read_text()
    lines = text.splitlines()
    assert "# drag_formula traction_x" in lines
    assert lines[-2] == "C_U,m,CD_ssmix,CD_srp,dCD_pct,L_ssmix,L_srp,dL_pct"
    assert lines[-1].startswith("10.0,1.0,")
    detail = (tmp_path / "c" / "cylinder_SRP_im_detail.csv").read_text().splitlines()
    assert [l.split(",")[1] for l in detail if l.startswith("1.0,")] == ["srp", "ssmix"]
