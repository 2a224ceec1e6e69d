import numpy as np
import pytest
from hypothesis import given, strategies as st

from srpflow.mesh import (
    CYLINDER_MESH_FILE,
    CylinderGeometry,
    MeshError,
    MeshParseError,
    TriMesh,
    boundary_nodes,
    format_mesh,
    generate_cylinder,
    generate_unit_square,
    load_cylinder_mesh,
    parse_mesh,
    read_mesh,
    write_mesh,
)

TWO_TRIANGLES = """srpmesh 1
4 2 4
0.0 0.0
1.0 0.0
1.0 1.0
0.0 1.0
0 1 2
0 2 3
0 1 1
1 2 1
2 3 1
3 0 1
tags
1 gamma_d
"""


@pytest.mark.parametrize("n, nodes, cells", [(1, 4, 2), (2, 9, 8), (200, 40401, 80000)])
def test_unit_square_counts(n, nodes, cells):
    m = generate_unit_square(n)
    assert (m.n_nodes, m.n_cells) == (nodes, cells)
    assert set(m.tag_names.values()) == {"gamma_d"}
    assert len(m.boundary_edges) == 4 * n


@given(st.integers(1, 30))
def test_unit_square_area_and_euler(n):
    m = generate_unit_square(n)
    assert abs(m.signed_areas.sum() - 1.0) < 1e-12
    assert np.all(m.signed_areas > 0)
    assert m.n_nodes - m.n_edges + m.n_cells == 1


def test_round_trip_is_byte_identical(tmp_path):
    m = parse_mesh(TWO_TRIANGLES)
    assert format_mesh(m) == TWO_TRIANGLES
    p = tmp_path / "sq.mesh"
    write_mesh(m, p)
    assert p.read_text() == TWO_TRIANGLES
    m2 = read_mesh(p)
    assert np.array_equal(m2.nodes, m.nodes) and np.array_equal(m2.cells, m.cells)


@given(st.integers(1, 12))
def test_round_trip_generated(n):
    m = generate_unit_square(n)
    text = format_mesh(m)
    assert format_mesh(parse_mesh(text)) == text


def test_short_node_section_reports_line():
    bad = TWO_TRIANGLES.replace("4 2 4", "5 2 4", 1)
    with pytest.raises(MeshParseError) as e:
        parse_mesh(bad)
    assert e.value.lineno == 7
    assert "nodes" in str(e.value)


def test_comments_are_ignored():
    text = TWO_TRIANGLES.replace("0 1 2\n", "0 1 2   # first cell\n# a comment line\n")
    assert parse_mesh(text).n_cells == 2


@pytest.mark.parametrize(
    "edit, check",
    [
        (("0 1 2\n", "0 2 1\n"), "signed area"),
        (("0 1 2\n", "0 1 7\n"), "out of range"),
        (("3 0 1\n", ""), "untagged"),
        (("3 0 1\n", "3 0 5\n"), "without names"),
    ],
)
def test_invariant_violations_name_the_check(edit, check):
    text = TWO_TRIANGLES.replace(*edit)
    if edit[1] == "":
        text = text.replace("4 2 4", "4 2 3")
    with pytest.raises(MeshError, match=check):
        parse_mesh(text)


def test_boundary_nodes():
    m1 = generate_unit_square(1)
    assert boundary_nodes(m1, ["gamma_d"]) == {0, 1, 2, 3}
    assert boundary_nodes(m1, []) == set()
    sides = {"bottom": 1, "right": 2, "top": 2, "left": 2}
    m2 = generate_unit_square(2, side_tags=sides, tag_names={1: "bottom", 2: "rest"})
    nodes = boundary_nodes(m2, ["bottom"])
    assert len(nodes) == 3
    assert np.all(m2.nodes[sorted(nodes), 1] == 0.0)
    with pytest.raises(KeyError):
        boundary_nodes(m2, ["nope"])


def test_mesh_is_immutable():
    m = generate_unit_square(2)
    with pytest.raises(ValueError):
        m.nodes[0, 0] = 3.0


def test_cylinder_geometry_invariants():
    CylinderGeometry(1.0, 20.0, 20.0, 40.0)
    with pytest.raises(ValueError):
        CylinderGeometry(diameter=0.0)
    with pytest.raises(ValueError):
        CylinderGeometry(1.0, 0.5, 20.0, 40.0)


def test_generated_cylinder_is_valid_and_tagged():
    g = CylinderGeometry(1.0, 5.0, 5.0, 10.0)
    m = generate_cylinder(g, 32, 8, 0.05)
    m.validate()
    counts = {m.tag_names[t]: int(np.sum(m.edge_tags == t)) for t in m.tag_names}
    assert counts == {"gamma_i": 8, "gamma_o": 8, "gamma_t": 16, "gamma_c": 32}
    circ = m.boundary_edges[m.edges_with_tags(["gamma_c"])].ravel()
    assert np.allclose(np.hypot(*m.nodes[circ].T), 0.5)
    box = 10.0 * 10.0 - np.pi * 0.25
    # the polygonal hole is slightly smaller than the disc
    assert 0 < m.area - box < 0.01


def _count_shipped(text):
    lines = [ln.split("#")[0].split() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    header = [int(t) for t in lines[1]]
    body = lines[2:]
    k = body.index(["tags"])
    widths = [len(ln) for ln in body[:k]]
    nodes = sum(1 for w in widths if w == 2)
    triples = k - nodes
    return header, nodes, triples


def test_shipped_cylinder_counts_match_header():
    from importlib.resources import files

    text = files("srpflow.data").joinpath(CYLINDER_MESH_FILE).read_text()
    header, nodes, triples = _count_shipped(text)
    assert header[0] == nodes
    assert header[1] + header[2] == triples
    m = load_cylinder_mesh()
    assert (m.n_nodes, m.n_cells, len(m.boundary_edges)) == tuple(header)
    assert set(m.tag_names.values()) == {"gamma_i", "gamma_o", "gamma_t", "gamma_c"}


def test_trimesh_rejects_bad_tag_count():
    m = generate_unit_square(1)
    with pytest.raises(MeshError):
        TriMesh(m.nodes, m.cells, m.boundary_edges, m.edge_tags[:-1], m.tag_names)
