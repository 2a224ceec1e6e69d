"""Conforming triangular meshes with integer-tagged boundary edges.

The on-disk format is a small ASCII layout::

    srpmesh 1
    <#nodes> <#cells> <#bedges>
    x y                # one line per node
    i j k              # one line per cell, 0-based, counterclockwise
    i j tag            # one line per boundary edge
    tags
    tag label          # one line per tag

Everything after ``#`` on a line is ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np

MAGIC = "srpmesh"
VERSION = 1


class MeshError(ValueError):
    """A mesh violates one of the structural invariants."""


class MeshParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def _readonly(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriMesh:
    nodes: np.ndarray
    cells: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: np.ndarray
    tag_names: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", _readonly(np.reshape(self.nodes, (-1, 2)), float))
        object.__setattr__(self, "cells", _readonly(np.reshape(self.cells, (-1, 3)), np.int64))
        object.__setattr__(
            self, "boundary_edges", _readonly(np.reshape(self.boundary_edges, (-1, 2)), np.int64)
        )
        object.__setattr__(self, "edge_tags", _readonly(np.ravel(self.edge_tags), np.int64))
        object.__setattr__(self, "tag_names", {int(k): str(v) for k, v in self.tag_names.items()})
        self.validate()

    # -- geometry -----------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.cells]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def area(self) -> float:
        return float(self.signed_areas.sum())

    @cached_property
    def _edge_data(self):
        # local edge e of a cell is opposite local vertex e
        loc = np.array([[1, 2], [2, 0], [0, 1]])
        all_edges = np.sort(self.cells[:, loc].reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(
            all_edges, axis=0, return_inverse=True, return_counts=True
        )
        return edges, inverse.reshape(-1, 3), counts

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges, sorted lexicographically (lo, hi)."""
        return self._edge_data[0]

    @property
    def cell_edges(self) -> np.ndarray:
        """``cell_edges[c, e]`` is the global index of the edge opposite local vertex ``e``."""
        return self._edge_data[1]

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def tag_id(self, tag) -> int:
        if isinstance(tag, (int, np.integer)):
            if int(tag) not in self.tag_names:
                raise KeyError(f"unknown boundary tag {tag!r}; known: {sorted(self.tag_names)}")
            return int(tag)
        for k, v in self.tag_names.items():
            if v == tag:
                return k
        raise KeyError(f"unknown boundary tag {tag!r}; known: {sorted(self.tag_names.values())}")

    def edges_with_tags(self, tags: Iterable) -> np.ndarray:
        """Indices into ``boundary_edges`` of the edges carrying any of ``tags``."""
        ids = [self.tag_id(t) for t in tags]
        return np.flatnonzero(np.isin(self.edge_tags, ids))

    @cached_property
    def boundary_edge_cells(self) -> tuple[np.ndarray, np.ndarray]:
        """(cell, local edge) owning each boundary edge."""
        edges, cell_edges, _ = self._edge_data
        key = np.sort(self.boundary_edges, axis=1)
        gidx = _edge_lookup(edges, key)
        owner = np.full(len(edges), -1, dtype=np.int64)
        local = np.full(len(edges), -1, dtype=np.int64)
        flat = cell_edges.ravel()
        owner[flat] = np.repeat(np.arange(self.n_cells), 3)
        local[flat] = np.tile(np.arange(3), self.n_cells)
        return owner[gidx], local[gidx]

    @cached_property
    def boundary_edge_ids(self) -> np.ndarray:
        """Global edge index (into ``edges``) of each boundary edge."""
        return _edge_lookup(self.edges, np.sort(self.boundary_edges, axis=1))

    # -- invariants -----------------------------------------------------------

    def validate(self):
        n = self.n_nodes
        if self.cells.size and (self.cells.min() < 0 or self.cells.max() >= n):
            raise MeshError("cell node index out of range")
        if self.boundary_edges.size and (
            self.boundary_edges.min() < 0 or self.boundary_edges.max() >= n
        ):
            raise MeshError("boundary edge node index out of range")
        if len(self.edge_tags) != len(self.boundary_edges):
            raise MeshError("one tag per boundary edge required")
        bad = np.flatnonzero(self.signed_areas <= 0)
        if bad.size:
            raise MeshError(f"non-positive signed area in cell {int(bad[0])}")
        unknown = set(np.unique(self.edge_tags).tolist()) - set(self.tag_names)
        if unknown:
            raise MeshError(f"boundary edges use tags without names: {sorted(unknown)}")
        edges, _, counts = self._edge_data
        if counts.max(initial=0) > 2:
            raise MeshError("non-manifold edge shared by more than two cells")
        topo = {tuple(e) for e in edges[counts == 1].tolist()}
        given = [tuple(e) for e in np.sort(self.boundary_edges, axis=1).tolist()]
        if len(set(given)) != len(given):
            raise MeshError("duplicate boundary edge")
        if set(given) != topo:
            missing = topo - set(given)
            if missing:
                raise MeshError(f"topological boundary edge {sorted(missing)[0]} is untagged")
            raise MeshError("tagged boundary edge is interior or not a mesh edge")


def _edge_lookup(edges: np.ndarray, key: np.ndarray) -> np.ndarray:
    """Row indices of ``key`` rows inside the lexicographically sorted ``edges``."""
    m = edges[:, 1].max(initial=0) + 1
    code = edges[:, 0] * m + edges[:, 1]
    kcode = key[:, 0] * m + key[:, 1]
    idx = np.searchsorted(code, kcode)
    idx = np.clip(idx, 0, len(code) - 1)
    if len(kcode) and not np.array_equal(code[idx], kcode):
        raise MeshError("edge not found in mesh")
    return idx


@dataclass(frozen=True)
class CylinderGeometry:
    """Square channel around a cylinder centred at the origin."""

    diameter: float = 1.0
    upstream: float = 20.0
    downstream: float = 20.0
    height: float = 40.0

    def __post_init__(self):
        if self.diameter <= 0:
            raise ValueError("diameter must be positive")
        for name in ("upstream", "downstream", "height"):
            if getattr(self, name) <= self.diameter:
                raise ValueError(f"{name} must exceed the diameter")


SIDES = ("bottom", "right", "top", "left")


def generate_rectangle(nx: int, ny: int, x0=0.0, x1=1.0, y0=0.0, y1=1.0, side_tags=None,
                       tag_names=None) -> TriMesh:
    """Structured triangulation of a rectangle, diagonals from lower-left to upper-right."""
    if nx < 1 or ny < 1:
        raise ValueError("need at least one cell per side")
    side_tags = side_tags or {s: 1 for s in SIDES}
    tag_names = tag_names or {1: "gamma_d"}
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    I, J = np.meshgrid(np.arange(nx), np.arange(ny))
    I, J = I.ravel(), J.ravel()
    p00, p10, p01, p11 = vid(I, J), vid(I + 1, J), vid(I, J + 1), vid(I + 1, J + 1)
    cells = np.empty((2 * nx * ny, 3), dtype=np.int64)
    cells[0::2] = np.column_stack([p00, p10, p11])
    cells[1::2] = np.column_stack([p00, p11, p01])

    i = np.arange(nx)
    j = np.arange(ny)
    sides = {
        "bottom": np.column_stack([vid(i, 0), vid(i + 1, 0)]),
        "right": np.column_stack([vid(nx, j), vid(nx, j + 1)]),
        "top": np.column_stack([vid(i + 1, ny), vid(i, ny)])[::-1],
        "left": np.column_stack([vid(0, j + 1), vid(0, j)])[::-1],
    }
    bedges = np.concatenate([sides[s] for s in SIDES])
    tags = np.concatenate([np.full(len(sides[s]), side_tags[s]) for s in SIDES])
    return TriMesh(nodes, cells, bedges, tags, tag_names)


def generate_unit_square(n: int, side_tags=None, tag_names=None) -> TriMesh:
    """``n`` x ``n`` squares, each cut into two triangles: (n+1)^2 nodes, 2n^2 cells."""
    return generate_rectangle(n, n, side_tags=side_tags, tag_names=tag_names)


CYLINDER_TAGS = {1: "gamma_i", 2: "gamma_o", 3: "gamma_t", 4: "gamma_c"}


def _geometric_growth(n: int, first: float) -> float:
    """Ratio r with (r - 1) / (r^n - 1) = first, for 0 < first < 1/n."""
    if not 0.0 < first < 1.0 / n:
        raise ValueError("first layer fraction must lie in (0, 1/n_radial)")
    lo, hi = 1.0 + 1e-12, 2.0
    while (hi - 1.0) / (hi**n - 1.0) > first:
        hi *= 1.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if (mid - 1.0) / (mid**n - 1.0) > first:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate_cylinder(geom: CylinderGeometry = CylinderGeometry(), n_theta: int = 128, n_radial: int = 48,
                      first_cell: float = 0.02) -> TriMesh:
    """O-grid between the cylinder and the outer rectangle.

    The circle is sampled uniformly in angle; the rectangle is sampled
    piecewise uniformly with its four corners on grid lines.  Radial layers
    are graded geometrically so that the layer next to the cylinder has
    thickness ``first_cell`` along the downstream axis.  Tags follow
    ``CYLINDER_TAGS``.
    """
    if n_theta < 8 or n_theta % 4 or n_radial < 2:
        raise ValueError("need n_theta a multiple of 4 (>= 8) and n_radial >= 2")
    R = 0.5 * geom.diameter
    xl, xr, yt = -geom.upstream, geom.downstream, 0.5 * geom.height
    corners = [(xr, 0.0), (xr, yt), (xl, yt), (xl, -yt), (xr, -yt)]
    ang = [np.arctan2(y, x) % (2 * np.pi) for x, y in corners[1:]]
    ks = [0] + [int(round(n_theta * a / (2 * np.pi))) for a in ang] + [n_theta]
    if len(set(ks)) != len(ks) or ks != sorted(ks):
        raise ValueError("n_theta too small to separate the rectangle corners")
    pts = corners + [corners[0]]
    outer = np.empty((n_theta, 2))
    for (k0, k1), p0, p1 in zip(zip(ks[:-1], ks[1:]), pts[:-1], pts[1:]):
        s = (np.arange(k0, k1) - k0) / (k1 - k0)
        outer[k0:k1] = (1 - s)[:, None] * np.array(p0) + s[:, None] * np.array(p1)
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    inner = R * np.column_stack([np.cos(th), np.sin(th)])
    r = _geometric_growth(n_radial, first_cell / (xr - R))
    xi = (r ** np.arange(n_radial + 1) - 1.0) / (r**n_radial - 1.0)
    nodes = (1 - xi)[:, None, None] * inner[None] + xi[:, None, None] * outer[None]  # (j, k, 2)
    nodes = nodes.reshape(-1, 2)

    def vid(k, j):
        return j * n_theta + k % n_theta

    K, J = np.meshgrid(np.arange(n_theta), np.arange(n_radial))
    K, J = K.ravel(), J.ravel()
    a, b, c, d = vid(K, J), vid(K + 1, J), vid(K + 1, J + 1), vid(K, J + 1)
    cells = np.empty((2 * len(a), 3), dtype=np.int64)
    cells[0::2] = np.column_stack([a, c, b])
    cells[1::2] = np.column_stack([a, d, c])

    k = np.arange(n_theta)
    circ = np.column_stack([vid(k, 0), vid(k + 1, 0)])
    out = np.column_stack([vid(k, n_radial), vid(k + 1, n_radial)])
    mid = 0.5 * (nodes[out[:, 0]] + nodes[out[:, 1]])
    tol = 1e-9 * max(geom.upstream, geom.downstream, geom.height)
    otag = np.where(mid[:, 0] < xl + tol, 1, np.where(mid[:, 0] > xr - tol, 2, 3))
    bedges = np.vstack([out, circ])
    tags = np.concatenate([otag, np.full(n_theta, 4)])
    return TriMesh(nodes, cells, bedges, tags, dict(CYLINDER_TAGS))


CYLINDER_MESH_FILE = "cylinder.mesh"


def load_cylinder_mesh() -> TriMesh:
    """The shipped cylinder mesh (see ``scripts/make_cylinder_mesh.py``)."""
    from importlib.resources import files

    return parse_mesh(files("srpflow.data").joinpath(CYLINDER_MESH_FILE).read_text())


def boundary_nodes(mesh: TriMesh, tags: Iterable) -> set[int]:
    idx = mesh.edges_with_tags(list(tags))
    return set(np.unique(mesh.boundary_edges[idx]).tolist())


# -- file I/O ------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def format_mesh(mesh: TriMesh) -> str:
    out = [f"{MAGIC} {VERSION}", f"{mesh.n_nodes} {mesh.n_cells} {len(mesh.boundary_edges)}"]
    out += [f"{_fmt(x)} {_fmt(y)}" for x, y in mesh.nodes.tolist()]
    out += [f"{i} {j} {k}" for i, j, k in mesh.cells.tolist()]
    out += [f"{i} {j} {t}" for (i, j), t in zip(mesh.boundary_edges.tolist(), mesh.edge_tags.tolist())]
    out.append("tags")
    out += [f"{k} {v}" for k, v in sorted(mesh.tag_names.items())]
    return "\n".join(out) + "\n"


def write_mesh(mesh: TriMesh, path) -> None:
    Path(path).write_text(format_mesh(mesh))


def parse_mesh(text: str) -> TriMesh:
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].split()
        if body:
            lines.append((lineno, body))
    pos = 0

    def take(section):
        nonlocal pos
        if pos >= len(lines):
            last = lines[-1][0] if lines else 0
            raise MeshParseError(last + 1, f"unexpected end of file in {section} section")
        item = lines[pos]
        pos += 1
        return item

    lineno, tok = take("header")
    if len(tok) != 2 or tok[0] != MAGIC:
        raise MeshParseError(lineno, f"expected '{MAGIC} {VERSION}'")
    if tok[1] != str(VERSION):
        raise MeshParseError(lineno, f"unsupported version {tok[1]}")
    lineno, tok = take("header")
    try:
        nn, nc, nb = (int(t) for t in tok)
    except ValueError:
        raise MeshParseError(lineno, "expected '<#nodes> <#cells> <#bedges>'") from None

    def section(name, count, width, conv):
        rows = []
        for _ in range(count):
            ln, tk = take(name)
            if len(tk) != width or tk == ["tags"]:
                raise MeshParseError(ln, f"expected {width} values in {name} section, got {len(tk)}")
            try:
                rows.append([conv(t) for t in tk])
            except ValueError:
                raise MeshParseError(ln, f"malformed entry in {name} section") from None
        return rows

    nodes = section("nodes", nn, 2, float)
    cells = section("cells", nc, 3, int)
    bedges = section("boundary edges", nb, 3, int)
    lineno, tok = take("tags")
    if tok != ["tags"]:
        raise MeshParseError(lineno, "expected 'tags' section")
    names = {}
    while pos < len(lines):
        ln, tk = lines[pos]
        pos += 1
        if len(tk) != 2:
            raise MeshParseError(ln, "expected 'tag label' in tags section")
        try:
            names[int(tk[0])] = tk[1]
        except ValueError:
            raise MeshParseError(ln, "tag id must be an integer") from None
    be = np.array(bedges, dtype=np.int64).reshape(-1, 3)
    return TriMesh(
        np.array(nodes, dtype=float).reshape(-1, 2),
        np.array(cells, dtype=np.int64).reshape(-1, 3),
        be[:, :2],
        be[:, 2],
        names,
    )


def read_mesh(path) -> TriMesh:
    return parse_mesh(Path(path).read_text())
