"""Legacy ASCII VTK (2.0) export.

Fields are written at mesh vertices only.  For P2 data this drops the edge
midpoint values, so the export is a lossy linear sub-sampling meant for
inspection, not for restart.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .fem import FEField
from .mesh import TriMesh

VTK_TRIANGLE = 5


def _num(x: float) -> str:
    return format(float(x), ".17g")


def vertex_values(field, mesh: TriMesh) -> np.ndarray:
    """(n_nodes,) for scalars or (n_nodes, 2) for vectors."""
    if isinstance(field, FEField):
        if field.space.mesh is not mesh and field.space.mesh.n_nodes != mesh.n_nodes:
            raise ValueError("field lives on a different mesh")
        comps = [c[: mesh.n_nodes] for c in field.components()]
        return comps[0] if len(comps) == 1 else np.column_stack(comps)
    a = np.asarray(field, dtype=float)
    if a.shape[0] != mesh.n_nodes or a.ndim > 2 or (a.ndim == 2 and a.shape[1] != 2):
        raise ValueError("raw arrays must have shape (n_nodes,) or (n_nodes, 2)")
    return a


def format_vtk(fields: dict, mesh: TriMesh, title: str = "srpflow") -> str:
    out = ["# vtk DataFile Version 2.0", title.replace("\n", " ")[:255], "ASCII", "DATASET UNSTRUCTURED_GRID"]
    out.append(f"POINTS {mesh.n_nodes} double")
    out += [f"{_num(x)} {_num(y)} 0" for x, y in mesh.nodes]
    out.append(f"CELLS {mesh.n_cells} {4 * mesh.n_cells}")
    out += [f"3 {i} {j} {k}" for i, j, k in mesh.cells.tolist()]
    out.append(f"CELL_TYPES {mesh.n_cells}")
    out += [str(VTK_TRIANGLE)] * mesh.n_cells
    if fields:
        out.append(f"POINT_DATA {mesh.n_nodes}")
    for name, f in fields.items():
        if not name or any(ch.isspace() for ch in name):
            raise ValueError(f"invalid array name {name!r}")
        v = vertex_values(f, mesh)
        if v.ndim == 2:
            out.append(f"VECTORS {name} double")
            out += [f"{_num(a)} {_num(b)} 0" for a, b in v]
        else:
            out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            out += [_num(a) for a in v]
    return "\n".join(out) + "\n"


def write_vtk(fields: dict, mesh: TriMesh, path, title: str = "srpflow") -> None:
    Path(path).write_text(format_vtk(fields, mesh, title))
