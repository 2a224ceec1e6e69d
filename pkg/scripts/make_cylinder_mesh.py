"""Write the shipped cylinder mesh.

Domain: cylinder of diameter 1 at the origin inside [-20, 20] x [-20, 20]
(upstream = downstream = height / 2 = 20 diameters).

Grading: an O-grid with 128 uniform angular sectors (corners of the box on
grid lines) and 48 geometrically graded radial layers.  The first layer is
0.02 diameters thick on the downstream axis, so the near-wake cells are
about 0.02 x 0.025 and the far-field cells about 2 x 1.
"""

import argparse
from pathlib import Path

from srpflow.mesh import CYLINDER_MESH_FILE, CylinderGeometry, generate_cylinder, write_mesh

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "srpflow" / "data" / CYLINDER_MESH_FILE


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-theta", type=int, default=128)
    ap.add_argument("--n-radial", type=int, default=48)
    ap.add_argument("--first-cell", type=float, default=0.02)
    ap.add_argument("--half-width", type=float, default=20.0)
    ap.add_argument("-o", "--output", type=Path, default=DEFAULT_OUT)
    a = ap.parse_args(argv)
    w = a.half_width
    mesh = generate_cylinder(CylinderGeometry(1.0, w, w, 2 * w), a.n_theta, a.n_radial, a.first_cell)
    mesh.validate()
    write_mesh(mesh, a.output)
    print(f"{a.output}: {mesh.n_nodes} nodes, {mesh.n_cells} cells, {len(mesh.boundary_edges)} boundary edges")


if __name__ == "__main__":
    main()
