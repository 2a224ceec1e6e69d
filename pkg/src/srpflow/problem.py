"""Problem description shared by the projection driver and the monolithic oracle."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from . import fem
from .mesh import TriMesh
from .rheology import GeneralizedNewtonianLaw


@dataclass(frozen=True)
class VelocityBC:
    """Dirichlet data ``value(t, x, y) -> (ux, uy)`` on the listed components of ``tags``."""

    tags: tuple
    value: Callable | tuple = (0.0, 0.0)
    components: tuple = (0, 1)

    def evaluate(self, t, x, y):
        if callable(self.value):
            ux, uy = self.value(t, x, y)
        else:
            ux, uy = self.value
        return (np.broadcast_to(np.asarray(ux, dtype=float), x.shape),
                np.broadcast_to(np.asarray(uy, dtype=float), x.shape))


@dataclass(eq=False)
class FlowProblem:
    mesh: TriMesh
    law: GeneralizedNewtonianLaw
    rho: float = 1.0
    velocity_bcs: list = field(default_factory=list)
    outflow_tags: tuple = ()
    forcing: Optional[Callable] = None

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("density must be positive")
        for bc in self.velocity_bcs:
            for t in bc.tags:
                self.mesh.tag_id(t)
        for t in self.outflow_tags:
            self.mesh.tag_id(t)

    @property
    def has_outflow(self) -> bool:
        return len(self.outflow_tags) > 0

    @cached_property
    def _bc_layout(self):
        V = fem.FESpace(self.mesh, 2, 2)
        n = V.nscalar
        slots = {}  # global dof -> (bc index, scalar dof, component)
        for k, bc in enumerate(self.velocity_bcs):
            s = V.boundary_scalar_dofs(bc.tags)
            for c in bc.components:
                for d in s.tolist():
                    slots[c * n + d] = (k, d, c)
        dofs = np.array(sorted(slots), dtype=np.int64)
        owner = np.array([slots[d][0] for d in dofs], dtype=np.int64)
        sdof = np.array([slots[d][1] for d in dofs], dtype=np.int64)
        comp = np.array([slots[d][2] for d in dofs], dtype=np.int64)
        return dofs, owner, sdof, comp

    @property
    def velocity_dirichlet_dofs(self) -> np.ndarray:
        return self._bc_layout[0]

    def velocity_dirichlet_values(self, t: float) -> np.ndarray:
        dofs, owner, sdof, comp = self._bc_layout
        xy = fem.FESpace(self.mesh, 2, 1).dof_coords
        out = np.empty(len(dofs))
        for k, bc in enumerate(self.velocity_bcs):
            sel = owner == k
            if not sel.any():
                continue
            x, y = xy[sdof[sel], 0], xy[sdof[sel], 1]
            ux, uy = bc.evaluate(t, x, y)
            out[sel] = np.where(comp[sel] == 0, ux, uy)
        return out

    def forcing_qp(self, t: float, qdeg: int = fem.DEFAULT_QUAD):
        g = fem.geometry(self.mesh, qdeg)
        if self.forcing is None:
            return np.zeros(g.dx.shape + (2,))
        fx, fy = self.forcing(t, g.points[..., 0], g.points[..., 1])
        return np.stack(np.broadcast_arrays(fx, fy), axis=-1)
