"""Projection schemes for unsteady generalized Newtonian flow on triangles."""

from .fem import FEField, FESpace
from .mesh import CylinderGeometry, TriMesh, generate_unit_square, read_mesh, write_mesh
from .mms import ManufacturedCase
from .problem import FlowProblem, VelocityBC
from .rheology import GeneralizedNewtonianLaw
from .scheme import FlowState, ProjectionScheme, SchemeConfig, StepReport

__version__ = "0.1.0"

__all__ = [
    "CylinderGeometry", "FEField", "FESpace", "FlowProblem", "FlowState", "GeneralizedNewtonianLaw",
    "ManufacturedCase", "ProjectionScheme", "SchemeConfig", "StepReport", "TriMesh", "VelocityBC",
    "generate_unit_square", "read_mesh", "write_mesh",
]
