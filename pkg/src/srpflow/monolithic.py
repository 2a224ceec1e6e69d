"""Coupled Taylor-Hood solve with a penalized incompressibility constraint.

Used as an oracle for the projection schemes: one implicit BDF step (or the
steady problem) with the viscosity and convection frozen at the previous
fixed-point iterate.  The saddle-point system

    [ M/c + C(w) + A(nu)   -B^T      ] [u]   [f + history]
    [ -B                   -eps M_p  ] [p] = [0          ]

is factorized with SuperLU, which is acceptable for an oracle on the mesh
sizes used here.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem
from .fem import FEField, FESpace
from .problem import FlowProblem
from .rheology import frobenius2, shear_tensor

log = logging.getLogger(__name__)


@dataclass
class MonolithicResult:
    u: FEField
    p: FEField
    iterations: int
    increment: float
    converged: bool


class MonolithicSolver:
    def __init__(self, problem: FlowProblem, penalty: float = 1e-10, fixed_point_tol: float = 1e-8,
                 max_iter: int = 100, convection: bool = True, qdeg: int = fem.DEFAULT_QUAD):
        if not penalty > 0:
            raise ValueError("penalty must be positive")
        self.problem = problem
        self.penalty = penalty
        self.tol = fixed_point_tol
        self.max_iter = max_iter
        self.convection = convection
        self.qdeg = qdeg
        mesh = problem.mesh
        self.V = FESpace(mesh, 2, 2, problem.velocity_dirichlet_dofs)
        self.P = FESpace(mesh, 1, 1)
        self.Mv = fem.assemble_mass(self.V, qdeg=qdeg)
        self.Mp = fem.assemble_mass(self.P, qdeg=qdeg)
        self.B = fem.assemble_divergence(self.P, self.V, qdeg=qdeg)
        self.nv = self.V.ndofs

    def _nu(self, coeffs):
        g = FEField(self.V, coeffs).grad_qp(self.qdeg)
        return self.problem.law.from_norm2(frobenius2(shear_tensor(g)))

    def solve(self, t1: float, mass_coef: float = 0.0, rhs_history=None, u_guess=None) -> MonolithicResult:
        """Generic solve of ``mass_coef M u + N(u) u + grad p = f(t1) + rhs_history``."""
        prob, V, q = self.problem, self.V, self.qdeg
        f = fem.assemble_vector(V, prob.forcing_qp(t1, q), qdeg=q)
        if rhs_history is not None:
            f = f + rhs_history
        rhs = np.concatenate([f, np.zeros(self.P.ndofs)])
        gD = prob.velocity_dirichlet_values(t1)
        uk = np.zeros(self.nv) if u_guess is None else np.array(u_guess, dtype=float)
        fixed = not self.convection and prob.law.is_newtonian
        inc, converged, it = np.inf, False, 0
        for it in range(1, self.max_iter + 1):
            A = fem.assemble_diffusion(V, self._nu(uk), q)
            if mass_coef:
                A = A + mass_coef * self.Mv
            if self.convection:
                A = A + fem.assemble_convection(V, FEField(V, uk), prob.rho, q)
            K = sp.bmat([[A, -self.B.T], [-self.B, -self.penalty * self.Mp]], format="csr")
            K, b = fem.apply_dirichlet(K, rhs, V.dirichlet_dofs, gD)
            x = spla.spsolve(K.tocsc(), b)
            if not np.all(np.isfinite(x)):
                raise FloatingPointError("monolithic solve produced non-finite values")
            unew = x[: self.nv]
            d = unew - uk
            inc = float(np.sqrt(d @ (self.Mv @ d)))
            scale = float(np.sqrt(unew @ (self.Mv @ unew)))
            uk = unew
            if fixed or inc <= self.tol * (scale if scale >= 1e-14 else 1.0):
                converged = True
                break
        if not converged:
            log.warning("monolithic fixed point did not converge (increment %.2e)", inc)
        return MonolithicResult(FEField(V, uk), FEField(self.P, x[self.nv:]), it, inc, converged)

    def step(self, state, dt: float) -> MonolithicResult:
        """One implicit step from a FlowState: BDF2, or backward Euler when ``state.step == 0``."""
        rho = self.problem.rho
        if state.step > 0:
            a0, hist = 1.5, 2.0 * state.u.coeffs - 0.5 * state.u_prev.coeffs
        else:
            a0, hist = 1.0, state.u.coeffs
        return self.solve(state.t + dt, rho * a0 / dt, (rho / dt) * (self.Mv @ hist), state.u.coeffs)

    def steady(self, u_guess=None) -> MonolithicResult:
        return self.solve(0.0, 0.0, None, u_guess)


def solve_monolithic_step(problem: FlowProblem, state, dt: Optional[float], penalty: float = 1e-10,
                          fixed_point_tol: float = 1e-8, convection: bool = True):
    """One penalized coupled step; ``dt=None`` (or ``inf``) solves the steady problem."""
    solver = MonolithicSolver(problem, penalty, fixed_point_tol, convection=convection)
    if dt is None or np.isinf(dt):
        res = solver.steady(None if state is None else state.u.coeffs)
    else:
        res = solver.step(state, dt)
    return res.u, res.p
