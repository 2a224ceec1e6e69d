"""Incremental (IP) and shear-rate (SRP) projection schemes.

One time step runs

1. prediction: BDF2 momentum solve for ``u_tilde`` with the old pressure
   gradient, nonlinear terms handled by the configured strategies;
2. ``phi``: Poisson problem driven by the divergence of ``u_tilde``;
3. velocity correction: L2 projection of ``u_tilde - c grad phi``;
4. ``psi`` (SRP only): Poisson problem driven by the divergence of the
   viscous-stress mismatch between prediction and correction;
5. pressure update: L2 projection of ``p + phi + alpha psi - mu``.

``c = dt / (rho a0)`` with ``a0 = 3/2`` for BDF2 and ``1`` on a one-level
first step.  Velocity is P2, pressure P1, ``phi`` and ``psi`` P2.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import fem, sparse_la
from .fem import FEField, FESpace
from .problem import FlowProblem
from .rheology import frobenius2, shear_tensor, viscosity_gateaux
from .sparse_la import SolverConfig

log = logging.getLogger(__name__)

VARIANTS = ("IP", "SRP")
CONVECTION = ("explicit_prev", "explicit_richardson", "implicit_prev", "implicit_richardson", "newton")
VISCOSITY = (
    "explicit_prev",
    "explicit_richardson_state",
    "explicit_richardson_value",
    "implicit_prev",
    "implicit_richardson_state",
    "implicit_richardson_value",
    "newton",
)
FIRST_STEPS = ("backward_euler", "crank_nicolson")


class SchemeError(FloatingPointError):
    """Non-finite values or a failed linear solve inside a time step."""


@dataclass(frozen=True)
class SchemeConfig:
    variant: str = "SRP"
    convection_strategy: str = "implicit_prev"
    viscosity_strategy: str = "implicit_prev"
    dt: float = 0.1
    final_time: float = 1.0
    fixed_point_tol: float = 1e-8
    fixed_point_max_iter: int = 50
    alpha: float = 1.0
    first_step: str = "backward_euler"
    correction_bc: str = "none"
    phi_rhs: str = "divergence"
    prediction_solver: SolverConfig = sparse_la.PREDICTION
    poisson_solver: SolverConfig = sparse_la.POISSON
    mass_solver: SolverConfig = sparse_la.MASS

    def __post_init__(self):
        def choice(name, allowed):
            v = getattr(self, name)
            if v not in allowed:
                raise ValueError(f"{name} must be one of {', '.join(allowed)}; got {v!r}")

        choice("variant", VARIANTS)
        choice("convection_strategy", CONVECTION)
        choice("viscosity_strategy", VISCOSITY)
        choice("first_step", FIRST_STEPS)
        choice("correction_bc", ("none", "dirichlet"))
        choice("phi_rhs", ("divergence", "velocity"))
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.final_time < self.dt * (1 - 1e-12):
            raise ValueError("final_time must be >= dt")
        if not self.fixed_point_tol > 0:
            raise ValueError("fixed_point_tol must be positive")
        if self.fixed_point_max_iter < 1:
            raise ValueError("fixed_point_max_iter must be >= 1")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")

    @property
    def explicit(self) -> bool:
        return self.convection_strategy.startswith("explicit") and self.viscosity_strategy.startswith("explicit")

    @property
    def n_steps(self) -> int:
        return int(round(self.final_time / self.dt))

    @classmethod
    def preset(cls, name: str, **kw) -> "SchemeConfig":
        """``IP_ex``, ``IP_im``, ``SRP_ex`` or ``SRP_im``."""
        try:
            variant, mode = name.split("_")
            strat = {"ex": "explicit_prev", "im": "implicit_prev"}[mode]
        except (ValueError, KeyError):
            raise ValueError(f"unknown scheme preset {name!r}") from None
        return cls(variant=variant, convection_strategy=strat, viscosity_strategy=strat, **kw)


@dataclass
class FlowState:
    u: FEField
    u_prev: FEField
    p: FEField
    t: float = 0.0
    rho: float = 1.0
    step: int = 0

    def __post_init__(self):
        if self.u.space is not self.u_prev.space:
            if self.u.space.mesh is not self.u_prev.space.mesh or self.u.space.key != self.u_prev.space.key:
                raise ValueError("velocity levels live on different spaces")
        if self.p.space.mesh is not self.u.space.mesh:
            raise ValueError("pressure and velocity live on different meshes")
        if self.t < 0 or self.rho <= 0:
            raise ValueError("need t >= 0 and rho > 0")


@dataclass
class StepReport:
    fixed_point_iterations: int = 0
    fixed_point_increment: float = 0.0
    fixed_point_converged: bool = True
    linear_iterations: dict = field(default_factory=dict)
    linear_solves: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def add(self, name: str, its: int):
        self.linear_iterations[name] = self.linear_iterations.get(name, 0) + int(its)
        self.linear_solves[name] = self.linear_solves.get(name, 0) + 1


@dataclass
class Prediction:
    u_tilde: FEField
    nu_star: np.ndarray  # viscosity at quadrature points used in the last solve
    report: StepReport


def _check_finite(x, what):
    if not np.all(np.isfinite(x)):
        raise SchemeError(f"non-finite values in {what}")


class ProjectionScheme:
    """Owns the discrete spaces and constant matrices for one problem and config.

    ``psi_override``, if given, replaces the computed ``psi`` (used to check
    that IP is SRP with ``psi = 0``).
    """

    def __init__(self, problem: FlowProblem, cfg: SchemeConfig, qdeg: int = fem.DEFAULT_QUAD,
                 psi_override: Optional[Callable] = None):
        self.problem = problem
        self.cfg = cfg
        self.qdeg = qdeg
        self.psi_override = psi_override
        mesh = problem.mesh
        self.V = FESpace(mesh, 2, 2, problem.velocity_dirichlet_dofs)
        self.S = FESpace(mesh, 2, 1)
        self.P = FESpace(mesh, 1, 1)
        q = qdeg
        self.Mv = fem.assemble_mass(self.V, qdeg=q)
        self.K = fem.assemble_poisson(self.S, qdeg=q)
        self.Mp = fem.assemble_mass(self.P, qdeg=q)
        self.Mps = fem.assemble_mixed_mass(self.P, self.S, qdeg=q)
        self.Gp = fem.assemble_gradient(self.V, self.P, qdeg=q)
        self.Gs = fem.assemble_gradient(self.V, self.S, qdeg=q)
        self.Ds = fem.assemble_divergence(self.S, self.V, qdeg=q)
        self.ws = fem.assemble_vector(self.S, 1.0, qdeg=q)
        self.area = float(self.ws.sum())
        self.phi_dofs = self.S.boundary_scalar_dofs(problem.outflow_tags) if problem.has_outflow else None
        if self.phi_dofs is not None:
            self.K_phi, _ = fem.apply_dirichlet(self.K, np.zeros(self.S.ndofs), self.phi_dofs)
        self._ones_p = np.ones(self.P.ndofs)

    # -- helpers -------------------------------------------------------------------

    def initial_state(self, velocity, pressure=None, t0: float = 0.0, velocity_prev=None) -> FlowState:
        """Interpolated initial data; ``velocity(x, y)`` and ``pressure(x, y)`` callables or FEFields."""

        def field_of(space, f):
            if f is None:
                return space.zero()
            if isinstance(f, FEField):
                return f.copy()
            return fem.interpolate(space, f)

        u = field_of(self.V, velocity)
        up = field_of(self.V, velocity_prev) if velocity_prev is not None else u.copy()
        return FlowState(u, up, field_of(self.P, pressure), t0, self.problem.rho,
                         0 if velocity_prev is None else 1)

    def l2_norm(self, coeffs) -> float:
        return float(np.sqrt(max(coeffs @ (self.Mv @ coeffs), 0.0)))

    def _time_coeffs(self, state: FlowState):
        """(a0, history combination, implicitness theta)."""
        if state.step > 0:
            return 1.5, 2.0 * state.u.coeffs - 0.5 * state.u_prev.coeffs, 1.0
        if self.cfg.first_step == "crank_nicolson":
            return 1.0, state.u.coeffs.copy(), 0.5
        return 1.0, state.u.coeffs.copy(), 1.0

    def _shear(self, coeffs):
        g = FEField(self.V, coeffs).grad_qp(self.qdeg)
        return shear_tensor(g), g

    def _nu(self, coeffs):
        D, _ = self._shear(coeffs)
        return self.problem.law.from_norm2(frobenius2(D))

    def _solve(self, kind, A, b, x0, report):
        cfgs = {"prediction": self.cfg.prediction_solver, "mass": self.cfg.mass_solver}
        try:
            if kind == "prediction":
                res = sparse_la.solve_nonsymmetric(A, b, cfgs[kind], x0)
            else:
                res = sparse_la.solve_spd(A, b, cfgs[kind], x0)
        except sparse_la.SolverBreakdown as e:
            raise SchemeError(f"{kind} solve failed: {e}") from e
        report.add(kind, res.iterations)
        if not res.converged:
            raise SchemeError(f"{kind} solve did not converge (residual {res.residual:.2e})")
        return res.x

    # -- step 1: prediction ----------------------------------------------------------

    def _wind(self, state, uk, ukm1):
        s = self.cfg.convection_strategy
        if s == "explicit_prev":
            return state.u.coeffs
        if s == "explicit_richardson":
            return 2.0 * state.u.coeffs - state.u_prev.coeffs if state.step > 0 else state.u.coeffs
        if s == "implicit_richardson":
            return 2.0 * uk - ukm1
        return uk  # implicit_prev, newton

    def _viscosity_qp(self, state, uk, ukm1):
        s = self.cfg.viscosity_strategy
        un, unm1 = state.u.coeffs, (state.u_prev.coeffs if state.step > 0 else state.u.coeffs)
        if s == "explicit_prev":
            return self._nu(un)
        if s == "explicit_richardson_state":
            return self._nu(2.0 * un - unm1)
        if s == "explicit_richardson_value":
            return 2.0 * self._nu(un) - self._nu(unm1)
        if s == "implicit_richardson_state":
            return self._nu(2.0 * uk - ukm1)
        if s == "implicit_richardson_value":
            return 2.0 * self._nu(uk) - self._nu(ukm1)
        return self._nu(uk)  # implicit_prev, newton

    def _operator(self, state, uk, ukm1, theta):
        """Implicit momentum operator (without the time term) and its Newton right-hand side."""
        rho = state.rho
        V, q = self.V, self.qdeg
        nu = self._viscosity_qp(state, uk, ukm1)
        wind = FEField(V, self._wind(state, uk, ukm1)).values_qp(q)
        A = fem.assemble_convection(V, wind, rho, q) + fem.assemble_diffusion(V, nu, q)
        extra = np.zeros(V.ndofs)
        if self.cfg.convection_strategy == "newton":
            _, grad = self._shear(uk)
            R = fem.assemble_convection_reaction(V, grad, rho, q)
            A = A + R
            extra += R @ uk
        if self.cfg.viscosity_strategy == "newton":
            D, _ = self._shear(uk)
            J = fem.assemble_viscosity_jacobian(V, viscosity_gateaux(self.problem.law, D), D, q)
            A = A + J
            extra += J @ uk
        return theta * A, theta * extra, nu

    def predict_velocity(self, state: FlowState, report: Optional[StepReport] = None) -> Prediction:
        cfg, prob = self.cfg, self.problem
        report = report or StepReport()
        dt, rho = cfg.dt, state.rho
        a0, hist, theta = self._time_coeffs(state)
        t1 = state.t + dt
        V, q = self.V, self.qdeg

        f = prob.forcing_qp(t1, q)
        if theta < 1.0:
            f = theta * f + (1.0 - theta) * prob.forcing_qp(state.t, q)
        b0 = fem.assemble_vector(V, f, qdeg=q) - self.Gp @ state.p.coeffs + (rho / dt) * (self.Mv @ hist)
        if theta < 1.0:
            un = state.u.coeffs
            nu_n = self._nu(un)
            Aexp = fem.assemble_convection(V, state.u, rho, q) + fem.assemble_diffusion(V, nu_n, q)
            b0 -= (1.0 - theta) * (Aexp @ un)
        Mt = (rho * a0 / dt) * self.Mv
        gD = prob.velocity_dirichlet_values(t1)

        uk = state.u.coeffs.copy()
        ukm1 = uk
        guess = 2.0 * state.u.coeffs - state.u_prev.coeffs if state.step > 0 else state.u.coeffs.copy()
        inc, converged, nu = np.inf, False, None
        for k in range(cfg.fixed_point_max_iter):
            Aop, extra, nu = self._operator(state, uk, ukm1, theta)
            A, b = fem.apply_dirichlet(Mt + Aop, b0 + extra, V.dirichlet_dofs, gD)
            unew = self._solve("prediction", A, b, guess, report)
            _check_finite(unew, "the predicted velocity")
            report.fixed_point_iterations = k + 1
            if cfg.explicit:
                inc, converged = 0.0, True
                uk = unew
                break
            d = unew - uk
            inc = self.l2_norm(d)
            scale = self.l2_norm(unew)
            ukm1, uk = uk, unew
            guess = unew
            if inc <= cfg.fixed_point_tol * (scale if scale >= 1e-14 else 1.0):
                converged = True
                break
        report.fixed_point_increment = float(inc)
        report.fixed_point_converged = converged
        if not converged:
            log.warning("fixed point did not converge in %d iterations (increment %.2e)",
                        cfg.fixed_point_max_iter, inc)
        return Prediction(FEField(V, uk), nu, report)

    # -- step 2: phi -------------------------------------------------------------------

    def _c(self, state):
        a0, _, _ = self._time_coeffs(state)
        return self.cfg.dt / (state.rho * a0)

    def pressure_poisson_phi(self, u_tilde: FEField, c: float, report: Optional[StepReport] = None) -> FEField:
        """Solve ``(grad phi, grad z) = -(div u_tilde, z) / c``.

        With ``phi_rhs="velocity"`` the right-hand side is ``(u_tilde, grad z) / c``.
        The two agree when ``u_tilde . n = 0`` on the boundary; only the
        divergence form is consistent with inhomogeneous Dirichlet data.
        """
        report = report or StepReport()
        if self.cfg.phi_rhs == "velocity":
            b = (self.Gs.T @ u_tilde.coeffs) / c
        else:
            b = -(self.Ds @ u_tilde.coeffs) / c
        try:
            if self.phi_dofs is None:
                res = sparse_la.solve_neumann_poisson(self.K, b, self.cfg.poisson_solver, self.ws)
            else:
                b[self.phi_dofs] = 0.0
                res = sparse_la.solve_spd(self.K_phi, b, self.cfg.poisson_solver)
        except sparse_la.SolverBreakdown as e:
            raise SchemeError(f"phi solve failed: {e}") from e
        report.add("phi", res.iterations)
        if not res.converged:
            raise SchemeError(f"phi solve did not converge (residual {res.residual:.2e})")
        _check_finite(res.x, "phi")
        return FEField(self.S, res.x)

    # -- step 3: correction ------------------------------------------------------------

    def correct_velocity(self, u_tilde: FEField, phi: FEField, c: float, t1: float,
                         report: Optional[StepReport] = None) -> FEField:
        """L2 projection of ``u_tilde - c grad phi``.

        By default onto the whole P2 space: the corrected velocity keeps only
        the normal trace of the boundary data, up to the projection error.
        ``correction_bc="dirichlet"`` pins all Dirichlet dofs instead, which
        puts a one-cell layer into ``D(u_tilde) - D(u)`` along the wall and
        makes the ``psi`` step unstable.
        """
        report = report or StepReport()
        b = self.Mv @ u_tilde.coeffs - c * (self.Gs @ phi.coeffs)
        if self.cfg.correction_bc == "dirichlet":
            A, b = fem.apply_dirichlet(self.Mv, b, self.V.dirichlet_dofs, self.problem.velocity_dirichlet_values(t1))
        else:
            A = self.Mv
        x = self._solve("mass", A, b, u_tilde.coeffs, report)
        _check_finite(x, "the corrected velocity")
        return FEField(self.V, x)

    # -- step 4: psi -------------------------------------------------------------------

    def stress_mismatch(self, u_tilde: FEField, u_new: FEField, nu_star) -> np.ndarray:
        """``S = 2 nu* D(u_tilde) - 2 nu(u_new) D(u_new)`` at quadrature points."""
        Dt, _ = self._shear(u_tilde.coeffs)
        Dn, _ = self._shear(u_new.coeffs)
        nu_n = self.problem.law.from_norm2(frobenius2(Dn))
        return 2.0 * np.asarray(nu_star)[..., None, None] * Dt - 2.0 * nu_n[..., None, None] * Dn

    def project_tensor_p1(self, T, report: Optional[StepReport] = None):
        """L2 projection of the three independent components of a symmetric tensor onto P1."""
        report = report or StepReport()
        out = []
        for i, j in ((0, 0), (0, 1), (1, 1)):
            b = fem.assemble_vector(self.P, T[..., i, j], qdeg=self.qdeg)
            out.append(FEField(self.P, self._solve("mass", self.Mp, b, None, report)))
        return out

    def shear_rate_psi(self, u_tilde: FEField, u_new: FEField, nu_star, theta: float = 1.0,
                       report: Optional[StepReport] = None) -> FEField:
        """Solve ``(grad psi, grad z) = -theta (div S_h, grad z)``, ``psi`` mean-zero."""
        report = report or StepReport()
        S = self.stress_mismatch(u_tilde, u_new, nu_star)
        s11, s12, s22 = (f.grad_qp(self.qdeg) for f in self.project_tensor_p1(S, report))
        div = np.stack([s11[..., 0] + s12[..., 1], s12[..., 0] + s22[..., 1]], axis=-1)
        b = fem.assemble_vector(self.S, -theta * div, form="gradient", qdeg=self.qdeg)
        try:
            res = sparse_la.solve_neumann_poisson(self.K, b, self.cfg.poisson_solver, self.ws)
        except sparse_la.SolverBreakdown as e:
            raise SchemeError(f"psi solve failed: {e}") from e
        report.add("psi", res.iterations)
        if not res.converged:
            raise SchemeError(f"psi solve did not converge (residual {res.residual:.2e})")
        _check_finite(res.x, "psi")
        return FEField(self.S, res.x)

    # -- step 5: pressure --------------------------------------------------------------

    def update_pressure(self, p: FEField, phi: FEField, psi: FEField,
                        report: Optional[StepReport] = None) -> FEField:
        report = report or StepReport()
        a = self.cfg.alpha
        corr = phi.coeffs + a * psi.coeffs
        if self.problem.has_outflow:
            mu = (self.ws @ (a * psi.coeffs)) / self.area
        else:
            mu = (self.ws @ corr) / self.area
        b = self.Mp @ p.coeffs + self.Mps @ corr - mu * (self.Mp @ self._ones_p)
        x = self._solve("mass", self.Mp, b, p.coeffs, report)
        _check_finite(x, "the pressure")
        return FEField(self.P, x)

    # -- full step -----------------------------------------------------------------------

    def advance(self, state: FlowState) -> tuple[FlowState, StepReport]:
        if abs(state.rho - self.problem.rho) > 0:
            raise ValueError("state density differs from the problem density")
        t_start = time.perf_counter()
        report = StepReport()
        _, _, theta = self._time_coeffs(state)
        c = self._c(state)
        t1 = state.t + self.cfg.dt
        pred = self.predict_velocity(state, report)
        phi = self.pressure_poisson_phi(pred.u_tilde, c, report)
        u_new = self.correct_velocity(pred.u_tilde, phi, c, t1, report)
        if self.psi_override is not None:
            psi = self.psi_override(pred.u_tilde, u_new, pred.nu_star)
        elif self.cfg.variant == "SRP":
            psi = self.shear_rate_psi(pred.u_tilde, u_new, pred.nu_star, theta, report)
        else:
            psi = self.S.zero()
        p_new = self.update_pressure(state.p, phi, psi, report)
        report.wall_time = time.perf_counter() - t_start
        new = FlowState(u_new, state.u, p_new, t1, state.rho, state.step + 1)
        self.last_fields = {"u_tilde": pred.u_tilde, "phi": phi, "psi": psi, "nu_star": pred.nu_star}
        return new, report

    def run(self, state: FlowState, n_steps: Optional[int] = None, callback=None):
        """March ``n_steps`` (default: up to the final time); returns the final state and reports."""
        n = self.cfg.n_steps if n_steps is None else n_steps
        reports = []
        for _ in range(n):
            state, rep = self.advance(state)
            reports.append(rep)
            if callback is not None:
                callback(state, rep)
        return state, reports


def with_dt(cfg: SchemeConfig, dt: float, final_time: Optional[float] = None) -> SchemeConfig:
    return replace(cfg, dt=dt, final_time=cfg.final_time if final_time is None else final_time)
