"""Manufactured solution, error norms and convergence sweeps.

Exact fields on the unit square, with ``a = x + t`` and ``b = y + t``::

    u1 = sin a sin b,   u2 = cos a cos b,   p = sin(x - y + t)

For these fields ``D(u) = diag(c, -c)`` with ``c = cos a sin b``, so
``|D|^2 = 2 c^2`` and, writing ``nu' = d nu / d|D|^2``,

    -div(2 nu D(u)) = (2 nu + 8 c^2 nu') (sin a sin b, cos a cos b).

The time derivative is ``(sin(a+b), -sin(a+b))`` and the convective term is
``(sin a cos a, -sin b cos b)``.  See ``docs/forcing.md`` for the derivation.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import fem
from .fem import FEField
from .mesh import TriMesh, generate_unit_square
from .problem import FlowProblem, VelocityBC
from .rheology import GeneralizedNewtonianLaw, frobenius2, shear_tensor

log = logging.getLogger(__name__)

MMS_LAW = GeneralizedNewtonianLaw(nu0=1.0, nu_inf=0.0, c0=1.0, lam=1.0, m=0.5, shear_coeff=1.0)
NORM_QUAD = 6


@dataclass(frozen=True)
class ManufacturedCase:
    law: GeneralizedNewtonianLaw = MMS_LAW
    rho: float = 1.0

    # exact fields -------------------------------------------------------------------

    @staticmethod
    def velocity(t, x, y):
        a, b = x + t, y + t
        return np.sin(a) * np.sin(b), np.cos(a) * np.cos(b)

    @staticmethod
    def pressure(t, x, y):
        return np.sin(x - y + t)

    @staticmethod
    def velocity_grad(t, x, y):
        """``g[..., i, j] = d u_i / d x_j``."""
        a, b = x + t, y + t
        g = np.empty(np.broadcast(x, y).shape + (2, 2))
        g[..., 0, 0] = np.cos(a) * np.sin(b)
        g[..., 0, 1] = np.sin(a) * np.cos(b)
        g[..., 1, 0] = -np.sin(a) * np.cos(b)
        g[..., 1, 1] = -np.cos(a) * np.sin(b)
        return g

    @staticmethod
    def divergence(t, x, y):
        a, b = x + t, y + t
        return np.cos(a) * np.sin(b) - np.cos(a) * np.sin(b)

    def forcing(self, t, x, y):
        a, b = x + t, y + t
        sa, ca, sb, cb = np.sin(a), np.cos(a), np.sin(b), np.cos(b)
        c = ca * sb
        s = 2.0 * c * c
        g = 2.0 * self.law.from_norm2(s) + 8.0 * c * c * self.law.dnorm2(s)
        dp = np.cos(x - y + t)
        rho = self.rho
        f1 = rho * (np.sin(a + b) + sa * ca) + g * sa * sb + dp
        f2 = rho * (-np.sin(a + b) - sb * cb) + g * ca * cb - dp
        return f1, f2

    def problem(self, mesh: TriMesh, tags=None) -> FlowProblem:
        """Dirichlet data from the exact velocity on every boundary edge."""
        tags = tuple(mesh.tag_names) if tags is None else tuple(tags)
        return FlowProblem(mesh, self.law, self.rho, [VelocityBC(tags, self.velocity)], (), self.forcing)


def forcing(case: ManufacturedCase, t, x, y):
    return case.forcing(t, x, y)


def forcing_fd(case: ManufacturedCase, t, x, y, h: float = 1e-4):
    """Forcing rebuilt from the exact velocity and pressure by central differences only.

    Velocity gradients are differenced from ``velocity`` and the stress
    divergence differences those again, so nothing from the closed form is reused.
    """
    def vel(t, x, y):
        return np.stack(case.velocity(t, x, y), axis=-1)

    def grad(t, x, y):
        gx = (vel(t, x + h, y) - vel(t, x - h, y)) / (2 * h)
        gy = (vel(t, x, y + h) - vel(t, x, y - h)) / (2 * h)
        return np.stack([gx, gy], axis=-1)  # [..., i, j] = d u_i / d x_j

    def stress(x, y):
        D = shear_tensor(grad(t, x, y))
        return 2.0 * case.law.from_norm2(frobenius2(D))[..., None, None] * D

    div = ((stress(x + h, y) - stress(x - h, y))[..., :, 0] + (stress(x, y + h) - stress(x, y - h))[..., :, 1]) / (2 * h)
    dudt = (vel(t + h, x, y) - vel(t - h, x, y)) / (2 * h)
    conv = np.einsum("...ij,...j->...i", grad(t, x, y), vel(t, x, y))
    gp = np.stack([
        (case.pressure(t, x + h, y) - case.pressure(t, x - h, y)) / (2 * h),
        (case.pressure(t, x, y + h) - case.pressure(t, x, y - h)) / (2 * h),
    ], axis=-1)
    f = case.rho * (dudt + conv) - div + gp
    return f[..., 0], f[..., 1]


@dataclass
class ForcingCheck:
    points: int
    max_rel_error: float
    passed: bool


def check_forcing(case: ManufacturedCase, n_points: int = 100, tol: float = 1e-6, seed: int = 0,
                  final_time: float = 1.0) -> ForcingCheck:
    """Closed-form forcing against the finite-difference oracle at random space-time points.

    The relative error is ``|f - f_fd| / max(|f|, 1)`` per point.
    """
    rng = np.random.default_rng(seed)
    t, x, y = rng.uniform(0, final_time, n_points), rng.uniform(0, 1, n_points), rng.uniform(0, 1, n_points)
    f = np.column_stack(case.forcing(t, x, y))
    g = np.column_stack(forcing_fd(case, t, x, y))
    err = np.linalg.norm(f - g, axis=1) / np.maximum(np.linalg.norm(f, axis=1), 1.0)
    worst = float(err.max())
    return ForcingCheck(n_points, worst, worst <= tol)


# -- error norms --------------------------------------------------------------------------


@dataclass
class StepErrors:
    t: float
    vel_L2: float
    vel_H1: float
    vel_Linf: float
    pre_L2: float
    pre_Linf: float


@dataclass
class ErrorNorms:
    vel_l2L2: float
    vel_l2H1: float
    vel_linfLinf: float
    pre_l2L2: float
    pre_linfLinf: float
    steps: list = field(default_factory=list)


def step_errors(case: ManufacturedCase, t: float, u: FEField, p: FEField, mean_match: bool = True,
                qdeg: int = NORM_QUAD) -> StepErrors:
    """Errors of one snapshot; H1 is the full norm ``(|e|_0^2 + |grad e|_0^2)^(1/2)``."""
    mesh = u.space.mesh
    g = fem.geometry(mesh, qdeg)
    x, y = g.points[..., 0], g.points[..., 1]
    ue = np.stack(case.velocity(t, x, y), axis=-1)
    eu = u.values_qp(qdeg) - ue
    eg = u.grad_qp(qdeg) - case.velocity_grad(t, x, y)
    l2 = float(np.sum(g.dx * np.sum(eu**2, axis=-1)))
    h1s = float(np.sum(g.dx * np.sum(eg**2, axis=(-1, -2))))
    ep = p.values_qp(qdeg) - case.pressure(t, x, y)
    vx, vy = mesh.nodes[:, 0], mesh.nodes[:, 1]
    # vertex values are nodal for P1 and P2 alike
    ep_v = p.coeffs[: mesh.n_nodes] - case.pressure(t, vx, vy)
    if mean_match:
        shift = float(np.sum(g.dx * ep) / np.sum(g.dx))
        ep = ep - shift
        ep_v = ep_v - shift
    uv = np.column_stack([c[: mesh.n_nodes] for c in u.components()])
    eu_v = uv - np.column_stack(case.velocity(t, vx, vy))
    vel_linf = max(float(np.abs(eu).max()), float(np.abs(eu_v).max()))
    return StepErrors(
        t,
        math.sqrt(l2),
        math.sqrt(l2 + h1s),
        vel_linf,
        math.sqrt(float(np.sum(g.dx * ep**2))),
        max(float(np.abs(ep).max()), float(np.abs(ep_v).max())),
    )


class ErrorAccumulator:
    """Accumulates per-step errors into discrete-in-time norms."""

    def __init__(self, case: ManufacturedCase, dt: float, mean_match: bool = True):
        self.case, self.dt, self.mean_match = case, dt, mean_match
        self.steps: list[StepErrors] = []

    def add(self, t, u, p):
        self.steps.append(step_errors(self.case, t, u, p, self.mean_match))

    def result(self) -> ErrorNorms:
        if not self.steps:
            raise ValueError("empty history")
        s = self.steps

        def l2(key):
            return math.sqrt(self.dt * sum(getattr(e, key) ** 2 for e in s))

        return ErrorNorms(
            l2("vel_L2"),
            l2("vel_H1"),
            max(e.vel_Linf for e in s),
            l2("pre_L2"),
            max(e.pre_Linf for e in s),
            list(s),
        )


def error_norms(history: Sequence, case: ManufacturedCase, dt: float, mean_match: bool = True) -> ErrorNorms:
    """``history`` holds ``(t, u, p)`` for steps 1..N."""
    acc = ErrorAccumulator(case, dt, mean_match)
    for t, u, p in history:
        acc.add(t, u, p)
    return acc.result()


# -- convergence tables -------------------------------------------------------------------

COLUMNS = ("dt_or_dx", "vel_l2L2", "vel_l2H1", "pre_l2L2", "pre_linfLinf")


@dataclass
class ConvergenceTable:
    label: str
    rows: list = field(default_factory=list)  # (h, ErrorNorms)

    def add(self, h: float, norms: ErrorNorms):
        if h <= 0:
            raise ValueError("step size must be positive")
        self.rows.append((h, norms))
        self.rows.sort(key=lambda r: -r[0])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(n, name) for _, n in self.rows])

    @property
    def sizes(self) -> np.ndarray:
        return np.array([h for h, _ in self.rows])

    def slope(self, name: str) -> float:
        """Least-squares slope of log(error) against log(h)."""
        if len(self.rows) < 3:
            raise ValueError("need at least 3 rows to fit a slope")
        e = self.column(name)
        if np.any(e < 0):
            raise ValueError("errors must be nonnegative")
        return float(np.polyfit(np.log(self.sizes), np.log(e), 1)[0])

    def slopes(self) -> dict:
        names = COLUMNS[1:] + ("vel_linfLinf",)
        return {k: self.slope(k) for k in names}

    def to_csv(self, header: Optional[Sequence[str]] = None) -> str:
        buf = io.StringIO()
        for line in header or ():
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for h, n in self.rows:
            w.writerow([repr(float(h))] + [repr(float(getattr(n, c))) for c in COLUMNS[1:]])
        if len(self.rows) >= 3:
            s = self.slopes()
            w.writerow(["slope"] + [repr(round(s[c], 6)) for c in COLUMNS[1:]])
        return buf.getvalue()


def _check_divides(dt, T):
    n = T / dt
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ValueError(f"dt = {dt} does not divide the final time {T}")
    return int(round(n))


def run_projection(case: ManufacturedCase, mesh: TriMesh, cfg, n_steps: Optional[int] = None,
                   callback=None) -> ErrorNorms:
    """March a projection scheme from the exact data at t = 0 and return the error norms."""
    from .scheme import ProjectionScheme

    scheme = ProjectionScheme(case.problem(mesh), cfg)
    state = scheme.initial_state(lambda x, y: case.velocity(0.0, x, y), lambda x, y: case.pressure(0.0, x, y))
    n = cfg.n_steps if n_steps is None else n_steps
    acc = ErrorAccumulator(case, cfg.dt)
    for _ in range(n):
        state, rep = scheme.advance(state)
        acc.add(state.t, state.u, state.p)
        if callback is not None:
            callback(state, rep)
    return acc.result()


def run_monolithic(case: ManufacturedCase, mesh: TriMesh, dt: float, n_steps: int,
                   penalty: float = 1e-10, fixed_point_tol: float = 1e-8) -> ErrorNorms:
    from .monolithic import MonolithicSolver
    from .scheme import FlowState

    solver = MonolithicSolver(case.problem(mesh), penalty, fixed_point_tol)
    u = fem.interpolate(solver.V, lambda x, y: case.velocity(0.0, x, y))
    p = fem.interpolate(solver.P, lambda x, y: case.pressure(0.0, x, y))
    state = FlowState(u, u.copy(), p, 0.0, case.rho, 0)
    acc = ErrorAccumulator(case, dt)
    for _ in range(n_steps):
        res = solver.step(state, dt)
        state = FlowState(res.u, state.u, res.p, state.t + dt, case.rho, state.step + 1)
        acc.add(state.t, state.u, state.p)
    return acc.result()


def run_time_convergence(cfg_template, dts: Sequence[float], mesh: TriMesh,
                         case: Optional[ManufacturedCase] = None, final_time: float = 1.0,
                         label: str = "") -> ConvergenceTable:
    from dataclasses import replace

    if len(dts) < 3:
        raise ValueError("need at least 3 time steps")
    case = case or ManufacturedCase()
    table = ConvergenceTable(label or cfg_template.variant)
    for dt in dts:
        _check_divides(dt, final_time)
        cfg = replace(cfg_template, dt=dt, final_time=final_time)
        norms = run_projection(case, mesh, cfg)
        log.info("%s dt=%g: %s", table.label, dt, norms)
        table.add(dt, norms)
    return table


def run_space_convergence(cfg_template, ns: Sequence[int], dt: float = 1e-4, steps: int = 50,
                          case: Optional[ManufacturedCase] = None, label: str = "") -> ConvergenceTable:
    """Sweep uniform meshes ``n x n``; ``cfg_template=None`` runs the monolithic oracle."""
    from dataclasses import replace

    if len(ns) < 3:
        raise ValueError("need at least 3 mesh sizes")
    case = case or ManufacturedCase()
    table = ConvergenceTable(label or (cfg_template.variant if cfg_template is not None else "mixed"))
    for n in ns:
        mesh = generate_unit_square(n)
        if cfg_template is None:
            norms = run_monolithic(case, mesh, dt, steps)
        else:
            cfg = replace(cfg_template, dt=dt, final_time=dt * steps)
            norms = run_projection(case, mesh, cfg, steps)
        table.add(1.0 / n, norms)
    return table
