"""Drag, wake length and the flow-past-a-cylinder driver."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import fem
from .fem import EDGE_POINTS, EDGE_WEIGHTS, FEField
from .mesh import CylinderGeometry, TriMesh
from .problem import FlowProblem, VelocityBC
from .rheology import GeneralizedNewtonianLaw, frobenius2, shear_tensor

log = logging.getLogger(__name__)

DRAG_FORMULAS = ("paper", "traction_x")
# Newtonian drag at Re = 10 from a very large domain, used to pick the drag formula
NEWTONIAN_REFERENCE_CD = 2.7537
_EDGE_PAIRS = ((1, 2), (2, 0), (0, 1))


@dataclass(frozen=True)
class BenchConfig:
    geometry: CylinderGeometry = CylinderGeometry()
    u0: float = 1.0
    law: GeneralizedNewtonianLaw = GeneralizedNewtonianLaw.carreau(1.0, 0.001, 10.0, 1.0)
    rho: float = 10.0
    re: float = 10.0
    cu: float = 10.0
    steady_tol: float = 1e-5
    window: int = 10
    max_time: float = 300.0

    def __post_init__(self):
        D = self.geometry.diameter
        if self.u0 <= 0 or self.rho <= 0:
            raise ValueError("u0 and rho must be positive")
        re = self.rho * D * self.u0 / self.law.nu0
        cu = self.law.lam * self.u0 / D
        if abs(re - self.re) > 1e-12 * max(1.0, abs(self.re)):
            raise ValueError(f"Re = {self.re} does not match rho D U0 / nu0 = {re}")
        if abs(cu - self.cu) > 1e-12 * max(1.0, abs(self.cu)):
            raise ValueError(f"C_U = {self.cu} does not match lambda U0 / D = {cu}")
        if self.steady_tol <= 0 or self.window < 2 or self.max_time <= 0:
            raise ValueError("need steady_tol > 0, window >= 2 and max_time > 0")

    @classmethod
    def carreau(cls, m: float, cu: float = 10.0, re: float = 10.0, nu_inf: float = 0.001, **kw) -> "BenchConfig":
        """Carreau fluid with nu0 = 1, U0 = D = 1, so rho = Re and lambda = C_U."""
        geom = kw.pop("geometry", CylinderGeometry())
        u0 = kw.pop("u0", 1.0)
        D = geom.diameter
        law = GeneralizedNewtonianLaw.carreau(1.0, nu_inf, cu * D / u0, m)
        return cls(geometry=geom, u0=u0, law=law, rho=re / (D * u0), re=re, cu=cu, **kw)


@dataclass
class WakeLength:
    center: float
    surface: float


@dataclass
class BenchReport:
    cd_paper: float
    cd_traction: float
    wake: Optional[WakeLength]
    steps: int
    final_residual: float
    steady: bool
    time: float = 0.0
    wall_time: float = 0.0
    reference: Optional["BenchReport"] = None
    history: list = field(default_factory=list, repr=False)

    def cd(self, formula: str = "traction_x") -> float:
        if formula not in DRAG_FORMULAS:
            raise ValueError(f"formula must be one of {DRAG_FORMULAS}")
        return self.cd_paper if formula == "paper" else self.cd_traction

    @property
    def wake_surface(self) -> float:
        return math.nan if self.wake is None else self.wake.surface


def select_drag_formula(newtonian: BenchReport, target: float = NEWTONIAN_REFERENCE_CD) -> str:
    """The drag formula whose Newtonian value lies closer to ``target``."""
    f = min(DRAG_FORMULAS, key=lambda k: abs(newtonian.cd(k) - target))
    log.info("drag formula %s selected (paper %.4f, traction_x %.4f, target %.4f)",
             f, newtonian.cd_paper, newtonian.cd_traction, target)
    return f


# -- quantities of interest ----------------------------------------------------------------


def drag_coefficient(u: FEField, p: FEField, law: GeneralizedNewtonianLaw, mesh: TriMesh,
                     tag="gamma_c", rho: float = 1.0, formula: str = "paper",
                     u0: float = 1.0, diameter: float = 1.0) -> float:
    """``-2 / (rho U0^2 D)`` times the boundary integral of ``sigma n . n`` (paper) or ``sigma n . e_x``.

    ``n`` is the outward normal of the fluid domain and ``sigma = -p I + 2 nu D(u)``
    is evaluated from the cell owning each edge.
    """
    if formula not in DRAG_FORMULAS:
        raise ValueError(f"formula must be one of {DRAG_FORMULAS}")
    idx = mesh.edges_with_tags([tag])
    if idx.size == 0:
        return 0.0
    owner, loc = mesh.boundary_edge_cells
    cells, le = owner[idx], loc[idx]
    nq = len(EDGE_POINTS)
    lam = np.zeros((len(idx), nq, 3))
    a = np.array([_EDGE_PAIRS[e][0] for e in le])
    b = np.array([_EDGE_PAIRS[e][1] for e in le])
    rows = np.arange(len(idx))[:, None]
    lam[rows, :, a[:, None]] = 1.0 - EDGE_POINTS[None, :]
    lam[rows, :, b[:, None]] = EDGE_POINTS[None, :]

    jinv = fem.geometry(mesh).jinv[cells]  # (ne, 2, 2)
    pts = mesh.nodes[mesh.cells[cells]]  # (ne, 3, 2)
    A = pts[np.arange(len(idx)), a]
    B = pts[np.arange(len(idx)), b]
    C = pts[np.arange(len(idx)), le]
    t = B - A
    length = np.hypot(t[:, 0], t[:, 1])
    n = np.column_stack([t[:, 1], -t[:, 0]]) / length[:, None]
    n *= np.sign(np.einsum("ed,ed->e", n, A - C))[:, None]

    flat = lam.reshape(-1, 3)
    rg = fem.basis_ref_grads(u.space.degree, flat).reshape(len(idx), nq, -1, 2)
    gphys = np.einsum("eqbk,ekd->eqbd", rg, jinv)
    s = u.space.scalar_dof_map[cells]
    comps = u.components()
    grad = np.stack([np.einsum("eqbd,eb->eqd", gphys, c[s]) for c in comps], axis=-2)  # [e,q,i,j]
    pv = fem.basis_values(p.space.degree, flat).reshape(len(idx), nq, -1)
    pq = np.einsum("eqb,eb->eq", pv, p.coeffs[p.space.scalar_dof_map[cells]])
    D = shear_tensor(grad)
    nu = law.from_norm2(frobenius2(D))
    sigma = 2.0 * nu[..., None, None] * D
    sigma[..., 0, 0] -= pq
    sigma[..., 1, 1] -= pq
    tr = np.einsum("eqij,ej->eqi", sigma, n)
    if formula == "paper":
        val = np.einsum("eqi,ei->eq", tr, n)
    else:
        val = tr[..., 0]
    integral = float(np.sum(val * EDGE_WEIGHTS[None, :] * length[:, None]))
    return -2.0 / (rho * u0**2 * diameter) * integral


def _centerline(u) -> Callable:
    if isinstance(u, FEField):
        def f(x):
            x = np.atleast_1d(np.asarray(x, dtype=float))
            vals = u.evaluate(np.column_stack([x, np.zeros_like(x)]))
            return vals[:, 0] if vals.ndim == 2 else vals
        return f
    return lambda x: np.asarray(u(np.atleast_1d(np.asarray(x, dtype=float))), dtype=float)


def wake_length(u, diameter: float = 1.0, x_end: Optional[float] = None, n_samples: int = 400,
                rel_tol: float = 1e-6) -> Optional[WakeLength]:
    """Downstream stagnation point of the centreline velocity, or None without recirculation.

    ``u`` is a velocity FEField or a callable ``u_x(x)`` along ``y = 0``.  The
    first interval where ``u_x`` goes from negative to non-negative is refined
    by bisection to ``rel_tol * diameter``.
    """
    R = 0.5 * diameter
    if x_end is None:
        if isinstance(u, FEField):
            x_end = float(u.space.mesh.nodes[:, 0].max())
        else:
            x_end = 20.0 * diameter
    f = _centerline(u)
    xs = np.linspace(R, x_end, n_samples + 1)[1:]
    vals = f(xs)
    neg = np.flatnonzero(vals < 0)
    if neg.size == 0:
        return None
    after = np.flatnonzero(vals[neg[0]:] >= 0)
    if after.size == 0:
        return None
    j = neg[0] + after[0]
    lo, hi = xs[j - 1], xs[j]
    while hi - lo > rel_tol * diameter:
        mid = 0.5 * (lo + hi)
        if f(mid)[0] < 0:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    return WakeLength(center=x, surface=x - R)


def window_variation(history: Sequence[float], window: int) -> float:
    """Relative spread ``(max - min) / |last|`` of the last ``window`` samples."""
    if window < 2:
        raise ValueError("window must be >= 2")
    if len(history) < window:
        return math.inf
    w = np.asarray(history[-window:], dtype=float)
    scale = abs(w[-1]) if w[-1] != 0 else 1.0
    return float((w.max() - w.min()) / scale)


def detect_steady(cd_history: Sequence[float], norm_history: Sequence[float], tol: float, window: int) -> bool:
    """True iff both monitored quantities vary by less than ``tol`` (relative) over the window."""
    return max(window_variation(cd_history, window), window_variation(norm_history, window)) < tol


# -- benchmark driver ------------------------------------------------------------------------


def cylinder_problem(bench: BenchConfig, mesh: TriMesh) -> FlowProblem:
    for t in ("gamma_i", "gamma_o", "gamma_t", "gamma_c"):
        mesh.tag_id(t)
    bcs = [
        VelocityBC(("gamma_t",), (0.0, 0.0), components=(1,)),
        VelocityBC(("gamma_i",), (bench.u0, 0.0)),
        VelocityBC(("gamma_c",), (0.0, 0.0)),
    ]
    return FlowProblem(mesh, bench.law, bench.rho, bcs, ("gamma_o",), None)


def _report_fields(bench, mesh, u, p):
    D = bench.geometry.diameter
    kw = dict(rho=bench.rho, u0=bench.u0, diameter=D)
    return (
        drag_coefficient(u, p, bench.law, mesh, "gamma_c", formula="paper", **kw),
        drag_coefficient(u, p, bench.law, mesh, "gamma_c", formula="traction_x", **kw),
        wake_length(u, D),
    )


def run_ssmix(bench: BenchConfig, mesh: TriMesh, u_guess=None, penalty: float = 1e-10,
              fixed_point_tol: float = 1e-8) -> BenchReport:
    """Steady penalized coupled solve with a fixed-point loop on viscosity and convection."""
    from .monolithic import MonolithicSolver

    t0 = time.perf_counter()
    solver = MonolithicSolver(cylinder_problem(bench, mesh), penalty, fixed_point_tol, max_iter=200)
    res = solver.steady(u_guess)
    cdp, cdt, wake = _report_fields(bench, mesh, res.u, res.p)
    return BenchReport(cdp, cdt, wake, res.iterations, res.increment, res.converged,
                       wall_time=time.perf_counter() - t0)


def run_cylinder(bench: BenchConfig, scheme_cfg, mesh: TriMesh, reference: bool = True,
                 callback=None) -> BenchReport:
    """March from rest until the drag and the velocity norm are steady, then compare with SS-Mix."""
    from .scheme import ProjectionScheme

    t0 = time.perf_counter()
    cfg = replace(scheme_cfg, final_time=max(scheme_cfg.final_time, bench.max_time))
    prob = cylinder_problem(bench, mesh)
    scheme = ProjectionScheme(prob, cfg)
    state = scheme.initial_state(None)
    cds, norms, hist = [], [], []
    steady = False
    n_max = int(math.ceil(bench.max_time / cfg.dt - 1e-9))
    kw = dict(rho=bench.rho, u0=bench.u0, diameter=bench.geometry.diameter)
    for _ in range(n_max):
        state, rep = scheme.advance(state)
        cd = drag_coefficient(state.u, state.p, bench.law, mesh, "gamma_c", formula="traction_x", **kw)
        cds.append(cd)
        norms.append(scheme.l2_norm(state.u.coeffs))
        hist.append((state.t, cd, norms[-1], rep.fixed_point_iterations))
        if callback is not None:
            callback(state, rep, cd)
        if detect_steady(cds, norms, bench.steady_tol, bench.window):
            steady = True
            break
    resid = max(window_variation(cds, bench.window), window_variation(norms, bench.window))
    if not steady:
        log.warning("cylinder run not steady by t = %g (variation %.2e)", state.t, resid)
    cdp, cdt, wake = _report_fields(bench, mesh, state.u, state.p)
    report = BenchReport(cdp, cdt, wake, len(cds), resid, steady, state.t, history=hist)
    if reference:
        report.reference = run_ssmix(bench, mesh, u_guess=state.u.coeffs)
    report.wall_time = time.perf_counter() - t0
    return report


BENCH_COLUMNS = ("C_U", "m", "CD_ssmix", "CD_srp", "dCD_pct", "L_ssmix", "L_srp", "dL_pct")


def bench_row(bench: BenchConfig, report: BenchReport, formula: str = "traction_x") -> dict:
    ref = report.reference
    if ref is None:
        raise ValueError("report has no SS-Mix reference")
    cd_s, cd_r = report.cd(formula), ref.cd(formula)
    l_s, l_r = report.wake_surface, ref.wake_surface
    return {
        "C_U": bench.cu,
        "m": bench.law.m,
        "CD_ssmix": cd_r,
        "CD_srp": cd_s,
        "dCD_pct": 100.0 * abs(cd_s - cd_r) / abs(cd_r),
        "L_ssmix": l_r,
        "L_srp": l_s,
        "dL_pct": 100.0 * abs(l_s - l_r) / abs(l_r) if l_r == l_r and l_r != 0 else math.nan,
    }


def bench_csv(rows: Sequence[dict], header: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    for r in rows:
        w.writerow([repr(float(r[c])) for c in BENCH_COLUMNS])
    return buf.getvalue()
