"""Lagrange P1/P2 finite elements on triangles.

Vector spaces number their degrees of freedom component-blocked: all x
components first, then all y components.  P2 scalar dofs are the mesh
vertices followed by the edge midpoints, in ``TriMesh.edges`` order.

Every assembler works on quadrature-point data of shape ``(n_cells, n_qp)``
(scalars), ``(n_cells, n_qp, 2)`` (vectors) or ``(n_cells, n_qp, 2, 2)``
(tensors), so coefficients such as the viscosity are evaluated where they
are used rather than interpolated first.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .mesh import TriMesh

# -- quadrature -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Barycentric points and weights on the reference triangle (area 1/2)."""

    points: np.ndarray
    weights: np.ndarray
    degree: int


def _orbit3(a, w):
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)], [w] * 3


def _orbit6(a, b, w):
    c = 1.0 - a - b
    pts = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
    return pts, [w] * 6


def _rule(groups, degree):
    pts, wts = [], []
    for p, w in groups:
        pts += p
        wts += w
    return QuadratureRule(np.array(pts), 0.5 * np.array(wts), degree)


# Dunavant rules; weights below are normalized to sum 1 before scaling to 1/2.
QUADRATURE = {
    1: _rule([([(1 / 3, 1 / 3, 1 / 3)], [1.0])], 1),
    2: _rule([_orbit3(1 / 6, 1 / 3)], 2),
    4: _rule(
        [
            _orbit3(0.445948490915965, 0.223381589678011),
            _orbit3(0.091576213509771, 0.109951743655322),
        ],
        4,
    ),
    6: _rule(
        [
            _orbit3(0.249286745170910, 0.116786275726379),
            _orbit3(0.063089014491502, 0.050844906370207),
            _orbit6(0.053145049844817, 0.310352451033784, 0.082851075618374),
        ],
        6,
    ),
}
DEFAULT_QUAD = 4

# 3-point Gauss-Legendre on [0, 1]
EDGE_POINTS = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
EDGE_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0


# -- reference elements -----------------------------------------------------------

_DL = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])  # grad of barycentrics
# P2 edge functions: local edge e is opposite vertex e
_EDGE_PAIRS = ((1, 2), (2, 0), (0, 1))


def basis_values(degree: int, lam: np.ndarray) -> np.ndarray:
    """Shape functions at barycentric points ``lam`` (n, 3) -> (n, nb)."""
    lam = np.atleast_2d(lam)
    if degree == 1:
        return lam.copy()
    if degree == 2:
        v = lam * (2.0 * lam - 1.0)
        e = np.column_stack([4.0 * lam[:, a] * lam[:, b] for a, b in _EDGE_PAIRS])
        return np.hstack([v, e])
    raise ValueError(f"unsupported degree {degree}")


def basis_ref_grads(degree: int, lam: np.ndarray) -> np.ndarray:
    """Reference-coordinate gradients (n, nb, 2)."""
    lam = np.atleast_2d(lam)
    n = len(lam)
    if degree == 1:
        return np.broadcast_to(_DL, (n, 3, 2)).copy()
    if degree == 2:
        g = np.empty((n, 6, 2))
        for i in range(3):
            g[:, i] = (4.0 * lam[:, i] - 1.0)[:, None] * _DL[i]
        for e, (a, b) in enumerate(_EDGE_PAIRS):
            g[:, 3 + e] = 4.0 * (lam[:, b][:, None] * _DL[a] + lam[:, a][:, None] * _DL[b])
        return g
    raise ValueError(f"unsupported degree {degree}")


# -- per-mesh geometric cache -------------------------------------------------------

_CACHE: "weakref.WeakKeyDictionary[TriMesh, dict]" = weakref.WeakKeyDictionary()


def _cache(mesh: TriMesh) -> dict:
    try:
        return _CACHE[mesh]
    except KeyError:
        d = _CACHE[mesh] = {}
        return d


class CellGeometry:
    """Affine maps of all cells plus quadrature points for one rule."""

    def __init__(self, mesh: TriMesh, quad: QuadratureRule):
        self.mesh = mesh
        self.quad = quad
        p = mesh.nodes[mesh.cells]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # J[c, :, k] = dx/dxi_k
        self.det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        inv = np.empty_like(J)
        inv[:, 0, 0] = J[:, 1, 1]
        inv[:, 1, 1] = J[:, 0, 0]
        inv[:, 0, 1] = -J[:, 0, 1]
        inv[:, 1, 0] = -J[:, 1, 0]
        self.jinv = inv / self.det[:, None, None]
        self.dx = self.det[:, None] * quad.weights[None, :]  # (ncell, nq)
        self.points = np.einsum("qk,ckd->cqd", quad.points, p)  # (ncell, nq, 2)
        self._tables = {}

    def tables(self, degree: int):
        """Basis values (nq, nb) and physical gradients (ncell, nq, nb, 2)."""
        if degree not in self._tables:
            lam = self.quad.points
            val = basis_values(degree, lam)
            rg = basis_ref_grads(degree, lam)
            # grad_x N = J^{-T} grad_xi N
            grads = np.einsum("qbk,ckd->cqbd", rg, self.jinv)
            self._tables[degree] = (val, grads)
        return self._tables[degree]


def geometry(mesh: TriMesh, qdeg: int = DEFAULT_QUAD) -> CellGeometry:
    c = _cache(mesh)
    key = ("geom", qdeg)
    if key not in c:
        c[key] = CellGeometry(mesh, QUADRATURE[qdeg])
    return c[key]


# -- spaces and fields ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FESpace:
    mesh: TriMesh
    degree: int = 2
    ncomp: int = 1
    dirichlet_dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        if self.degree not in (1, 2) or self.ncomp not in (1, 2):
            raise ValueError("degree must be 1 or 2 and ncomp 1 or 2")
        d = np.unique(np.asarray(self.dirichlet_dofs, dtype=np.int64))
        if d.size and (d[0] < 0 or d[-1] >= self.ndofs):
            raise ValueError("Dirichlet dof out of range")
        object.__setattr__(self, "dirichlet_dofs", d)

    @property
    def key(self):
        return (self.degree, self.ncomp)

    @property
    def nscalar(self) -> int:
        m = self.mesh
        return m.n_nodes + (m.n_edges if self.degree == 2 else 0)

    @property
    def ndofs(self) -> int:
        return self.ncomp * self.nscalar

    @property
    def nbasis(self) -> int:
        return 3 if self.degree == 1 else 6

    @cached_property
    def scalar_dof_map(self) -> np.ndarray:
        m = self.mesh
        if self.degree == 1:
            return m.cells
        return np.hstack([m.cells, m.n_nodes + m.cell_edges])

    @cached_property
    def dof_map(self) -> np.ndarray:
        """Cell -> global dofs, component-blocked locally as well."""
        s = self.scalar_dof_map
        if self.ncomp == 1:
            return s
        return np.hstack([s + c * self.nscalar for c in range(self.ncomp)])

    @cached_property
    def dof_coords(self) -> np.ndarray:
        m = self.mesh
        if self.degree == 1:
            return m.nodes
        mid = 0.5 * (m.nodes[m.edges[:, 0]] + m.nodes[m.edges[:, 1]])
        return np.vstack([m.nodes, mid])

    def scalar(self) -> "FESpace":
        return FESpace(self.mesh, self.degree, 1)

    def with_dirichlet(self, dofs) -> "FESpace":
        return FESpace(self.mesh, self.degree, self.ncomp, np.asarray(dofs, dtype=np.int64))

    def boundary_scalar_dofs(self, tags) -> np.ndarray:
        """Scalar dofs lying on boundary edges carrying ``tags``."""
        m = self.mesh
        idx = m.edges_with_tags(list(tags))
        d = [m.boundary_edges[idx].ravel()]
        if self.degree == 2:
            d.append(m.n_nodes + m.boundary_edge_ids[idx])
        return np.unique(np.concatenate(d)).astype(np.int64)

    def zero(self) -> "FEField":
        return FEField(self, np.zeros(self.ndofs))


@dataclass(eq=False)
class FEField:
    space: FESpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.ndofs,):
            raise ValueError(
                f"coefficient length {self.coeffs.shape} does not match {self.space.ndofs} dofs"
            )

    def copy(self) -> "FEField":
        return FEField(self.space, self.coeffs.copy())

    def components(self) -> list[np.ndarray]:
        n = self.space.nscalar
        return [self.coeffs[c * n:(c + 1) * n] for c in range(self.space.ncomp)]

    def values_qp(self, qdeg: int = DEFAULT_QUAD) -> np.ndarray:
        g = geometry(self.space.mesh, qdeg)
        val, _ = g.tables(self.space.degree)
        s = self.space.scalar_dof_map
        out = [np.einsum("qb,cb->cq", val, comp[s]) for comp in self.components()]
        return out[0] if self.space.ncomp == 1 else np.stack(out, axis=-1)

    def grad_qp(self, qdeg: int = DEFAULT_QUAD) -> np.ndarray:
        """Gradient at quadrature points; for vectors ``[..., i, j] = d u_i / d x_j``."""
        g = geometry(self.space.mesh, qdeg)
        _, grads = g.tables(self.space.degree)
        s = self.space.scalar_dof_map
        out = [np.einsum("cqbd,cb->cqd", grads, comp[s]) for comp in self.components()]
        return out[0] if self.space.ncomp == 1 else np.stack(out, axis=-2)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Point values; NaN for points outside the mesh."""
        points = np.atleast_2d(points)
        cells, lam = locate_points(self.space.mesh, points)
        ok = cells >= 0
        vals = basis_values(self.space.degree, lam[ok])
        s = self.space.scalar_dof_map[cells[ok]]
        out = np.full((len(points), self.space.ncomp), np.nan)
        for c, comp in enumerate(self.components()):
            out[ok, c] = np.einsum("pb,pb->p", vals, comp[s])
        return out[:, 0] if self.space.ncomp == 1 else out


def interpolate(space: FESpace, func) -> FEField:
    """Nodal interpolant; ``func(x, y)`` returns a scalar or a (ux, uy) pair."""
    x, y = space.dof_coords.T
    v = func(x, y)
    if space.ncomp == 1:
        coeffs = np.broadcast_to(np.asarray(v, dtype=float), x.shape).copy()
    else:
        coeffs = np.concatenate([np.broadcast_to(np.asarray(c, dtype=float), x.shape) for c in v])
    return FEField(space, coeffs)


def locate_points(mesh: TriMesh, points: np.ndarray, chunk: int = 256):
    """Containing cell and barycentric coordinates, cell -1 when outside."""
    p = mesh.nodes[mesh.cells]
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    det = mesh.signed_areas * 2.0
    lo = p.min(axis=1) - 1e-12
    hi = p.max(axis=1) + 1e-12
    cells = np.full(len(points), -1, dtype=np.int64)
    lam = np.zeros((len(points), 3))
    for start in range(0, len(points), chunk):
        q = points[start:start + chunk]
        inbox = np.all((q[:, None, :] >= lo[None]) & (q[:, None, :] <= hi[None]), axis=2)
        for k, row in enumerate(inbox):
            cand = np.flatnonzero(row)
            if not cand.size:
                continue
            x, y = q[k]
            l1 = ((x - a[cand, 0]) * (c[cand, 1] - a[cand, 1]) - (y - a[cand, 1]) * (c[cand, 0] - a[cand, 0])) / det[cand]
            l2 = ((b[cand, 0] - a[cand, 0]) * (y - a[cand, 1]) - (b[cand, 1] - a[cand, 1]) * (x - a[cand, 0])) / det[cand]
            l0 = 1.0 - l1 - l2
            m = np.minimum(np.minimum(l0, l1), l2)
            j = int(np.argmax(m))
            if m[j] >= -1e-10:
                cells[start + k] = cand[j]
                lam[start + k] = (l0[j], l1[j], l2[j])
    return cells, lam


# -- assembly -------------------------------------------------------------------------


class _Pattern:
    """CSR structure of a (test, trial) pair plus the scatter map of local entries."""

    def __init__(self, rows: np.ndarray, cols: np.ndarray, shape):
        r = np.broadcast_to(rows[:, :, None], (rows.shape[0], rows.shape[1], cols.shape[1])).ravel()
        c = np.broadcast_to(cols[:, None, :], (cols.shape[0], rows.shape[1], cols.shape[1])).ravel()
        code = r * shape[1] + c
        uniq, self.pos = np.unique(code, return_inverse=True)
        urow = uniq // shape[1]
        self.indices = (uniq % shape[1]).astype(np.int32)
        self.indptr = np.searchsorted(urow, np.arange(shape[0] + 1)).astype(np.int32)
        self.shape = shape

    def build(self, local: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.pos, weights=local.ravel(), minlength=len(self.indices))
        A = sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)
        A.has_sorted_indices = True
        return A


def _pattern(test: FESpace, trial: FESpace) -> _Pattern:
    if test.mesh is not trial.mesh:
        raise ValueError("spaces live on different meshes")
    c = _cache(test.mesh)
    key = ("pattern", test.key, trial.key)
    if key not in c:
        c[key] = _Pattern(test.dof_map, trial.dof_map, (test.ndofs, trial.ndofs))
    return c[key]


def assemble_local(test: FESpace, trial: FESpace, local: np.ndarray) -> sp.csr_matrix:
    return _pattern(test, trial).build(local)


def _qp_array(space: FESpace, values, qdeg, shape_tail=()):
    g = geometry(space.mesh, qdeg)
    if callable(values):
        x, y = g.points[..., 0], g.points[..., 1]
        v = values(x, y)
        if isinstance(v, (tuple, list)):
            v = np.stack([np.broadcast_to(np.asarray(c, dtype=float), x.shape) for c in v], axis=-1)
        values = v
    return np.broadcast_to(np.asarray(values, dtype=float), g.dx.shape + tuple(shape_tail))


def _blockdiag(local: np.ndarray, ncomp: int) -> np.ndarray:
    if ncomp == 1:
        return local
    nc, nb, _ = local.shape
    out = np.zeros((nc, ncomp * nb, ncomp * nb))
    for k in range(ncomp):
        out[:, k * nb:(k + 1) * nb, k * nb:(k + 1) * nb] = local
    return out


def assemble_mass(space: FESpace, coef=1.0, qdeg: int = DEFAULT_QUAD) -> sp.csr_matrix:
    g = geometry(space.mesh, qdeg)
    val, _ = g.tables(space.degree)
    w = g.dx * _qp_array(space, coef, qdeg)
    local = np.einsum("cq,qa,qb->cab", w, val, val)
    return assemble_local(space, space, _blockdiag(local, space.ncomp))


def assemble_mixed_mass(test: FESpace, trial: FESpace, qdeg: int = DEFAULT_QUAD) -> sp.csr_matrix:
    """``int trial_j test_i`` for two scalar spaces of different degree."""
    g = geometry(test.mesh, qdeg)
    vt, _ = g.tables(test.degree)
    vs, _ = g.tables(trial.degree)
    local = np.einsum("cq,qa,qb->cab", g.dx, vt, vs)
    return assemble_local(test, trial, local)


def assemble_poisson(space: FESpace, qdeg: int = DEFAULT_QUAD) -> sp.csr_matrix:
    g = geometry(space.mesh, qdeg)
    _, gr = g.tables(space.degree)
    local = np.einsum("cq,cqad,cqbd->cab", g.dx, gr, gr)
    return assemble_local(space, space, _blockdiag(local, space.ncomp))


def assemble_diffusion(space: FESpace, viscosity, qdeg: int = DEFAULT_QUAD) -> sp.csr_matrix:
    """``int 2 nu D(u) : D(v)`` on a vector space, ``nu`` given at quadrature points."""
    if space.ncomp != 2:
        raise ValueError("diffusion needs a vector space")
    nu = _qp_array(space, viscosity, qdeg)
    if not np.all(nu > 0):
        c = int(np.argwhere(~(nu > 0))[0, 0])
        raise ValueError(f"non-positive viscosity in cell {c}")
    g = geometry(space.mesh, qdeg)
    _, gr = g.tables(space.degree)
    w = g.dx * nu
    nc, nq, nb, _ = gr.shape
    X = gr.reshape(nc, nq, 2 * nb)
    # T[c, a, i, b, j] = int w d_i phi_a d_j phi_b
    T = np.matmul((X * w[..., None]).transpose(0, 2, 1), X).reshape(nc, nb, 2, nb, 2)
    lap = T[:, :, 0, :, 0] + T[:, :, 1, :, 1]
    # block (test comp ci, trial comp dj), entry (b, a) = T[a, ci, b, dj] (+ lap on the diagonal)
    local = np.ascontiguousarray(T.transpose(0, 2, 3, 4, 1)).reshape(nc, 2 * nb, 2 * nb)
    lapT = lap.transpose(0, 2, 1)
    local[:, :nb, :nb] += lapT
    local[:, nb:, nb:] += lapT
    return assemble_local(space, space, local)


def assemble_convection(space: FESpace, wind, rho: float = 1.0, qdeg: int = DEFAULT_QUAD) -> sp.csr_matrix:
    """``int rho (w . grad) u . v``; ``wind`` is an FEField or quadrature-point values."""
    if isinstance(wind, FEField):
        if wind.space.mesh is not space.mesh:
            raise ValueError("wind lives on a different mesh")
        wind = wind.values_qp(qdeg)
    w = _qp_array(space, wind, qdeg, (2,))
    g = geometry(space.mesh, qdeg)
    val, gr = g.tables(space.degree)
    adv = np.einsum("cqd,cqad->cqa", w, gr)
    local = np.einsum("cq,qb,cqa->cba", rho * g.dx, val, adv)
    return assemble_local(space, space, _blockdiag(local, space.ncomp))


def assemble_convection_reaction(space: FESpace, grad_u, rho: float = 1.0, qdeg: int = DEFAULT_QUAD) -> sp.csr_matrix:
    """``int rho (u . grad) w . v`` as a bilinear form in ``u``, with ``grad w`` frozen."""
    G = _qp_array(space, grad_u, qdeg, (2, 2))
    g = geometry(space.mesh, qdeg)
    val, _ = g.tables(space.degree)
    nb = space.nbasis
    local = np.empty((len(g.dx), 2 * nb, 2 * nb))
    for ci in range(2):
        for dj in range(2):
            local[:, ci * nb:(ci + 1) * nb, dj * nb:(dj + 1) * nb] = np.einsum(
                "cq,qb,qa->cba", rho * g.dx * G[..., ci, dj], val, val
            )
    return assemble_local(space, space, local)


def assemble_viscosity_jacobian(space: FESpace, dnu, shear, qdeg: int = DEFAULT_QUAD) -> sp.csr_matrix:
    """``int 2 (dnu : D(u)) (shear : D(v))``, the linearized viscosity variation."""
    Gt = _qp_array(space, dnu, qdeg, (2, 2))
    Dk = _qp_array(space, shear, qdeg, (2, 2))
    g = geometry(space.mesh, qdeg)
    _, gr = g.tables(space.degree)
    nb = space.nbasis
    trial = np.einsum("cqij,cqaj->cqai", Gt, gr)  # (G grad phi_a)_d
    test = np.einsum("cqij,cqbj->cqbi", Dk, gr)  # (D_k grad phi_b)_c
    local = np.empty((len(g.dx), 2 * nb, 2 * nb))
    for ci in range(2):
        for dj in range(2):
            local[:, ci * nb:(ci + 1) * nb, dj * nb:(dj + 1) * nb] = np.einsum(
                "cq,cqb,cqa->cba", 2.0 * g.dx, test[..., ci], trial[..., dj]
            )
    return assemble_local(space, space, local)


def assemble_gradient(vspace: FESpace, sspace: FESpace, qdeg: int = DEFAULT_QUAD) -> sp.csr_matrix:
    """``G[i, j] = int grad q_j . v_i`` (vector test, scalar trial)."""
    g = geometry(vspace.mesh, qdeg)
    val, _ = g.tables(vspace.degree)
    _, gq = g.tables(sspace.degree)
    nb = vspace.nbasis
    local = np.empty((len(g.dx), 2 * nb, sspace.nbasis))
    for ci in range(2):
        local[:, ci * nb:(ci + 1) * nb] = np.einsum("cq,qb,cqa->cba", g.dx, val, gq[..., ci])
    return assemble_local(vspace, sspace, local)


def assemble_divergence(sspace: FESpace, vspace: FESpace, qdeg: int = DEFAULT_QUAD) -> sp.csr_matrix:
    """``B[i, j] = int q_i div v_j`` (scalar test, vector trial)."""
    g = geometry(vspace.mesh, qdeg)
    _, gv = g.tables(vspace.degree)
    vq, _ = g.tables(sspace.degree)
    nb = vspace.nbasis
    local = np.empty((len(g.dx), sspace.nbasis, 2 * nb))
    for dj in range(2):
        local[:, :, dj * nb:(dj + 1) * nb] = np.einsum("cq,qb,cqa->cba", g.dx, vq, gv[..., dj])
    return assemble_local(sspace, vspace, local)


def assemble_vector(space: FESpace, integrand, form: str = "value", qdeg: int = DEFAULT_QUAD) -> np.ndarray:
    """Load vector.

    ``form="value"``: ``int g . phi_i``.  ``form="gradient"``: ``int g . grad phi_i``
    for scalar spaces (``g`` a vector) or ``int g : grad v_i`` for vector spaces
    (``g`` a tensor with ``g[..., i, j]`` pairing ``d v_i / d x_j``).
    ``integrand`` is a callable ``(x, y)`` or an array of quadrature-point values.
    """
    g = geometry(space.mesh, qdeg)
    val, gr = g.tables(space.degree)
    s = space.scalar_dof_map
    n = space.nscalar
    out = np.zeros(space.ndofs)
    if form == "value":
        tail = () if space.ncomp == 1 else (2,)
        f = _qp_array(space, integrand, qdeg, tail)
        if space.ncomp == 1:
            f = f[..., None]
        for c in range(space.ncomp):
            loc = np.einsum("cq,qb->cb", g.dx * f[..., c], val)
            out[c * n:(c + 1) * n] = np.bincount(s.ravel(), loc.ravel(), minlength=n)
    elif form == "gradient":
        if space.ncomp == 1:
            f = _qp_array(space, integrand, qdeg, (2,))[..., None, :]
        else:
            f = _qp_array(space, integrand, qdeg, (2, 2))
        for c in range(space.ncomp):
            loc = np.einsum("cq,cqd,cqbd->cb", g.dx, f[..., c, :], gr)
            out[c * n:(c + 1) * n] = np.bincount(s.ravel(), loc.ravel(), minlength=n)
    else:
        raise ValueError(f"unknown form {form!r}")
    return out


def project_l2(space: FESpace, source, qdeg: int = DEFAULT_QUAD, cfg=None) -> FEField:
    """L2 projection of a callable ``(x, y)`` or quadrature-point values onto ``space``."""
    from . import sparse_la

    cfg = cfg or sparse_la.MASS
    b = assemble_vector(space, source, "value", qdeg)
    res = sparse_la.solve_spd(assemble_mass(space, qdeg=qdeg), b, cfg)
    if not res.converged:
        raise sparse_la.SolverBreakdown(f"mass solve did not converge (residual {res.residual:.3e})")
    return FEField(space, res.x)


def apply_dirichlet(A: sp.spmatrix, b: np.ndarray, dofs, values=None):
    """Symmetric elimination of prescribed dofs (an index array or an FESpace).

    Returns a new matrix, with the sparsity pattern of ``A``, whose constrained
    rows and columns are identity rows, and a right-hand side carrying the
    lifted values.
    """
    if isinstance(dofs, FESpace):
        dofs = dofs.dirichlet_dofs
    dofs = np.asarray(dofs, dtype=np.int64)
    A = sp.csr_matrix(A, copy=True)
    A.sum_duplicates()
    b = np.array(b, dtype=float)
    if dofs.size == 0:
        return A, b
    vals = np.zeros(len(dofs)) if values is None else np.broadcast_to(values, dofs.shape).astype(float)
    n = A.shape[0]
    g = np.zeros(n)
    g[dofs] = vals
    b -= A @ g
    fixed = np.zeros(n, dtype=bool)
    fixed[dofs] = True
    rows = np.repeat(np.arange(n), np.diff(A.indptr))
    cols = A.indices
    A.data[fixed[rows] | fixed[cols]] = 0.0
    on_diag = fixed[rows] & (rows == cols)
    if np.count_nonzero(on_diag) != len(np.unique(dofs)):
        # diagonal missing from the pattern: fall back to a structural update
        A = A + sp.diags(fixed.astype(float))
        A = sp.csr_matrix(A)
        A.sort_indices()
    else:
        A.data[on_diag] = 1.0
    b[dofs] = vals
    return A, b
