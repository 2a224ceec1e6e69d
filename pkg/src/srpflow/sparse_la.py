"""Krylov solvers (CG, BiCGSTAB, restarted GMRES) with Jacobi / ILU(0) preconditioning.

Matrices are ``scipy.sparse.csr_matrix`` with sorted column indices; only the
matrix-vector product is borrowed from scipy, the iterations and the ILU(0)
factorization live here.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee

log = logging.getLogger(__name__)

METHODS = ("cg", "bicgstab", "gmres")
PRECONDITIONERS = ("none", "jacobi", "ilu0")


@dataclass(frozen=True)
class SolverConfig:
    method: str = "cg"
    rtol: float = 1e-10
    maxiter: int = 5000
    preconditioner: str = "jacobi"
    restart: int = 30

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"preconditioner must be one of {PRECONDITIONERS}")
        if not 0.0 < self.rtol < 1.0:
            raise ValueError("rtol must lie in (0, 1)")
        if self.maxiter < 1 or self.restart < 1:
            raise ValueError("maxiter and restart must be >= 1")


POISSON = SolverConfig("cg", 1e-10, 20000, "jacobi")
MASS = SolverConfig("cg", 1e-10, 2000, "jacobi")
PREDICTION = SolverConfig("bicgstab", 1e-8, 5000, "ilu0")


class SolveResult(NamedTuple):
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool


class SolverBreakdown(ArithmeticError):
    pass


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A)
    if not A.has_sorted_indices:
        A = A.sorted_indices()
    A.sum_duplicates()
    return A


# -- ILU(0) ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _ilu0_factor(indptr, indices, data):
    n = len(indptr) - 1
    a = data.copy()
    diag = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            if indices[p] == i:
                diag[i] = p
                break
        if diag[i] < 0:
            return a, diag, i
    marker = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            marker[indices[p]] = p
        for p in range(indptr[i], diag[i]):
            k = indices[p]
            a[p] /= a[diag[k]]
            lik = a[p]
            for q in range(diag[k] + 1, indptr[k + 1]):
                m = marker[indices[q]]
                if m >= 0:
                    a[m] -= lik * a[q]
        for p in range(indptr[i], indptr[i + 1]):
            marker[indices[p]] = -1
        d = a[diag[i]]
        ref = abs(data[diag[i]])
        if abs(d) <= 1e-14 * ref or d == 0.0:
            # guard against (near) zero pivots, e.g. singular Neumann matrices
            a[diag[i]] = data[diag[i]] if data[diag[i]] != 0.0 else 1.0
    return a, diag, -1


@numba.njit(cache=True)
def _ilu0_solve(indptr, indices, a, diag, b):
    n = len(b)
    y = np.empty(n)
    for i in range(n):
        s = b[i]
        for p in range(indptr[i], diag[i]):
            s -= a[p] * y[indices[p]]
        y[i] = s
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = y[i]
        for p in range(diag[i] + 1, indptr[i + 1]):
            s -= a[p] * x[indices[p]]
        x[i] = s / a[diag[i]]
    return x


_RCM_CACHE: dict = {}


def _rcm(A) -> np.ndarray:
    """Reverse Cuthill-McKee ordering, cached per sparsity pattern."""
    key = (A.shape, A.nnz, hashlib.blake2b(A.indptr.tobytes() + A.indices.tobytes(), digest_size=16).digest())
    perm = _RCM_CACHE.get(key)
    if perm is None:
        if len(_RCM_CACHE) > 16:
            _RCM_CACHE.clear()
        perm = _RCM_CACHE[key] = reverse_cuthill_mckee(A, symmetric_mode=False).astype(np.int64)
    return perm


class ILU0:
    """Incomplete LU factorization restricted to the sparsity pattern of ``A``.

    With ``reorder=True`` the factorization is computed on the reverse
    Cuthill-McKee permutation of ``A``, which makes ILU(0) noticeably stronger
    on finite element matrices.
    """

    def __init__(self, A, reorder: bool = True):
        A = as_csr(A)
        self.perm = None
        if reorder and A.shape[0] > 1:
            self.perm = _rcm(A)
            A = as_csr(A[self.perm][:, self.perm])
        self.indptr = A.indptr.astype(np.int64)
        self.indices = A.indices.astype(np.int64)
        self.a, self.diag, missing = _ilu0_factor(self.indptr, self.indices, A.data.astype(float))
        if missing >= 0:
            raise SolverBreakdown(f"ILU(0): row {missing} has no diagonal entry")

    def __call__(self, r):
        if self.perm is None:
            return _ilu0_solve(self.indptr, self.indices, self.a, self.diag, r)
        z = np.empty_like(r)
        z[self.perm] = _ilu0_solve(self.indptr, self.indices, self.a, self.diag, r[self.perm])
        return z


def make_preconditioner(A, kind: str):
    if kind == "none":
        return lambda r: r
    if kind == "jacobi":
        d = A.diagonal()
        if np.any(d == 0):
            raise SolverBreakdown("Jacobi preconditioner: zero diagonal entry")
        inv = 1.0 / d
        return lambda r: inv * r
    if kind == "ilu0":
        return ILU0(A)
    raise ValueError(kind)


# -- Krylov methods -----------------------------------------------------------------


def _finish(A, b, x, it, bnorm, rtol):
    res = float(np.linalg.norm(b - A @ x) / bnorm)
    if not np.isfinite(res):
        raise SolverBreakdown("non-finite residual")
    ok = res <= rtol
    if not ok:
        log.warning("solver did not converge: residual %.3e after %d iterations", res, it)
    return SolveResult(x, it, res, ok)


def _cg(A, b, x, M, rtol, maxiter, bnorm):
    r = b - A @ x
    z = M(r)
    p = z.copy()
    rz = r @ z
    tol = rtol * bnorm
    it = 0
    while it < maxiter:
        if np.linalg.norm(r) <= tol:
            break
        Ap = A @ p
        pAp = p @ Ap
        if pAp == 0 or not np.isfinite(pAp):
            raise SolverBreakdown("CG breakdown (p.Ap = 0 or NaN)")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        z = M(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, it


def _bicgstab(A, b, x, M, rtol, maxiter, bnorm):
    r = b - A @ x
    rhat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    tol = rtol * bnorm
    it = 0
    while it < maxiter:
        if np.linalg.norm(r) <= tol:
            break
        rho_new = rhat @ r
        if rho_new == 0.0:
            # restart the shadow residual
            rhat = r.copy()
            rho_new = rhat @ r
            p[:] = 0.0
            v[:] = 0.0
            rho = alpha = omega = 1.0
        beta = (rho_new / rho) * (alpha / omega)
        p = r + beta * (p - omega * v)
        phat = M(p)
        v = A @ phat
        denom = rhat @ v
        if denom == 0.0 or not np.isfinite(denom):
            raise SolverBreakdown("BiCGSTAB breakdown (rhat.v = 0)")
        alpha = rho_new / denom
        s = r - alpha * v
        it += 1
        if np.linalg.norm(s) <= tol:
            x += alpha * phat
            r = s
            break
        shat = M(s)
        t = A @ shat
        tt = t @ t
        omega = (t @ s) / tt if tt > 0 else 0.0
        x += alpha * phat + omega * shat
        r = s - omega * t
        rho = rho_new
        if omega == 0.0:
            raise SolverBreakdown("BiCGSTAB stagnation (omega = 0)")
    return x, it


def _gmres(A, b, x, M, rtol, maxiter, bnorm, m):
    n = len(b)
    tol = rtol * bnorm
    it = 0
    while it < maxiter:
        r = b - A @ x
        beta = np.linalg.norm(r)
        if beta <= tol:
            break
        V = np.zeros((m + 1, n))
        Z = np.zeros((m, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        k = 0
        while k < m and it < maxiter:
            Z[k] = M(V[k])
            w = A @ Z[k]
            for j in range(k + 1):  # modified Gram-Schmidt
                H[j, k] = w @ V[j]
                w -= H[j, k] * V[j]
            H[k + 1, k] = np.linalg.norm(w)
            if H[k + 1, k] > 0:
                V[k + 1] = w / H[k + 1, k]
            for j in range(k):
                hj = cs[j] * H[j, k] + sn[j] * H[j + 1, k]
                H[j + 1, k] = -sn[j] * H[j, k] + cs[j] * H[j + 1, k]
                H[j, k] = hj
            den = np.hypot(H[k, k], H[k + 1, k])
            if den == 0.0:
                raise SolverBreakdown("GMRES breakdown")
            cs[k], sn[k] = H[k, k] / den, H[k + 1, k] / den
            H[k, k] = den
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            k += 1
            it += 1
            if abs(g[k]) <= tol:
                break
        y = np.linalg.solve(np.triu(H[:k, :k]), g[:k]) if k else np.zeros(0)
        x += y @ Z[:k]
    return x, it


def _solve(A, b, cfg: SolverConfig, x0, method):
    A = as_csr(A)
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise SolverBreakdown("non-finite right-hand side")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return SolveResult(np.zeros_like(b), 0, 0.0, True)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    M = make_preconditioner(A, cfg.preconditioner)
    it = 0
    # the recurrence residual can drift from the true one; restart from the
    # current iterate a few times if the true residual is still too large
    for _ in range(4):
        left = cfg.maxiter - it
        if method == "cg":
            x, k = _cg(A, b, x, M, cfg.rtol, left, bnorm)
        elif method == "bicgstab":
            x, k = _bicgstab(A, b, x, M, cfg.rtol, left, bnorm)
        else:
            x, k = _gmres(A, b, x, M, cfg.rtol, left, bnorm, cfg.restart)
        it += k
        if it >= cfg.maxiter or np.linalg.norm(b - A @ x) <= cfg.rtol * bnorm:
            break
    return _finish(A, b, x, it, bnorm, cfg.rtol)


def solve_spd(A, b, cfg: SolverConfig = POISSON, x0=None) -> SolveResult:
    """Symmetric positive (semi)definite systems; ``cfg.method`` must be ``cg`` unless overridden."""
    return _solve(A, b, cfg, x0, cfg.method)


def solve_nonsymmetric(A, b, cfg: SolverConfig = PREDICTION, x0=None) -> SolveResult:
    if cfg.method == "cg":
        raise ValueError("CG requires a symmetric matrix; choose bicgstab or gmres")
    return _solve(A, b, cfg, x0, cfg.method)


def solve_neumann_poisson(K, b, cfg: SolverConfig = POISSON, weights=None, x0=None) -> SolveResult:
    """Singular Laplacian with constant kernel.

    The constant component of ``b`` is removed before the solve and the
    solution is shifted to zero ``weights``-weighted mean (``weights`` are
    typically the integrals of the basis functions).
    """
    b = np.asarray(b, dtype=float)
    b = b - b.mean()
    res = solve_spd(K, b, cfg, x0)
    x = res.x
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    # the shift only changes the residual by rounding (K @ 1 = 0)
    x = x - (w @ x) / w.sum()
    return SolveResult(x, res.iterations, res.residual, res.converged)
