"""Generalized Newtonian viscosity laws.

    nu(D) = nu_inf + (nu_0 - nu_inf) * (C0 + a * lam**2 * |D|**2) ** ((m - 1) / 2)

``|D|`` is the Frobenius norm of the symmetric shear-rate tensor.  With
``a = 1`` this is the Carreau-Yasuda style law used for the manufactured
solution, with ``a = 2`` the Carreau law of the cylinder benchmark.

Tensors are plain arrays whose last two axes are 2 x 2, so the same
functions work on a single tensor or on every quadrature point at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GeneralizedNewtonianLaw:
    nu0: float = 1.0
    nu_inf: float = 0.0
    c0: float = 1.0
    lam: float = 1.0
    m: float = 1.0
    shear_coeff: float = 1.0

    def __post_init__(self):
        if not (self.nu0 >= self.nu_inf >= 0):
            raise ValueError("need nu0 >= nu_inf >= 0")
        if self.c0 < 0 or self.lam < 0 or self.shear_coeff < 0:
            raise ValueError("c0, lam and shear_coeff must be non-negative")
        if self.m <= 0:
            raise ValueError("power index m must be positive")

    @classmethod
    def newtonian(cls, nu: float) -> "GeneralizedNewtonianLaw":
        return cls(nu0=nu, nu_inf=0.0, c0=1.0, lam=0.0, m=1.0)

    @classmethod
    def carreau(cls, nu0, nu_inf, lam, m) -> "GeneralizedNewtonianLaw":
        """Carreau law with the factor 2 on (lam |D|)^2."""
        return cls(nu0=nu0, nu_inf=nu_inf, c0=1.0, lam=lam, m=m, shear_coeff=2.0)

    @property
    def is_newtonian(self) -> bool:
        return self.m == 1.0 or self.nu0 == self.nu_inf or (self.lam == 0.0 and self.c0 == 1.0)

    def _base(self, norm2):
        return self.c0 + self.shear_coeff * self.lam**2 * norm2

    def from_norm2(self, norm2):
        """Viscosity as a function of |D|^2."""
        norm2 = np.asarray(norm2, dtype=float)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            nu = self.nu_inf + (self.nu0 - self.nu_inf) * self._base(norm2) ** ((self.m - 1.0) / 2.0)
        if not np.all(np.isfinite(nu)):
            raise FloatingPointError("viscosity evaluation overflowed or hit a singular point")
        return nu

    def dnorm2(self, norm2):
        """d nu / d(|D|^2)."""
        norm2 = np.asarray(norm2, dtype=float)
        k = self.shear_coeff * self.lam**2
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            d = (self.nu0 - self.nu_inf) * 0.5 * (self.m - 1.0) * k * self._base(norm2) ** ((self.m - 3.0) / 2.0)
        if self.m == 1.0 or k == 0.0:
            return np.zeros_like(norm2)
        if not np.all(np.isfinite(d)):
            raise FloatingPointError("viscosity derivative is singular here")
        return d


def shear_tensor(grad_u):
    """Symmetric part of the velocity gradient, ``D = (grad u + grad u^T) / 2``."""
    g = np.asarray(grad_u, dtype=float)
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def frobenius2(T):
    T = np.asarray(T, dtype=float)
    return np.einsum("...ij,...ij->...", T, T)


def viscosity(law: GeneralizedNewtonianLaw, D):
    return law.from_norm2(frobenius2(D))


def viscosity_gateaux(law: GeneralizedNewtonianLaw, D):
    """Derivative of the viscosity with respect to the tensor ``D``.

    Equals ``(m-1) (nu0-nu_inf) a lam^2 (C0 + a lam^2 |D|^2)^((m-3)/2) D``, so
    that ``dnu = viscosity_gateaux(law, D) : dD``.
    """
    D = np.asarray(D, dtype=float)
    n2 = frobenius2(D)
    if law.c0 == 0.0 and law.m < 3.0 and np.any(n2 == 0.0):
        raise FloatingPointError("viscosity derivative is singular at D = 0 when C0 = 0")
    return 2.0 * law.dnorm2(n2)[..., None, None] * D


@dataclass
class MonotonicityReport:
    samples: int
    min_value: float
    negative_pairs: int
    passed: bool


def check_monotonicity(law: GeneralizedNewtonianLaw, sample_count: int = 10_000, scale: float = 3.0,
                       seed: int = 0, tol: float = 1e-12) -> MonotonicityReport:
    """Sample ``(nu(F) F - nu(G) G) : (F - G)`` over random symmetric tensor pairs."""
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    # log-uniform magnitudes so both the Newtonian plateau and the power-law tail are probed
    def draw():
        T = rng.standard_normal((sample_count, 2, 2))
        T = shear_tensor(T)
        mag = 10.0 ** rng.uniform(-2, np.log10(scale) + 1, size=sample_count)
        return T * (mag / np.sqrt(frobenius2(T)))[:, None, None]

    F, G = draw(), draw()
    flux = viscosity(law, F)[:, None, None] * F - viscosity(law, G)[:, None, None] * G
    vals = np.einsum("nij,nij->n", flux, F - G)
    mn = float(vals.min())
    return MonotonicityReport(sample_count, mn, int(np.sum(vals < -tol)), mn >= -tol)
