"""Flat ``key = value`` run configuration."""

from __future__ import annotations

import difflib
import hashlib
from fractions import Fraction
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

from . import sparse_la
from .rheology import GeneralizedNewtonianLaw

EXPERIMENTS = ("run", "mms-time", "mms-space", "cylinder")


class ConfigError(ValueError):
    def __init__(self, msg: str, key: Optional[str] = None, lineno: Optional[int] = None):
        where = f"line {lineno}: " if lineno else ""
        super().__init__(f"{where}{msg}")
        self.key = key
        self.lineno = lineno


@dataclass(frozen=True)
class RunConfig:
    experiment: str = "run"
    # scheme
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
    prediction_rtol: float = 1e-8
    poisson_rtol: float = 1e-10
    # fluid
    nu0: float = 1.0
    nu_inf: float = 0.0
    c0: float = 1.0
    lam: float = 1.0
    m: float = 0.5
    shear_coeff: float = 1.0
    rho: float = 1.0
    # mesh: cells per side of the unit square, a mesh file, or "cylinder"
    mesh: str = "16"
    # sweeps
    dts: tuple = (0.1, 0.05, 0.025, 0.0125)
    ns: tuple = (8, 16, 32, 64)
    space_dt: float = 1e-4
    space_steps: int = 50
    space_oracle: bool = True
    # cylinder
    cu: float = 10.0
    re: float = 10.0
    m_values: tuple = (1.0, 0.7, 0.4)
    steady_tol: float = 1e-5
    window: int = 10
    max_time: float = 300.0
    # output
    output_dir: str = "out"
    deterministic: bool = True
    snapshot_period: int = 0

    def __post_init__(self):
        from .scheme import CONVECTION, FIRST_STEPS, VARIANTS, VISCOSITY

        def choice(key, allowed):
            v = getattr(self, key)
            if v not in allowed:
                raise ConfigError(f"{key} = {v!r}: allowed values are {', '.join(allowed)}", key)

        def positive(*keys):
            for k in keys:
                if not getattr(self, k) > 0:
                    raise ConfigError(f"{k} must be positive", k)

        choice("experiment", EXPERIMENTS)
        choice("variant", VARIANTS)
        choice("convection_strategy", CONVECTION)
        choice("viscosity_strategy", VISCOSITY)
        choice("first_step", FIRST_STEPS)
        choice("correction_bc", ("none", "dirichlet"))
        positive("dt", "final_time", "fixed_point_tol", "fixed_point_max_iter", "rho", "space_dt",
                 "space_steps", "cu", "re", "steady_tol", "max_time", "nu0", "m")
        for k in ("prediction_rtol", "poisson_rtol"):
            if not 0 < getattr(self, k) < 1:
                raise ConfigError(f"{k} must lie in (0, 1)", k)
        if not 0 < self.alpha <= 1:
            raise ConfigError("alpha must lie in (0, 1]", "alpha")
        if self.final_time < self.dt * (1 - 1e-12):
            raise ConfigError("final_time must be >= dt", "final_time")
        if not 0 <= self.nu_inf <= self.nu0:
            raise ConfigError("nu_inf must lie in [0, nu0]", "nu_inf")
        if self.window < 2:
            raise ConfigError("window must be >= 2", "window")
        if self.snapshot_period < 0:
            raise ConfigError("snapshot_period must be >= 0", "snapshot_period")
        if self.experiment == "mms-time" and len(self.dts) < 3:
            raise ConfigError("mms-time needs at least 3 values", "dts")
        if self.experiment == "mms-space" and len(self.ns) < 3:
            raise ConfigError("mms-space needs at least 3 values", "ns")
        if any(d <= 0 for d in self.dts):
            raise ConfigError("time steps must be positive", "dts")
        if any(n < 1 for n in self.ns):
            raise ConfigError("mesh sizes must be >= 1", "ns")
        if self.experiment == "cylinder" and not self.m_values:
            raise ConfigError("need at least one power index", "m_values")
        self._check_mesh()
        if self.experiment == "cylinder" and self.mesh.isdigit():
            raise ConfigError("the cylinder experiment needs mesh = cylinder or a mesh file", "mesh")

    def _check_mesh(self):
        if self.mesh == "cylinder" or self.mesh.isdigit():
            if self.mesh.isdigit() and int(self.mesh) < 1:
                raise ConfigError("mesh size must be >= 1", "mesh")
            return
        if not Path(self.mesh).is_file():
            raise ConfigError(f"mesh file {self.mesh!r} does not exist", "mesh")

    # -- conversions ----------------------------------------------------------------

    def scheme_config(self, **overrides):
        from .scheme import SchemeConfig

        pred = replace(sparse_la.PREDICTION, rtol=self.prediction_rtol)
        pois = replace(sparse_la.POISSON, rtol=self.poisson_rtol)
        kw = dict(
            variant=self.variant, convection_strategy=self.convection_strategy,
            viscosity_strategy=self.viscosity_strategy, dt=self.dt, final_time=self.final_time,
            fixed_point_tol=self.fixed_point_tol, fixed_point_max_iter=self.fixed_point_max_iter,
            alpha=self.alpha, first_step=self.first_step, correction_bc=self.correction_bc,
            prediction_solver=pred, poisson_solver=pois,
        )
        kw.update(overrides)
        return SchemeConfig(**kw)

    def law(self) -> GeneralizedNewtonianLaw:
        return GeneralizedNewtonianLaw(self.nu0, self.nu_inf, self.c0, self.lam, self.m, self.shear_coeff)

    def load_mesh(self):
        from .mesh import generate_unit_square, read_mesh

        if self.mesh.isdigit():
            return generate_unit_square(int(self.mesh))
        if self.mesh == "cylinder":
            from .mesh import load_cylinder_mesh

            return load_cylinder_mesh()
        return read_mesh(self.mesh)

    def mesh_identity(self) -> str:
        if self.mesh.isdigit():
            return f"unit_square n={self.mesh}"
        if self.mesh == "cylinder":
            return "cylinder (shipped)"
        digest = hashlib.sha256(Path(self.mesh).read_bytes()).hexdigest()[:16]
        return f"file {self.mesh} sha256={digest}"

    def config_hash(self) -> str:
        return hashlib.sha256(serialize_config(self).encode()).hexdigest()[:16]


_FIELDS = {f.name: f for f in fields(RunConfig)}
_KIND = {k: type(v) for k, v in asdict(RunConfig()).items()}
_LIST_ITEM = {"dts": float, "ns": int, "m_values": float}


def _parse_scalar(kind, raw: str, key: str):
    if kind is bool:
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{key} expects a boolean, got {raw!r}", key)
    try:
        if kind is float and "/" in raw:
            return float(Fraction(raw.replace(" ", "")))
        return kind(raw)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{key} expects {kind.__name__}, got {raw!r}", key) from None


def _parse_value(key: str, raw: str):
    kind = _KIND[key]
    if kind is tuple:
        items = [s.strip() for s in raw.split(",") if s.strip()]
        return tuple(_parse_scalar(_LIST_ITEM[key], s, key) for s in items)
    return _parse_scalar(kind, raw.strip(), key)


def parse_config_text(text: str) -> RunConfig:
    values, lines = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ConfigError(f"expected 'key = value', got {s!r}", lineno=lineno)
        key, raw = (p.strip() for p in s.split("=", 1))
        if key not in _FIELDS:
            close = difflib.get_close_matches(key, list(_FIELDS), n=1)
            hint = f" (did you mean {close[0]!r}?)" if close else ""
            raise ConfigError(f"unknown key {key!r}{hint}", key, lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", key, lineno)
        try:
            values[key] = _parse_value(key, raw)
        except ConfigError as e:
            raise ConfigError(str(e), key, lineno) from None
        lines[key] = lineno
    try:
        return RunConfig(**values)
    except ConfigError as e:
        if e.key in lines:
            raise ConfigError(str(e), e.key, lines[e.key]) from None
        raise


def parse_config(path) -> RunConfig:
    return parse_config_text(Path(path).read_text())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg: RunConfig) -> str:
    return "".join(f"{f.name} = {_fmt(getattr(cfg, f.name))}\n" for f in fields(cfg))
