"""
External potential energy V(x, t) = q*phi(x, t) with A == 0.

Static part (time-independent):
- square_well : V = 0 between the hard walls of the grid
- harmonic    : V = 1/2 m w0^2 x^2
- tabulated   : V given per interior grid point

Perturbation (all of the time dependence):
- none
- dipole_pulse    : V1 = eps * x * exp(-(t - t_c)^2 / tau^2)
- dipole_periodic : V1 = eps * x * s(t) * sin(w_d t),  s(t) = min(1, t / t_ramp)
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Optional, Tuple, Dict, Any
import math

import numpy as np

from .constants import STATIC_KINDS, PERTURBATION_KINDS
from .errors import FieldConfigError
from .grid import Grid1D, RealField


@dataclass(frozen=True)
class UnitsConfig:
    hbar: float = 1.0
    mass: float = 1.0
    charge: float = 1.0

    def __post_init__(self):
        for name in ("hbar", "mass", "charge"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise FieldConfigError(f"{name} must be finite and > 0, got {value}")


NATURAL_UNITS = UnitsConfig()


@dataclass(frozen=True)
class FieldConfig:
    static_kind: str = "square_well"
    perturbation: str = "none"

    omega0: float = 1.0
    table: Optional[Tuple[float, ...]] = None

    epsilon: float = 0.0
    t_center: float = 0.0
    tau: float = 1.0
    omega_drive: float = 1.0
    t_ramp: float = 1.0

    def __post_init__(self):
        if self.static_kind not in STATIC_KINDS:
            raise FieldConfigError(f"Unknown static kind '{self.static_kind}'. Use one of: {list(STATIC_KINDS)}")
        if self.perturbation not in PERTURBATION_KINDS:
            raise FieldConfigError(
                f"Unknown perturbation '{self.perturbation}'. Use one of: {list(PERTURBATION_KINDS)}"
            )
        if self.static_kind == "tabulated":
            if self.table is None:
                raise FieldConfigError("tabulated potential requires a table of values")
            object.__setattr__(self, "table", tuple(float(v) for v in self.table))
        for name in ("omega0", "epsilon", "t_center", "omega_drive"):
            if not math.isfinite(getattr(self, name)):
                raise FieldConfigError(f"{name} must be finite")
        if not (math.isfinite(self.tau) and self.tau > 0.0):
            raise FieldConfigError(f"tau must be > 0, got {self.tau}")
        if not (math.isfinite(self.t_ramp) and self.t_ramp > 0.0):
            raise FieldConfigError(f"t_ramp must be > 0, got {self.t_ramp}")

    @property
    def is_static(self) -> bool:
        return self.perturbation == "none"

    def static_only(self) -> "FieldConfig":
        """Same well with the perturbation switched off."""
        return FieldConfig(
            static_kind=self.static_kind,
            omega0=self.omega0,
            table=self.table,
        )

    def to_json(self) -> Dict[str, Any]:
        d = asdict(self)
        d["table"] = None if self.table is None else list(self.table)
        return d


# -------------------------
# static part
# -------------------------

def _static_values(cfg: FieldConfig, grid: Grid1D, units: UnitsConfig) -> np.ndarray:
    if cfg.static_kind == "square_well":
        return np.zeros(grid.n_interior)
    if cfg.static_kind == "harmonic":
        return 0.5 * units.mass * cfg.omega0 ** 2 * grid.x ** 2
    table = np.asarray(cfg.table, dtype=np.float64)
    if table.shape != (grid.n_interior,):
        raise FieldConfigError(
            f"tabulated potential has {table.size} values, grid has {grid.n_interior} interior points"
        )
    return table.copy()


# -------------------------
# perturbation envelopes: (g(t), dg/dt) with V1 = eps * x * g(t)
# -------------------------

def _envelope(cfg: FieldConfig, t: float) -> Tuple[float, float]:
    if cfg.perturbation == "none":
        return 0.0, 0.0

    if cfg.perturbation == "dipole_pulse":
        u = (t - cfg.t_center) / cfg.tau
        g = math.exp(-u * u)
        return g, -2.0 * u / cfg.tau * g

    # dipole_periodic
    if t <= 0.0:
        s, ds = 0.0, 0.0
    elif t < cfg.t_ramp:
        s, ds = t / cfg.t_ramp, 1.0 / cfg.t_ramp
    else:
        s, ds = 1.0, 0.0
    w = cfg.omega_drive
    return s * math.sin(w * t), ds * math.sin(w * t) + s * w * math.cos(w * t)


def potential_at(cfg: FieldConfig, grid: Grid1D, t: float, units: UnitsConfig = NATURAL_UNITS) -> RealField:
    values = _static_values(cfg, grid, units)
    g, _ = _envelope(cfg, t)
    if g != 0.0:
        values = values + cfg.epsilon * g * grid.x
    return RealField(values=values, grid=grid)


def dV_dt_at(cfg: FieldConfig, grid: Grid1D, t: float) -> RealField:
    """Analytic time derivative; the static part contributes nothing."""
    _, dg = _envelope(cfg, t)
    return RealField(values=cfg.epsilon * dg * grid.x, grid=grid)


def dV_dx_at(cfg: FieldConfig, grid: Grid1D, t: float, units: UnitsConfig = NATURAL_UNITS) -> RealField:
    V = potential_at(cfg, grid, t, units).values
    return RealField(values=np.gradient(V, grid.dx, edge_order=2), grid=grid)
