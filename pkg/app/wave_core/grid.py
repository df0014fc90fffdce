"""
Uniform 1D lattice with hard-wall (Dirichlet) boundaries.

- Only interior points are stored; psi == 0 on the two boundary points.
- Quadrature is the rectangle rule (weight dx per interior point), which is
  the inner product under which the three-point Hamiltonian is symmetric.
- Derivatives are second-order central differences with zero ghost values.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Union
import math

import numpy as np

from .constants import DEFAULTS
from .errors import GridError


# =============================================================================
# Data models
# =============================================================================

@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_interior: int

    def __post_init__(self):
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)):
            raise GridError(f"Grid bounds must be finite, got ({self.x_min}, {self.x_max})")
        if self.x_max <= self.x_min:
            raise GridError(f"x_max must exceed x_min, got ({self.x_min}, {self.x_max})")
        if int(self.n_interior) != self.n_interior or self.n_interior < DEFAULTS.MIN_INTERIOR_POINTS:
            raise GridError(
                f"n_interior must be an integer >= {DEFAULTS.MIN_INTERIOR_POINTS}, got {self.n_interior}"
            )

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_interior + 1)

    @cached_property
    def x(self) -> np.ndarray:
        x = self.x_min + self.dx * np.arange(1, self.n_interior + 1, dtype=np.float64)
        x.setflags(write=False)
        return x

    def to_json(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "n_interior": self.n_interior, "dx": self.dx}


def _frozen(values: np.ndarray, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ComplexField:
    values: np.ndarray
    grid: Grid1D

    def __post_init__(self):
        arr = _frozen(self.values, np.complex128)
        object.__setattr__(self, "values", arr)
        _check_shape_and_finite(arr, self.grid)


@dataclass(frozen=True, eq=False)
class RealField:
    values: np.ndarray
    grid: Grid1D

    def __post_init__(self):
        arr = np.asarray(self.values)
        if np.iscomplexobj(arr):
            raise GridError("RealField values must be real")
        arr = _frozen(arr, np.float64)
        object.__setattr__(self, "values", arr)
        _check_shape_and_finite(arr, self.grid)


Field = Union[ComplexField, RealField]


def _check_shape_and_finite(arr: np.ndarray, grid: Grid1D) -> None:
    if arr.shape != (grid.n_interior,):
        raise GridError(f"Field has shape {arr.shape}, grid expects ({grid.n_interior},)")
    if not np.all(np.isfinite(arr)):
        raise GridError("Field contains non-finite values")


def require_same_grid(a: Grid1D, b: Grid1D) -> None:
    if a != b:
        raise GridError(f"Grid mismatch: {a} vs {b}")


# =============================================================================
# Construction + discrete calculus
# =============================================================================

def build_grid(x_min: float, x_max: float, n_interior: int) -> Grid1D:
    return Grid1D(x_min=float(x_min), x_max=float(x_max), n_interior=int(n_interior))


def integrate(f: Field) -> float:
    """dx * sum(f); boundary cells carry zero."""
    return float(f.grid.dx * np.sum(f.values))


def inner(f: Field, g: Field) -> complex:
    """Discrete inner product <f, g> = dx * sum(conj(f) * g)."""
    require_same_grid(f.grid, g.grid)
    return complex(f.grid.dx * np.vdot(f.values, g.values))


def norm_squared(f: Field) -> float:
    return float(f.grid.dx * np.sum(np.abs(f.values) ** 2))


def central_first(values: np.ndarray, dx: float) -> np.ndarray:
    padded = np.concatenate(([0.0], values, [0.0]))
    return (padded[2:] - padded[:-2]) / (2.0 * dx)


def central_second(values: np.ndarray, dx: float) -> np.ndarray:
    padded = np.concatenate(([0.0], values, [0.0]))
    return (padded[2:] - 2.0 * padded[1:-1] + padded[:-2]) / (dx * dx)


def differentiate(f: Field, order: int) -> Field:
    if order == 1:
        values = central_first(f.values, f.grid.dx)
    elif order == 2:
        values = central_second(f.values, f.grid.dx)
    else:
        raise GridError(f"Derivative order must be 1 or 2, got {order}")
    return type(f)(values=values, grid=f.grid)
