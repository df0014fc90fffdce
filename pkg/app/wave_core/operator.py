"""
Discrete Hamiltonian, eigenbasis and the nonlinear damping term.

H is the real symmetric tridiagonal matrix of the three-point stencil:
    diag_i = hbar^2 / (m dx^2) + V_i,   off = -hbar^2 / (2 m dx^2)

The damping term acts multiplicatively through a real field F:
    radiation : F = beta * d(rho)/dt      (d(rho)/dt = (2/hbar) Im(psi* H psi))
    kerr      : F = beta * rho            (comparison term; does not radiate on average)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple
import logging
import math

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal

from .constants import DAMPING_KINDS, DEFAULTS
from .errors import EigenSolverError, FieldConfigError
from .fields import NATURAL_UNITS, UnitsConfig
from .grid import ComplexField, Grid1D, RealField, require_same_grid

logger = logging.getLogger(__name__)


# =============================================================================
# Data models
# =============================================================================

@dataclass(frozen=True, eq=False)
class HamiltonianMatrix:
    diagonal: np.ndarray
    off_diagonal: float
    grid: Grid1D
    t: float = 0.0

    @property
    def norm_bound(self) -> float:
        """Gershgorin bound on the spectral norm."""
        return float(np.max(np.abs(self.diagonal)) + 2.0 * abs(self.off_diagonal))


@dataclass(frozen=True, eq=False)
class EigenBasis:
    energies: np.ndarray  # ascending
    states: np.ndarray    # shape (k, n_interior), real, dx-orthonormal
    grid: Grid1D

    @property
    def size(self) -> int:
        return int(self.energies.size)

    def state(self, n: int) -> ComplexField:
        if not 0 <= n < self.size:
            raise IndexError(f"Eigenstate {n} outside basis of size {self.size}")
        return ComplexField(values=self.states[n], grid=self.grid)

    @property
    def gap(self) -> float:
        """E_1 - E_0, the energy scale of the ledger tolerances."""
        if self.size < 2:
            return 1.0
        return float(self.energies[1] - self.energies[0])


@dataclass(frozen=True)
class DampingConfig:
    beta: float = DEFAULTS.BETA
    kind: str = DEFAULTS.DAMPING_KIND

    def __post_init__(self):
        if not math.isfinite(self.beta):
            raise FieldConfigError(f"beta must be finite, got {self.beta}")
        if self.kind not in DAMPING_KINDS:
            raise FieldConfigError(f"Unknown damping kind '{self.kind}'. Use one of: {list(DAMPING_KINDS)}")

    @property
    def active(self) -> bool:
        return self.beta != 0.0


@dataclass(frozen=True, eq=False)
class Projection:
    coefficients: np.ndarray
    populations: np.ndarray
    residual: float
    degenerate_groups: Tuple[Tuple[int, ...], ...] = ()
    group_totals: Tuple[float, ...] = ()


# =============================================================================
# Hamiltonian
# =============================================================================

def assemble_hamiltonian(
    grid: Grid1D,
    V: RealField,
    units: UnitsConfig = NATURAL_UNITS,
    t: float = 0.0,
) -> HamiltonianMatrix:
    require_same_grid(grid, V.grid)
    kinetic = units.hbar ** 2 / (units.mass * grid.dx ** 2)
    diagonal = kinetic + V.values
    diagonal.setflags(write=False)
    return HamiltonianMatrix(diagonal=diagonal, off_diagonal=-0.5 * kinetic, grid=grid, t=t)


def hamiltonian_product(H: HamiltonianMatrix, values: np.ndarray) -> np.ndarray:
    out = H.diagonal * values
    out[:-1] += H.off_diagonal * values[1:]
    out[1:] += H.off_diagonal * values[:-1]
    return out


def apply_hamiltonian(H: HamiltonianMatrix, psi: ComplexField) -> ComplexField:
    require_same_grid(H.grid, psi.grid)
    return ComplexField(values=hamiltonian_product(H, psi.values), grid=psi.grid)


# =============================================================================
# Eigenbasis
# =============================================================================

def solve_eigenbasis(H: HamiltonianMatrix, k_max: int = DEFAULTS.K_MAX) -> EigenBasis:
    grid = H.grid
    n = grid.n_interior
    if not 1 <= k_max <= n:
        raise EigenSolverError(f"k_max must be in [1, {n}], got {k_max}")

    off = np.full(n - 1, H.off_diagonal)
    try:
        energies, vectors = eigh_tridiagonal(
            H.diagonal,
            off,
            select="i",
            select_range=(0, k_max - 1),
            lapack_driver="stemr",
        )
    except (LinAlgError, ValueError) as e:
        raise EigenSolverError(f"Tridiagonal eigensolver failed: {e}") from e

    if energies.shape != (k_max,) or not (np.all(np.isfinite(energies)) and np.all(np.isfinite(vectors))):
        raise EigenSolverError(f"Eigensolver returned {energies.size} of {k_max} requested pairs")

    states = vectors.T / math.sqrt(grid.dx)
    for row in states:
        cutoff = DEFAULTS.SIGN_CUTOFF * np.max(np.abs(row))
        first = int(np.argmax(np.abs(row) > cutoff))
        if row[first] < 0.0:
            row *= -1.0

    gram = grid.dx * states @ states.T
    err = float(np.max(np.abs(gram - np.eye(k_max))))
    if err > 1e2 * DEFAULTS.ORTHONORMALITY_TOL:
        raise EigenSolverError(f"Eigenvectors not orthonormal (max deviation {err:.3e})")
    if err > DEFAULTS.ORTHONORMALITY_TOL:
        logger.warning("eigenbasis orthonormality deviation %.3e", err)

    energies = np.array(energies)
    energies.setflags(write=False)
    states.setflags(write=False)
    return EigenBasis(energies=energies, states=states, grid=grid)


def _degenerate_groups(energies: np.ndarray) -> List[Tuple[int, ...]]:
    groups: List[Tuple[int, ...]] = []
    current = [0]
    for i in range(1, energies.size):
        scale = max(1.0, abs(energies[i]))
        if energies[i] - energies[i - 1] < DEFAULTS.DEGENERACY_RTOL * scale:
            current.append(i)
            continue
        if len(current) > 1:
            groups.append(tuple(current))
        current = [i]
    if len(current) > 1:
        groups.append(tuple(current))
    return groups


def project_coefficients(psi: ComplexField, basis: EigenBasis) -> Projection:
    require_same_grid(psi.grid, basis.grid)
    dx = psi.grid.dx
    coefficients = dx * (basis.states @ psi.values)
    populations = np.abs(coefficients) ** 2
    residual = float(dx * np.sum(np.abs(psi.values) ** 2) - np.sum(populations))

    groups = _degenerate_groups(basis.energies)
    totals = tuple(float(np.sum(populations[list(g)])) for g in groups)
    return Projection(
        coefficients=coefficients,
        populations=populations,
        residual=residual,
        degenerate_groups=tuple(groups),
        group_totals=totals,
    )


# =============================================================================
# Density rate + damping
# =============================================================================

def density_rate(H: HamiltonianMatrix, values: np.ndarray, hbar: float) -> np.ndarray:
    return (2.0 / hbar) * np.imag(np.conj(values) * hamiltonian_product(H, values))


def drho_dt(psi: ComplexField, H: HamiltonianMatrix, units: UnitsConfig = NATURAL_UNITS) -> RealField:
    """
    d(rho)/dt at the current time level. The damping term drops out of the
    continuity equation, so this holds for the nonlinear equation as well.
    """
    require_same_grid(psi.grid, H.grid)
    return RealField(values=density_rate(H, psi.values, units.hbar), grid=psi.grid)


def damping_values(cfg: DampingConfig, H: HamiltonianMatrix, values: np.ndarray, hbar: float) -> np.ndarray:
    if not cfg.active:
        return np.zeros(values.shape, dtype=np.float64)
    if cfg.kind == "kerr":
        return cfg.beta * np.abs(values) ** 2
    return cfg.beta * density_rate(H, values, hbar)


def damping_field(
    cfg: DampingConfig,
    psi: ComplexField,
    H: HamiltonianMatrix,
    units: UnitsConfig = NATURAL_UNITS,
) -> RealField:
    require_same_grid(psi.grid, H.grid)
    return RealField(values=damping_values(cfg, H, psi.values, units.hbar), grid=psi.grid)


def apply_damping(
    cfg: DampingConfig,
    psi: ComplexField,
    H: HamiltonianMatrix,
    units: UnitsConfig = NATURAL_UNITS,
) -> ComplexField:
    F = damping_field(cfg, psi, H, units)
    return ComplexField(values=F.values * psi.values, grid=psi.grid)
