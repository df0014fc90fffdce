"""
Physical diagnostics of a wave function and residuals of the identities the
damped equation must satisfy.

Per sample:
- norm, <E> = <psi, H psi>, <v> = <psi, v psi> with v = -(i hbar/m) d/dx
- radiation power P = -(1/i hbar) <psi, [H, F] psi>
- Lorentz force  <F_q> = <psi, [H, D] psi>  (includes the reaction of the hard walls;
                 -int rho dV/dx is kept alongside as gradient_force)
- recoil force   <F_r> = (m/i hbar) <psi, [v, F] psi>   (also the reduced form -int rho dF/dx)
- populations |C_n|^2 in the static eigenbasis

Per step, from the trapezoidal pair (psi_n, psi_n+1) with every rate taken at
psi_mid = (psi_n + psi_n+1) / 2 and H(t + dt/2) (step_residuals):
- continuity : int |d(rho)/dt + dJ/dx|   (J on the bonds between grid points)
- Ehrenfest  : |m d<v>/dt - <F_q> - <F_r>|
- ledger     : |d<E>/dt - work rate + P|
- condition  : |-P - (int V d(rho)/dt + dK/dt)|   (K = discrete kinetic energy)
- power gap  : |P - int F d(rho)/dt|

The same identities across three consecutive samples (central differences over
the sampling interval) come from identity_residuals; those shrink with the
square of the interval.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, asdict, fields as dataclass_fields, replace
from typing import Any, Deque, Dict, Optional, Sequence, Tuple
import logging
import math

import numpy as np

from .constants import DEFAULTS
from .errors import InsufficientSamplesError
from .fields import NATURAL_UNITS, FieldConfig, UnitsConfig, dV_dt_at, dV_dx_at, potential_at
from .grid import ComplexField, RealField, central_first, require_same_grid
from .operator import (
    DampingConfig,
    EigenBasis,
    HamiltonianMatrix,
    assemble_hamiltonian,
    damping_values,
    density_rate,
    hamiltonian_product,
    project_coefficients,
)

logger = logging.getLogger(__name__)

NAN = float("nan")


# =============================================================================
# Data models
# =============================================================================

@dataclass(frozen=True)
class IdentityResiduals:
    continuity: float
    ehrenfest: float
    energy_ledger: float
    condition24: float
    power_formula_gap: float

    @classmethod
    def empty(cls) -> "IdentityResiduals":
        return cls(NAN, NAN, NAN, NAN, NAN)

    def maximum(self, other: "IdentityResiduals") -> "IdentityResiduals":
        values = {}
        for f in dataclass_fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            values[f.name] = b if math.isnan(a) else (a if math.isnan(b) else max(a, b))
        return IdentityResiduals(**values)

    def to_json(self) -> Dict[str, Optional[float]]:
        return {k: (None if math.isnan(v) else v) for k, v in asdict(self).items()}


@dataclass(frozen=True)
class ObservableRecord:
    t: float
    norm: float
    energy: float
    velocity: float
    power: float
    populations: Tuple[float, ...]
    radiated: float
    external_work: float
    lorentz_force: float
    recoil_force: float

    # ingredients of the residuals
    work_rate: float = 0.0
    kinetic: float = 0.0
    density_potential_rate: float = 0.0
    power_formula_gap: float = 0.0
    recoil_reduced: float = 0.0
    gradient_force: float = 0.0
    packet_power: float = 0.0

    # largest per-step residual since the previous sample (NaN on the first sample)
    res_continuity: float = NAN
    res_ehrenfest: float = NAN
    res_ledger: float = NAN
    res_cond24: float = NAN

    def with_residuals(self, r: IdentityResiduals) -> "ObservableRecord":
        return replace(
            self,
            res_continuity=r.continuity,
            res_ehrenfest=r.ehrenfest,
            res_ledger=r.energy_ledger,
            res_cond24=r.condition24,
        )

    @property
    def dominant(self) -> int:
        return int(np.argmax(self.populations))

    def to_json(self) -> Dict[str, Any]:
        d = asdict(self)
        d["populations"] = list(self.populations)
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}


# =============================================================================
# Single-state observables
# =============================================================================

def bond_current(values: np.ndarray, dx: float, units: UnitsConfig = NATURAL_UNITS) -> np.ndarray:
    """J on the n+1 bonds between neighbouring points, walls included (both wall bonds carry 0)."""
    padded = np.concatenate(([0.0], values, [0.0]))
    return (units.hbar / (units.mass * dx)) * np.imag(np.conj(padded[:-1]) * padded[1:])


def current_divergence(psi: ComplexField, units: UnitsConfig = NATURAL_UNITS) -> RealField:
    """dJ/dx at the grid points; equals -d(rho)/dt of the three-point Hamiltonian exactly."""
    bonds = bond_current(psi.values, psi.grid.dx, units)
    return RealField(values=np.diff(bonds) / psi.grid.dx, grid=psi.grid)


def current_density(psi: ComplexField, units: UnitsConfig = NATURAL_UNITS) -> RealField:
    dpsi = central_first(psi.values, psi.grid.dx)
    return RealField(values=(units.hbar / units.mass) * np.imag(np.conj(psi.values) * dpsi), grid=psi.grid)


def _velocity_op(values: np.ndarray, dx: float, units: UnitsConfig) -> np.ndarray:
    return (-1j * units.hbar / units.mass) * central_first(values, dx)


def velocity(psi: ComplexField, units: UnitsConfig = NATURAL_UNITS) -> float:
    """<v> from the velocity operator (independent of current_density)."""
    dx = psi.grid.dx
    return float(np.real(dx * np.vdot(psi.values, _velocity_op(psi.values, dx, units))))


def average_energy(psi: ComplexField, H: HamiltonianMatrix, units: UnitsConfig = NATURAL_UNITS) -> float:
    require_same_grid(psi.grid, H.grid)
    return float(psi.grid.dx * np.sum(np.real(np.conj(psi.values) * hamiltonian_product(H, psi.values))))


def kinetic_energy(psi: ComplexField, units: UnitsConfig = NATURAL_UNITS) -> float:
    """(hbar^2/2m) int |dpsi/dx|^2 with forward differences through the walls."""
    dx = psi.grid.dx
    padded = np.concatenate(([0.0], psi.values, [0.0]))
    grad = np.diff(padded) / dx
    return float(units.hbar ** 2 / (2.0 * units.mass) * dx * np.sum(np.abs(grad) ** 2))


def _check_real(value: complex, scale: float, what: str) -> float:
    if abs(value.imag) > DEFAULTS.COMMUTATOR_IMAG_RTOL * max(scale, 1.0):
        logger.warning("%s has imaginary part %.3e (scale %.3e)", what, value.imag, scale)
    return float(value.real)


def radiation_power(
    psi: ComplexField,
    H: HamiltonianMatrix,
    damping: DampingConfig,
    units: UnitsConfig = NATURAL_UNITS,
) -> float:
    """P = -(1/i hbar) [<psi, H(F psi)> - <psi, F(H psi)>]."""
    require_same_grid(psi.grid, H.grid)
    if not damping.active:
        return 0.0
    dx = psi.grid.dx
    values = psi.values
    F = damping_values(damping, H, values, units.hbar)
    h_of_f = hamiltonian_product(H, F * values)
    f_of_h = F * hamiltonian_product(H, values)
    bracket = dx * (np.vdot(values, h_of_f) - np.vdot(values, f_of_h))
    power = -bracket / (1j * units.hbar)
    scale = dx * float(np.sum(np.abs(values) ** 2)) * H.norm_bound * float(np.max(np.abs(F), initial=0.0))
    return _check_real(complex(power), scale, "radiation power")


def power_from_density_rate(
    psi: ComplexField,
    H: HamiltonianMatrix,
    damping: DampingConfig,
    units: UnitsConfig = NATURAL_UNITS,
) -> float:
    """int F d(rho)/dt; equals beta int (d(rho)/dt)^2 for the radiation term."""
    if not damping.active:
        return 0.0
    rate = density_rate(H, psi.values, units.hbar)
    F = damping_values(damping, H, psi.values, units.hbar)
    return float(psi.grid.dx * np.sum(F * rate))


def gradient_force(psi: ComplexField, fields: FieldConfig, t: float, units: UnitsConfig = NATURAL_UNITS) -> float:
    """-int rho dV/dx with the potential gradient from np.gradient."""
    rho = np.abs(psi.values) ** 2
    return -float(psi.grid.dx * np.sum(rho * dV_dx_at(fields, psi.grid, t, units).values))


def recoil_force_reduced(
    psi: ComplexField,
    H: HamiltonianMatrix,
    damping: DampingConfig,
    units: UnitsConfig = NATURAL_UNITS,
) -> float:
    if not damping.active:
        return 0.0
    F = damping_values(damping, H, psi.values, units.hbar)
    rho = np.abs(psi.values) ** 2
    return -float(psi.grid.dx * np.sum(rho * central_first(F, psi.grid.dx)))


def forces(
    psi: ComplexField,
    H: HamiltonianMatrix,
    damping: DampingConfig,
    units: UnitsConfig = NATURAL_UNITS,
) -> Tuple[float, float]:
    """
    (<F_q>, <F_r>), both as commutators with the discrete velocity operator.
    <F_q> = <psi, [H, D] psi> is -int rho dV/dx plus the push of the walls.
    """
    require_same_grid(psi.grid, H.grid)
    dx = psi.grid.dx
    rho = np.abs(psi.values) ** 2
    values = psi.values
    h_of_d = hamiltonian_product(H, central_first(values, dx))
    d_of_h = central_first(hamiltonian_product(H, values), dx)
    lorentz = float(np.real(dx * np.vdot(values, h_of_d - d_of_h)))

    if not damping.active:
        return lorentz, 0.0

    F = damping_values(damping, H, values, units.hbar)
    commutator = _velocity_op(F * values, dx, units) - F * _velocity_op(values, dx, units)
    recoil = units.mass / (1j * units.hbar) * dx * np.vdot(values, commutator)
    scale = dx * float(np.sum(rho)) * float(np.max(np.abs(F), initial=0.0)) * units.hbar / (units.mass * dx)
    return lorentz, _check_real(complex(recoil), scale, "recoil force")


# =============================================================================
# Sampling
# =============================================================================

def observe(
    psi: ComplexField,
    t: float,
    fields: FieldConfig,
    damping: DampingConfig,
    basis: EigenBasis,
    units: UnitsConfig = NATURAL_UNITS,
    *,
    radiated: float = 0.0,
    work: float = 0.0,
) -> ObservableRecord:
    grid = psi.grid
    dx = grid.dx
    V = potential_at(fields, grid, t, units)
    H = assemble_hamiltonian(grid, V, units, t=t)
    rho = np.abs(psi.values) ** 2
    rate = density_rate(H, psi.values, units.hbar)

    power = radiation_power(psi, H, damping, units)
    lorentz, recoil = forces(psi, H, damping, units)
    v = velocity(psi, units)
    projection = project_coefficients(psi, basis)

    return ObservableRecord(
        t=t,
        norm=float(dx * np.sum(rho)),
        energy=average_energy(psi, H, units),
        velocity=v,
        power=power,
        populations=tuple(float(p) for p in projection.populations),
        radiated=radiated,
        external_work=work,
        lorentz_force=lorentz,
        recoil_force=recoil,
        work_rate=float(dx * np.sum(dV_dt_at(fields, grid, t).values * rho)),
        kinetic=kinetic_energy(psi, units),
        density_potential_rate=float(dx * np.sum(rate * V.values)),
        power_formula_gap=abs(power - power_from_density_rate(psi, H, damping, units)),
        recoil_reduced=recoil_force_reduced(psi, H, damping, units),
        gradient_force=gradient_force(psi, fields, t, units),
        packet_power=-recoil * v,
    )


# =============================================================================
# Identity residuals
# =============================================================================

def step_residuals(
    old: ComplexField,
    new: ComplexField,
    t: float,
    dt: float,
    fields: FieldConfig,
    damping: DampingConfig,
    units: UnitsConfig = NATURAL_UNITS,
) -> IdentityResiduals:
    """
    Residuals across one step from t to t + dt. Differences of the end states
    are compared with rates at the midpoint state; for the trapezoidal update
    they vanish up to the fixed-point tolerance (and O(dt^2) in the work rate
    of a driven well).
    """
    require_same_grid(old.grid, new.grid)
    grid = old.grid
    dx = grid.dx
    t_mid = t + 0.5 * dt
    V_old = potential_at(fields, grid, t, units).values
    V_mid = potential_at(fields, grid, t_mid, units)
    V_new = potential_at(fields, grid, t + dt, units).values
    H_mid = assemble_hamiltonian(grid, V_mid, units, t=t_mid)
    mid = ComplexField(values=0.5 * (old.values + new.values), grid=grid)

    rho_old = np.abs(old.values) ** 2
    rho_new = np.abs(new.values) ** 2
    rho_mid = np.abs(mid.values) ** 2
    continuity = float(dx * np.sum(np.abs((rho_new - rho_old) / dt + current_divergence(mid, units).values)))

    power = radiation_power(mid, H_mid, damping, units)
    lorentz, recoil = forces(mid, H_mid, damping, units)
    momentum_rate = units.mass * (velocity(new, units) - velocity(old, units)) / dt
    ehrenfest = abs(momentum_rate - lorentz - recoil)

    K_old = kinetic_energy(old, units)
    K_new = kinetic_energy(new, units)
    E_old = K_old + float(dx * np.sum(V_old * rho_old))
    E_new = K_new + float(dx * np.sum(V_new * rho_new))
    work_rate = float(dx * np.sum(dV_dt_at(fields, grid, t_mid).values * rho_mid))
    ledger = abs((E_new - E_old) / dt - work_rate + power)

    potential_rate = float(dx * np.sum(V_mid.values * density_rate(H_mid, mid.values, units.hbar)))
    condition24 = abs(-power - (potential_rate + (K_new - K_old) / dt))

    return IdentityResiduals(
        continuity=continuity,
        ehrenfest=ehrenfest,
        energy_ledger=ledger,
        condition24=condition24,
        power_formula_gap=abs(power - power_from_density_rate(mid, H_mid, damping, units)),
    )


class ResidualTracker:
    """
    Rolling window of three samples; each push after the second yields the
    residuals at the middle sample (index in push order).
    """

    def __init__(self, units: UnitsConfig = NATURAL_UNITS):
        self.units = units
        self._window: Deque[Tuple[int, ObservableRecord, np.ndarray, np.ndarray]] = deque(maxlen=3)
        self._count = 0
        self.maxima = IdentityResiduals.empty()

    def push(self, record: ObservableRecord, psi: ComplexField) -> Optional[Tuple[int, IdentityResiduals]]:
        rho = np.abs(psi.values) ** 2
        div_j = current_divergence(psi, self.units).values
        self._window.append((self._count, record, rho, div_j))
        self._count += 1
        if len(self._window) < 3:
            return None

        (_, prev, rho_prev, _), (index, cur, _, div_cur), (_, nxt, rho_next, _) = self._window
        span = nxt.t - prev.t
        dx = psi.grid.dx

        continuity = float(dx * np.sum(np.abs((rho_next - rho_prev) / span + div_cur)))
        ehrenfest = abs(self.units.mass * (nxt.velocity - prev.velocity) / span - cur.lorentz_force - cur.recoil_force)
        ledger = abs((nxt.energy - prev.energy) / span - cur.work_rate + cur.power)
        kinetic_rate = (nxt.kinetic - prev.kinetic) / span
        condition24 = abs(-cur.power - (cur.density_potential_rate + kinetic_rate))

        residuals = IdentityResiduals(
            continuity=continuity,
            ehrenfest=ehrenfest,
            energy_ledger=ledger,
            condition24=condition24,
            power_formula_gap=cur.power_formula_gap,
        )
        self.maxima = self.maxima.maximum(residuals)
        return index, residuals


def identity_residuals(
    records: Sequence[ObservableRecord],
    states: Sequence[ComplexField],
    units: UnitsConfig = NATURAL_UNITS,
) -> IdentityResiduals:
    """Max-over-time residuals for consecutive, equally spaced samples."""
    if len(records) != len(states):
        raise ValueError(f"{len(records)} records but {len(states)} states")
    if len(records) < 3:
        raise InsufficientSamplesError(f"need at least 3 consecutive samples, got {len(records)}")
    tracker = ResidualTracker(units)
    for record, psi in zip(records, states):
        tracker.push(record, psi)
    return tracker.maxima
