"""
Trapezoidal (Crank-Nicolson) propagation of

    i hbar dpsi/dt = H(t) psi + F[psi] psi

with H assembled at the midpoint time and the real damping field F frozen per
fixed-point iterate at psi_mid = (psi_old + psi_new) / 2. Each inner solve is a
tridiagonal linear system. With beta = 0 this is the unitary linear step.
No renormalization is ever applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple
import logging
import math

import numpy as np
from scipy.linalg import solve_banded

from .constants import DEFAULTS
from .errors import StepConvergenceError
from .fields import NATURAL_UNITS, FieldConfig, UnitsConfig, potential_at
from .grid import ComplexField
from .observables import IdentityResiduals, ObservableRecord, observe, step_residuals
from .operator import (
    DampingConfig,
    EigenBasis,
    HamiltonianMatrix,
    assemble_hamiltonian,
    damping_values,
    density_rate,
)

logger = logging.getLogger(__name__)


# =============================================================================
# Data models
# =============================================================================

@dataclass(frozen=True)
class StepperConfig:
    dt: float = DEFAULTS.DT
    fixed_point_tol: float = DEFAULTS.FIXED_POINT_TOL
    max_fixed_point_iters: int = DEFAULTS.MAX_FIXED_POINT_ITERS
    max_halvings: int = DEFAULTS.MAX_DT_HALVINGS

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not (math.isfinite(self.fixed_point_tol) and self.fixed_point_tol > 0.0):
            raise ValueError(f"fixed_point_tol must be > 0, got {self.fixed_point_tol}")
        if self.max_fixed_point_iters < 2:
            raise ValueError("max_fixed_point_iters must be >= 2 (convergence is judged between iterates)")
        if self.max_halvings < 0:
            raise ValueError("max_halvings must be >= 0")


@dataclass(frozen=True)
class StepReport:
    iterations_used: int
    norm_drift: float
    converged: bool
    # exact energy increments of this step (see module docstring of observables)
    radiated: float = 0.0
    work: float = 0.0
    dt: float = 0.0
    residuals: IdentityResiduals = field(default_factory=IdentityResiduals.empty)


@dataclass(frozen=True, eq=False)
class WaveState:
    psi: ComplexField
    t: float

    @property
    def norm(self) -> float:
        return float(self.psi.grid.dx * np.sum(np.abs(self.psi.values) ** 2))


@dataclass(eq=False)
class Evolution:
    records: List[ObservableRecord]
    final_state: WaveState
    total_steps: int
    steps_taken: int = 0
    radiated: float = 0.0
    work: float = 0.0
    aborted: bool = False
    failure: Optional[str] = None
    max_iterations: int = 0
    max_norm_drift: float = 0.0
    halvings: int = 0
    residual_max: IdentityResiduals = field(default_factory=IdentityResiduals.empty)
    states: Optional[List[ComplexField]] = None


# =============================================================================
# Single step
# =============================================================================

def _cn_solve(H: HamiltonianMatrix, F: np.ndarray, old: np.ndarray, a: complex) -> np.ndarray:
    """Solve (I + a(H + F)) new = (I - a(H + F)) old, a = i dt / (2 hbar)."""
    n = old.size
    generator_old = H.diagonal * old + F * old
    generator_old[:-1] += H.off_diagonal * old[1:]
    generator_old[1:] += H.off_diagonal * old[:-1]
    rhs = old - a * generator_old

    ab = np.empty((3, n), dtype=np.complex128)
    ab[0, 0] = 0.0
    ab[0, 1:] = a * H.off_diagonal
    ab[1, :] = 1.0 + a * (H.diagonal + F)
    ab[2, :-1] = a * H.off_diagonal
    ab[2, -1] = 0.0
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def step(
    state: WaveState,
    fields: FieldConfig,
    damping: DampingConfig,
    stepper: StepperConfig,
    units: UnitsConfig = NATURAL_UNITS,
    dt: Optional[float] = None,
) -> Tuple[WaveState, StepReport]:
    """
    Advance by dt (stepper.dt unless given). A step whose fixed point did not
    converge is still returned, flagged with converged=False.
    """
    grid = state.psi.grid
    dt = stepper.dt if dt is None else dt
    hbar = units.hbar
    t_mid = state.t + 0.5 * dt

    V_mid = potential_at(fields, grid, t_mid, units)
    H_mid = assemble_hamiltonian(grid, V_mid, units, t=t_mid)
    a = 1j * dt / (2.0 * hbar)
    old = state.psi.values

    F = damping_values(damping, H_mid, old, hbar)
    new = _cn_solve(H_mid, F, old, a)
    iterations = 1
    converged = True

    if damping.active:
        converged = False
        while iterations < stepper.max_fixed_point_iters:
            mid = 0.5 * (old + new)
            F = damping_values(damping, H_mid, mid, hbar)
            candidate = _cn_solve(H_mid, F, old, a)
            iterations += 1
            scale = max(np.linalg.norm(candidate), np.finfo(float).tiny)
            change = np.linalg.norm(candidate - new) / scale
            new = candidate
            if change < stepper.fixed_point_tol:
                converged = True
                break

    dx = grid.dx
    rho_old = np.abs(old) ** 2
    rho_new = np.abs(new) ** 2

    radiated = 0.0
    if damping.active:
        mid = 0.5 * (old + new)
        F_mid = damping_values(damping, H_mid, mid, hbar)
        radiated = dt * dx * float(np.sum(F_mid * density_rate(H_mid, mid, hbar)))

    work = 0.0
    if not fields.is_static:
        V_old = potential_at(fields, grid, state.t, units).values
        V_new = potential_at(fields, grid, state.t + dt, units).values
        work = dx * float(np.sum((V_new - V_mid.values) * rho_new) + np.sum((V_mid.values - V_old) * rho_old))

    new_psi = ComplexField(values=new, grid=grid)
    report = StepReport(
        iterations_used=iterations,
        norm_drift=abs(dx * float(np.sum(rho_new) - np.sum(rho_old))),
        converged=converged,
        radiated=radiated,
        work=work,
        dt=dt,
        residuals=step_residuals(state.psi, new_psi, state.t, dt, fields, damping, units),
    )
    return WaveState(psi=new_psi, t=state.t + dt), report


# =============================================================================
# Evolution
# =============================================================================

@dataclass
class _Advance:
    state: WaveState
    radiated: float = 0.0
    work: float = 0.0
    iterations: int = 0
    norm_drift: float = 0.0
    halvings: int = 0
    residuals: IdentityResiduals = field(default_factory=IdentityResiduals.empty)


def _advance(
    state: WaveState,
    dt: float,
    depth: int,
    fields: FieldConfig,
    damping: DampingConfig,
    stepper: StepperConfig,
    units: UnitsConfig,
) -> _Advance:
    """One step of size dt, retried as two half steps while the fixed point fails."""
    new_state, report = step(state, fields, damping, stepper, units, dt=dt)
    if report.converged:
        return _Advance(
            state=new_state,
            radiated=report.radiated,
            work=report.work,
            iterations=report.iterations_used,
            norm_drift=report.norm_drift,
            residuals=report.residuals,
        )

    if depth >= stepper.max_halvings:
        raise StepConvergenceError(
            f"fixed point did not converge at t={state.t:.6g} "
            f"(dt={dt:.3g}, {report.iterations_used} iterations, {depth} halvings)"
        )

    logger.warning("fixed point failed at t=%.6g with dt=%.3g; halving", state.t, dt)
    halvings = 1
    try:
        first = _advance(state, 0.5 * dt, depth + 1, fields, damping, stepper, units)
        halvings += first.halvings
        second = _advance(first.state, 0.5 * dt, depth + 1, fields, damping, stepper, units)
    except StepConvergenceError as e:
        e.halvings += halvings
        raise
    return _Advance(
        state=second.state,
        radiated=first.radiated + second.radiated,
        work=first.work + second.work,
        iterations=max(first.iterations, second.iterations),
        norm_drift=first.norm_drift + second.norm_drift,
        halvings=halvings + second.halvings,
        residuals=first.residuals.maximum(second.residuals),
    )


def evolve(
    initial: WaveState,
    t0: float,
    t_final: float,
    fields: FieldConfig,
    damping: DampingConfig,
    stepper: StepperConfig,
    observer_stride: int,
    basis: EigenBasis,
    units: UnitsConfig = NATURAL_UNITS,
    keep_states: bool = False,
) -> Evolution:
    """
    Repeated step() from t0 to t_final with observables sampled every
    observer_stride steps (step 0 included). A step that fails after all dt
    halvings ends the run; the partial record series is returned flagged.
    Identity residuals are evaluated on every step; each sample carries the
    largest since the previous sample.
    """
    if not t_final > t0:
        raise ValueError(f"t_final must exceed t0, got [{t0}, {t_final}]")
    if observer_stride < 1:
        raise ValueError("observer_stride must be >= 1")

    dt = stepper.dt
    total_steps = int(round((t_final - t0) / dt))
    if total_steps < 1:
        raise ValueError(f"time span {t_final - t0} shorter than one step of {dt}")

    state = WaveState(psi=initial.psi, t=t0)
    records: List[ObservableRecord] = []
    states: Optional[List[ComplexField]] = [] if keep_states else None

    def sample(current: WaveState, radiated: float, work: float, since_last: IdentityResiduals) -> None:
        record = observe(current.psi, current.t, fields, damping, basis, units, radiated=radiated, work=work)
        records.append(record.with_residuals(since_last))
        if states is not None:
            states.append(current.psi)

    result = Evolution(records=records, final_state=state, total_steps=total_steps)
    sample(state, 0.0, 0.0, IdentityResiduals.empty())
    interval = IdentityResiduals.empty()

    for k in range(1, total_steps + 1):
        try:
            adv = _advance(state, dt, 0, fields, damping, stepper, units)
        except StepConvergenceError as e:
            logger.error("evolution aborted after %d steps: %s", k - 1, e)
            result.aborted = True
            result.failure = str(e)
            result.halvings += e.halvings
            break

        state = WaveState(psi=adv.state.psi, t=t0 + k * dt)
        result.steps_taken = k
        result.radiated += adv.radiated
        result.work += adv.work
        result.max_iterations = max(result.max_iterations, adv.iterations)
        result.max_norm_drift = max(result.max_norm_drift, adv.norm_drift)
        result.halvings += adv.halvings
        result.residual_max = result.residual_max.maximum(adv.residuals)
        interval = interval.maximum(adv.residuals)

        if k % observer_stride == 0:
            sample(state, result.radiated, result.work, interval)
            interval = IdentityResiduals.empty()

    result.final_state = state
    result.states = states
    logger.info(
        "evolved %d/%d steps to t=%.6g (max iterations %d, max norm drift %.2e)",
        result.steps_taken, total_steps, state.t, result.max_iterations, result.max_norm_drift,
    )
    return result
