"""
Scenario runner.

Three scenario families share one pipeline:
- static well            : a superposition relaxes to one eigenstate, radiating <E(t0)> - E_k
- decaying dipole pulse  : an eigenstate is kicked and decays (spontaneous-transition analogue)
- periodic dipole drive  : populations alternate between the driven levels (resonant transition)

Success is dual: the detected final eigenstate AND the energy balance
radiated = <E(t0)> - E_k + work must agree, otherwise the run is marked
inconsistent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence
import logging
import math
import time

import numpy as np
from pydantic import ValidationError

from ..schemas import ConvergenceSpec, InitialSpec, ScenarioConfig
from .constants import DEFAULTS
from .errors import BasisTruncationError, ConfigError
from .fields import NATURAL_UNITS, FieldConfig, UnitsConfig, potential_at
from .grid import ComplexField, Grid1D, build_grid
from .observables import IdentityResiduals, ObservableRecord
from .operator import DampingConfig, EigenBasis, assemble_hamiltonian, project_coefficients, solve_eigenbasis
from .propagator import Evolution, StepperConfig, WaveState, evolve

logger = logging.getLogger(__name__)


# =============================================================================
# Data models
# =============================================================================

@dataclass(frozen=True, eq=False)
class Scenario:
    config: ScenarioConfig
    grid: Grid1D
    fields: FieldConfig
    damping: DampingConfig
    stepper: StepperConfig
    basis: EigenBasis
    initial: ComplexField
    units: UnitsConfig = NATURAL_UNITS


@dataclass(frozen=True)
class AlternationReport:
    level: int
    peak: float
    min_after_peak: Optional[float]
    max_population: float
    alternated: bool

    def to_json(self) -> Dict[str, Any]:
        return {
            "level": self.level,
            "peak": self.peak,
            "min_after_peak": self.min_after_peak,
            "max_population": self.max_population,
            "alternated": self.alternated,
        }


@dataclass(eq=False)
class RunResult:
    config: ScenarioConfig
    records: List[ObservableRecord]
    final_state: WaveState
    energies: np.ndarray
    initial_energy: float
    final_eigenstate: Optional[int]
    radiated_total: float
    work_total: float
    balance_residual: Optional[float]
    ledger_residual: float
    converged: bool
    consistent: bool
    wall_time: float
    residual_max: IdentityResiduals
    total_steps: int
    steps_taken: int
    aborted: bool = False
    failure: Optional[str] = None
    max_iterations: int = 0
    max_norm_drift: float = 0.0
    halvings: int = 0
    recoil_form_gap: float = 0.0
    packet_power_gap: float = 0.0
    min_power: float = 0.0
    alternation: Optional[AlternationReport] = None
    states: Optional[List[ComplexField]] = None

    @property
    def gap(self) -> float:
        return float(self.energies[1] - self.energies[0]) if self.energies.size > 1 else 1.0


@dataclass(frozen=True)
class CalibrationRow:
    beta: float
    min_power: float
    pumps_energy: bool
    concentration_time: Optional[float]
    final_eigenstate: Optional[int]
    converged: bool
    ledger_residual: float
    aborted: bool

    def to_json(self) -> Dict[str, Any]:
        return {
            "beta": self.beta,
            "min_power": self.min_power,
            "pumps_energy": self.pumps_energy,
            "concentration_time": self.concentration_time,
            "final_eigenstate": self.final_eigenstate,
            "converged": self.converged,
            "ledger_residual": self.ledger_residual,
            "aborted": self.aborted,
        }


@dataclass(frozen=True)
class CalibrationReport:
    rows: List[CalibrationRow]
    recommended_beta: Optional[float]

    def to_json(self) -> Dict[str, Any]:
        return {
            "rows": [r.to_json() for r in self.rows],
            "recommended_beta": self.recommended_beta,
        }


# =============================================================================
# Construction
# =============================================================================

def field_config_from(cfg: ScenarioConfig) -> FieldConfig:
    pot = cfg.potential
    pert = cfg.perturbation
    kwargs: Dict[str, Any] = {"static_kind": pot.kind, "perturbation": pert.kind}
    if pot.kind == "harmonic":
        kwargs["omega0"] = float(pot.params.get("omega", 1.0))
    if pot.kind == "tabulated":
        kwargs["table"] = tuple(pot.params["values"])
    if pert.kind == "dipole_pulse":
        kwargs.update(epsilon=pert.params["epsilon"], t_center=pert.params["t_center"], tau=pert.params["tau"])
    if pert.kind == "dipole_periodic":
        kwargs.update(epsilon=pert.params["epsilon"], omega_drive=pert.params["omega"], t_ramp=pert.params["t_ramp"])
    return FieldConfig(**kwargs)


def build_initial_state(spec: InitialSpec, basis: EigenBasis, grid: Grid1D) -> ComplexField:
    """
    Eigenstates and superpositions are taken from the static eigenbasis; a
    gaussian packet is normalized on the grid once, at construction.
    """
    if spec.kind == "eigenstate":
        return basis.state(int(spec.params["n"]))

    if spec.kind == "superposition":
        values = np.zeros(grid.n_interior, dtype=np.complex128)
        for n, c in spec.terms():
            values += c * basis.states[n]
        return ComplexField(values=values, grid=grid)

    center = float(spec.params["center"])
    width = float(spec.params["width"])
    momentum = float(spec.params.get("momentum", 0.0))
    x = grid.x
    values = np.exp(-((x - center) ** 2) / (2.0 * width ** 2)) * np.exp(1j * momentum * x)
    norm = math.sqrt(grid.dx * float(np.sum(np.abs(values) ** 2)))
    if norm == 0.0:
        raise BasisTruncationError("gaussian packet vanishes on the grid")
    return ComplexField(values=values / norm, grid=grid)


def build_scenario(cfg: ScenarioConfig, units: UnitsConfig = NATURAL_UNITS) -> Scenario:
    grid = build_grid(cfg.grid.x_min, cfg.grid.x_max, cfg.grid.n_interior)
    fields = field_config_from(cfg)

    # the eigenbasis belongs to the time-independent part of the field
    static = fields.static_only()
    H_static = assemble_hamiltonian(grid, potential_at(static, grid, cfg.time.t0, units), units, t=cfg.time.t0)
    basis = solve_eigenbasis(H_static, cfg.basis.k_max)

    initial = build_initial_state(cfg.initial, basis, grid)
    residual = project_coefficients(initial, basis).residual
    if abs(residual) > DEFAULTS.INITIAL_TRUNCATION_TOL:
        raise BasisTruncationError(
            f"initial state truncation residual {residual:.3e} exceeds {DEFAULTS.INITIAL_TRUNCATION_TOL:g}; "
            f"increase basis.k_max (now {cfg.basis.k_max})"
        )

    return Scenario(
        config=cfg,
        grid=grid,
        fields=fields,
        damping=DampingConfig(beta=cfg.beta, kind=cfg.damping),
        stepper=StepperConfig(
            dt=cfg.stepper.dt,
            fixed_point_tol=cfg.stepper.tol,
            max_fixed_point_iters=cfg.stepper.max_iters,
        ),
        basis=basis,
        initial=initial,
        units=units,
    )


# =============================================================================
# Detection + reports
# =============================================================================

def detect_final_eigenstate(records: Sequence[ObservableRecord], convergence: ConvergenceSpec) -> Optional[int]:
    """
    k iff population_k >= threshold AND |P| < power threshold at every sample of
    the trailing hold window, and the series actually covers that window.
    """
    if not records:
        return None
    t_last = records[-1].t
    if t_last - records[0].t < convergence.hold:
        return None

    k = records[-1].dominant
    for record in reversed(records):
        if t_last - record.t > convergence.hold:
            break
        if record.populations[k] < convergence.population or abs(record.power) >= convergence.power:
            return None
    return k


def alternation_report(records: Sequence[ObservableRecord], level: int) -> AlternationReport:
    """Did the population of `level` rise above the high mark and later fall below the low mark?"""
    pops = np.array([r.populations[level] for r in records])
    high = np.nonzero(pops > DEFAULTS.ALTERNATION_HIGH)[0]
    peak = float(pops.max()) if pops.size else 0.0
    if high.size == 0:
        return AlternationReport(level=level, peak=peak, min_after_peak=None, max_population=peak, alternated=False)
    after = float(pops[high[0]:].min())
    return AlternationReport(
        level=level,
        peak=peak,
        min_after_peak=after,
        max_population=peak,
        alternated=after < DEFAULTS.ALTERNATION_LOW,
    )


def _driven_level(cfg: ScenarioConfig, basis: EigenBasis) -> Optional[int]:
    """Level the periodic drive is closest to resonance with, starting from the initial eigenstate."""
    if cfg.perturbation.kind != "dipole_periodic" or cfg.initial.kind != "eigenstate":
        return None
    j = int(cfg.initial.params["n"])
    omega = abs(float(cfg.perturbation.params["omega"]))
    detuning = [abs(abs(E - basis.energies[j]) - omega) if n != j else math.inf for n, E in enumerate(basis.energies)]
    return int(np.argmin(detuning))


# =============================================================================
# Runs
# =============================================================================

def run_scenario(cfg: ScenarioConfig, units: UnitsConfig = NATURAL_UNITS, keep_states: bool = False) -> RunResult:
    start = time.time()
    scenario = build_scenario(cfg, units)
    logger.info(
        "scenario: %s well, %s perturbation, beta=%g (%s), initial=%s, t=[%g, %g]",
        cfg.potential.kind, cfg.perturbation.kind, cfg.beta, cfg.damping,
        cfg.initial.kind, cfg.time.t0, cfg.time.t_final,
    )

    evolution = evolve(
        WaveState(psi=scenario.initial, t=cfg.time.t0),
        cfg.time.t0,
        cfg.time.t_final,
        scenario.fields,
        scenario.damping,
        scenario.stepper,
        cfg.output.stride,
        scenario.basis,
        units,
        keep_states=keep_states,
    )
    return _finish(scenario, evolution, time.time() - start)


def _finish(scenario: Scenario, evolution: Evolution, wall_time: float) -> RunResult:
    cfg = scenario.config
    records = evolution.records
    energies = scenario.basis.energies
    gap = scenario.basis.gap
    initial_energy = records[0].energy
    last = records[-1]

    # closure of <E(t)> - <E(t0)> = work - radiated at the last sample
    ledger_residual = abs(last.energy - initial_energy - last.external_work + last.radiated)

    k = detect_final_eigenstate(records, cfg.convergence)
    balance_residual = None
    consistent = True
    if k is not None:
        expected = initial_energy - float(energies[k]) + last.external_work
        balance_residual = abs(last.radiated - expected)
        consistent = balance_residual <= DEFAULTS.BALANCE_RTOL * gap
        if not consistent:
            logger.warning(
                "final eigenstate %d detected but energy balance misses by %.3e (tolerance %.3e)",
                k, balance_residual, DEFAULTS.BALANCE_RTOL * gap,
            )

    level = _driven_level(cfg, scenario.basis)
    result = RunResult(
        config=cfg,
        records=records,
        final_state=evolution.final_state,
        energies=energies,
        initial_energy=initial_energy,
        final_eigenstate=k,
        radiated_total=evolution.radiated,
        work_total=evolution.work,
        balance_residual=balance_residual,
        ledger_residual=ledger_residual,
        converged=k is not None and consistent and not evolution.aborted,
        consistent=consistent,
        wall_time=wall_time,
        residual_max=evolution.residual_max,
        total_steps=evolution.total_steps,
        steps_taken=evolution.steps_taken,
        aborted=evolution.aborted,
        failure=evolution.failure,
        max_iterations=evolution.max_iterations,
        max_norm_drift=evolution.max_norm_drift,
        halvings=evolution.halvings,
        recoil_form_gap=max(abs(r.recoil_force - r.recoil_reduced) for r in records),
        packet_power_gap=max(abs(r.power - r.packet_power) for r in records),
        min_power=min(r.power for r in records),
        alternation=None if level is None else alternation_report(records, level),
        states=evolution.states,
    )
    logger.info(
        "finished in %.2fs: final eigenstate %s, radiated %.6g, work %.6g, ledger residual %.2e",
        wall_time, k, result.radiated_total, result.work_total, ledger_residual,
    )
    return result


def _two_level_start(cfg: ScenarioConfig) -> InitialSpec:
    if cfg.initial.kind == "superposition":
        return cfg.initial
    w0, w1 = DEFAULTS.CALIBRATION_WEIGHTS
    return InitialSpec(
        kind="superposition",
        params={"terms": [[0, math.sqrt(w0), 0.0], [1, math.sqrt(w1), 0.0]]},
    )


def calibrate_beta(cfg: ScenarioConfig, betas: Sequence[float]) -> CalibrationReport:
    """
    Short superposition relaxation per candidate beta. Recommends the smallest
    positive beta whose run converges within the configured time.
    """
    if not betas:
        raise ValueError("calibrate_beta needs at least one beta candidate")
    if cfg.basis.k_max < 2:
        raise ConfigError(f"calibration starts from levels 0 and 1 and needs basis.k_max >= 2, got {cfg.basis.k_max}")

    initial = _two_level_start(cfg)
    rows: List[CalibrationRow] = []
    for beta in betas:
        data = cfg.model_dump()
        data.update(beta=float(beta), initial=initial.model_dump())
        try:
            trial = ScenarioConfig.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"calibration trial with beta={beta:g} is invalid: {e.errors()[0]['msg']}") from e
        result = run_scenario(trial)
        threshold = cfg.convergence.population
        concentration = next((r.t - cfg.time.t0 for r in result.records if max(r.populations) >= threshold), None)
        row = CalibrationRow(
            beta=float(beta),
            min_power=result.min_power,
            pumps_energy=result.min_power < -DEFAULTS.NEGATIVE_POWER_TOL,
            concentration_time=concentration,
            final_eigenstate=result.final_eigenstate,
            converged=result.converged,
            ledger_residual=result.ledger_residual,
            aborted=result.aborted,
        )
        logger.info("calibration beta=%g: %s", beta, row.to_json())
        rows.append(row)

    eligible = sorted(r.beta for r in rows if r.beta > 0.0 and r.converged)
    return CalibrationReport(rows=rows, recommended_beta=eligible[0] if eligible else None)
