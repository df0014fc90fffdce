from typing import Any, Dict, List, Literal, Optional, Tuple
import math

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .wave_core.constants import (
    DEFAULTS,
    INITIAL_PARAMS,
    PERTURBATION_PARAMS,
    POTENTIAL_PARAMS,
)

# -----------------------------
# Scenario config (JSON file / request body)
# -----------------------------


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _check_param_keys(kind: str, params: Dict[str, Any], allowed: Dict[str, set], what: str) -> None:
    unknown = set(params) - allowed[kind]
    if unknown:
        raise ValueError(f"Unknown {what} params for kind '{kind}': {sorted(unknown)}")


def _require(params: Dict[str, Any], key: str, kind: str) -> Any:
    if key not in params:
        raise ValueError(f"'{kind}' requires param '{key}'")
    return params[key]


def _finite(value: Any, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ValueError(f"param '{key}' must be a finite number, got {value!r}")
    return float(value)


class GridSpec(StrictModel):
    x_min: float
    x_max: float
    n_interior: int = Field(..., ge=DEFAULTS.MIN_INTERIOR_POINTS)

    @model_validator(mode="after")
    def validate_bounds(self):
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)):
            raise ValueError("grid bounds must be finite")
        if self.x_max <= self.x_min:
            raise ValueError(f"grid.x_max ({self.x_max}) must exceed grid.x_min ({self.x_min})")
        return self


class PotentialSpec(StrictModel):
    kind: Literal["square_well", "harmonic", "tabulated"]
    params: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def validate_params(self):
        _check_param_keys(self.kind, self.params, POTENTIAL_PARAMS, "potential")
        if self.kind == "harmonic":
            omega = _finite(self.params.get("omega", 1.0), "omega")
            if omega <= 0.0:
                raise ValueError("harmonic omega must be > 0")
        if self.kind == "tabulated":
            values = _require(self.params, "values", self.kind)
            if not isinstance(values, list):
                raise ValueError("tabulated 'values' must be a list of numbers")
            for v in values:
                _finite(v, "values")
        return self


class PerturbationSpec(StrictModel):
    kind: Literal["none", "dipole_pulse", "dipole_periodic"] = "none"
    params: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def validate_params(self):
        _check_param_keys(self.kind, self.params, PERTURBATION_PARAMS, "perturbation")
        for key in PERTURBATION_PARAMS[self.kind]:
            _finite(_require(self.params, key, self.kind), key)
        if self.kind == "dipole_pulse" and self.params["tau"] <= 0.0:
            raise ValueError("dipole_pulse tau must be > 0")
        if self.kind == "dipole_periodic" and self.params["t_ramp"] <= 0.0:
            raise ValueError("dipole_periodic t_ramp must be > 0")
        return self


class StepperSpec(StrictModel):
    dt: float = Field(DEFAULTS.DT, gt=0)
    tol: float = Field(DEFAULTS.FIXED_POINT_TOL, gt=0)
    max_iters: int = Field(DEFAULTS.MAX_FIXED_POINT_ITERS, ge=2)


class InitialSpec(StrictModel):
    kind: Literal["eigenstate", "superposition", "gaussian"]
    params: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def validate_params(self):
        _check_param_keys(self.kind, self.params, INITIAL_PARAMS, "initial")
        if self.kind == "eigenstate":
            n = _require(self.params, "n", self.kind)
            if isinstance(n, bool) or not isinstance(n, int) or n < 0:
                raise ValueError(f"eigenstate 'n' must be a non-negative integer, got {n!r}")
        elif self.kind == "superposition":
            terms = self.terms()
            total = sum(abs(c) ** 2 for _, c in terms)
            if abs(total - 1.0) > DEFAULTS.NORMALIZATION_TOL:
                raise ValueError(
                    f"superposition is not normalized: sum |C_n|^2 = {total:.15g} (deficit {1.0 - total:.3e})"
                )
        else:
            _finite(_require(self.params, "center", self.kind), "center")
            width = _finite(_require(self.params, "width", self.kind), "width")
            if width <= 0.0:
                raise ValueError("gaussian width must be > 0")
            _finite(self.params.get("momentum", 0.0), "momentum")
        return self

    def terms(self) -> List[Tuple[int, complex]]:
        """Superposition terms as (n, C_n); each entry is [n, re] or [n, re, im]."""
        raw = _require(self.params, "terms", self.kind)
        if not isinstance(raw, list) or not raw:
            raise ValueError("superposition 'terms' must be a non-empty list of [n, re, im]")
        out: List[Tuple[int, complex]] = []
        seen = set()
        for entry in raw:
            if not isinstance(entry, list) or len(entry) not in (2, 3):
                raise ValueError(f"superposition term must be [n, re] or [n, re, im], got {entry!r}")
            n = entry[0]
            if isinstance(n, bool) or not isinstance(n, int) or n < 0:
                raise ValueError(f"superposition level must be a non-negative integer, got {n!r}")
            if n in seen:
                raise ValueError(f"superposition level {n} listed twice")
            seen.add(n)
            re = _finite(entry[1], "re")
            im = _finite(entry[2], "im") if len(entry) == 3 else 0.0
            out.append((n, complex(re, im)))
        return out

    def max_level(self) -> Optional[int]:
        if self.kind == "eigenstate":
            return int(self.params["n"])
        if self.kind == "superposition":
            return max(n for n, _ in self.terms())
        return None


class TimeSpec(StrictModel):
    t0: float = DEFAULTS.T0
    t_final: float = DEFAULTS.T_FINAL

    @model_validator(mode="after")
    def validate_span(self):
        if not self.t_final > self.t0:
            raise ValueError(f"time.t_final ({self.t_final}) must exceed time.t0 ({self.t0})")
        return self


class BasisSpec(StrictModel):
    k_max: int = Field(DEFAULTS.K_MAX, ge=1)


class ConvergenceSpec(StrictModel):
    population: float = Field(DEFAULTS.POPULATION_THRESHOLD, gt=0, le=1)
    power: float = Field(DEFAULTS.POWER_THRESHOLD, gt=0)
    hold: float = Field(DEFAULTS.HOLD_TIME, ge=0)


class OutputSpec(StrictModel):
    path: str = DEFAULTS.OUTPUT_PATH
    stride: int = Field(DEFAULTS.OBSERVER_STRIDE, ge=1)


class ScenarioConfig(StrictModel):
    grid: GridSpec
    potential: PotentialSpec
    perturbation: PerturbationSpec = Field(default_factory=PerturbationSpec)
    beta: float = DEFAULTS.BETA
    damping: Literal["radiation", "kerr"] = DEFAULTS.DAMPING_KIND
    stepper: StepperSpec = Field(default_factory=StepperSpec)
    initial: InitialSpec
    time: TimeSpec = Field(default_factory=TimeSpec)
    basis: BasisSpec = Field(default_factory=BasisSpec)
    convergence: ConvergenceSpec = Field(default_factory=ConvergenceSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)

    @model_validator(mode="after")
    def validate_consistency(self):
        if not math.isfinite(self.beta):
            raise ValueError("beta must be finite")
        if self.basis.k_max > self.grid.n_interior:
            raise ValueError(f"basis.k_max ({self.basis.k_max}) exceeds grid.n_interior ({self.grid.n_interior})")
        level = self.initial.max_level()
        if level is not None and level >= self.basis.k_max:
            raise ValueError(f"initial level {level} outside basis of size {self.basis.k_max}")
        if self.potential.kind == "tabulated" and len(self.potential.params["values"]) != self.grid.n_interior:
            raise ValueError(
                f"tabulated potential has {len(self.potential.params['values'])} values, "
                f"grid has {self.grid.n_interior} interior points"
            )
        return self


# -----------------------------
# Request / response models (HTTP service)
# -----------------------------

class CalibrationRequest(StrictModel):
    config: ScenarioConfig
    betas: List[float] = Field(..., min_length=1)


class ResidualsModel(BaseModel):
    continuity: Optional[float] = None
    ehrenfest: Optional[float] = None
    energy_ledger: Optional[float] = None
    condition24: Optional[float] = None
    power_formula_gap: Optional[float] = None


class CheckResponse(BaseModel):
    residuals: ResidualsModel
    tolerance: float
    passed: bool
    max_norm_drift: float
    aborted: bool
