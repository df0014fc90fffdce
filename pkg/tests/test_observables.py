import math

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
import pytest

from app.wave_core.errors import InsufficientSamplesError
from app.wave_core.fields import FieldConfig, potential_at
from app.wave_core.grid import ComplexField, build_grid, integrate
from app.wave_core.observables import (
    IdentityResiduals,
    average_energy,
    bond_current,
    current_density,
    current_divergence,
    forces,
    gradient_force,
    identity_residuals,
    kinetic_energy,
    observe,
    power_from_density_rate,
    radiation_power,
    recoil_force_reduced,
    step_residuals,
    velocity,
)
from app.wave_core.operator import DampingConfig, assemble_hamiltonian, drho_dt, solve_eigenbasis
from app.wave_core.propagator import StepperConfig, WaveState, evolve, step


def _packet(grid, center=0.7, width=1.0, momentum=0.0):
    x = grid.x
    values = np.exp(-((x - center) ** 2) / (2.0 * width ** 2)) * np.exp(1j * momentum * x)
    values /= np.sqrt(grid.dx * np.sum(np.abs(values) ** 2))
    return ComplexField(values=values, grid=grid)


class TestCurrent:
    def setup_method(self):
        self.grid = build_grid(-10.0, 10.0, 255)

    def test_real_state_carries_no_current(self):
        psi = ComplexField(values=np.exp(-self.grid.x ** 2), grid=self.grid)
        assert_array_equal(current_density(psi).values, np.zeros(255))
        assert velocity(psi) == 0.0

    def test_integrated_current_is_mean_velocity(self):
        psi = _packet(self.grid, momentum=2.0)
        assert integrate(current_density(psi)) == pytest.approx(velocity(psi), rel=1e-12)
        assert velocity(psi) == pytest.approx(2.0, rel=1e-2)

    def test_node_current_is_bond_average(self):
        psi = _packet(self.grid, momentum=1.3)
        bonds = bond_current(psi.values, self.grid.dx)
        assert bonds[0] == 0.0 and bonds[-1] == 0.0
        assert_allclose(current_density(psi).values, 0.5 * (bonds[:-1] + bonds[1:]), atol=1e-12)

    def test_bond_divergence_matches_density_rate(self):
        grid = build_grid(0.0, 1.0, 63)
        H = assemble_hamiltonian(grid, potential_at(FieldConfig(), grid, 0.0))
        basis = solve_eigenbasis(H, k_max=2)
        psi = ComplexField(values=np.sqrt(0.5) * (basis.states[0] + 1j * basis.states[1]), grid=grid)
        rate = drho_dt(psi, H).values
        assert np.max(np.abs(rate)) > 1.0
        assert_allclose(current_divergence(psi).values, -rate, atol=1e-8)


class TestEnergy:
    def setup_method(self):
        self.grid = build_grid(0.0, 1.0, 127)
        self.H = assemble_hamiltonian(self.grid, potential_at(FieldConfig(), self.grid, 0.0))
        self.basis = solve_eigenbasis(self.H, k_max=3)

    def test_eigenstate_energy(self):
        for n in range(3):
            assert average_energy(self.basis.state(n), self.H) == pytest.approx(self.basis.energies[n], rel=1e-10)

    def test_superposition_energy(self):
        psi = ComplexField(values=np.sqrt(0.25) * self.basis.states[0] + np.sqrt(0.75) * self.basis.states[2],
                           grid=self.grid)
        expected = 0.25 * self.basis.energies[0] + 0.75 * self.basis.energies[2]
        assert average_energy(psi, self.H) == pytest.approx(expected, rel=1e-10)

    def test_kinetic_plus_potential(self):
        grid = build_grid(-6.0, 6.0, 127)
        fields = FieldConfig(static_kind="harmonic")
        V = potential_at(fields, grid, 0.0)
        H = assemble_hamiltonian(grid, V)
        psi = _packet(grid, momentum=0.5)
        potential = grid.dx * np.sum(V.values * np.abs(psi.values) ** 2)
        assert kinetic_energy(psi) + potential == pytest.approx(average_energy(psi, H), rel=1e-12)


class TestRadiationPower:
    def setup_method(self):
        self.grid = build_grid(-8.0, 8.0, 255)
        self.fields = FieldConfig(static_kind="harmonic")
        self.H = assemble_hamiltonian(self.grid, potential_at(self.fields, self.grid, 0.0))
        self.basis = solve_eigenbasis(self.H, k_max=3)
        values = np.sqrt(0.6) * self.basis.states[0] + np.sqrt(0.4) * np.exp(1.1j) * self.basis.states[1]
        self.mixed = ComplexField(values=values, grid=self.grid)

    def test_power_identity(self):
        damping = DampingConfig(beta=0.05)
        P = radiation_power(self.mixed, self.H, damping)
        rate = drho_dt(self.mixed, self.H).values
        expected = 0.05 * self.grid.dx * np.sum(rate ** 2)
        assert P > 0.0
        assert abs(P - expected) <= 1e-8 * max(1.0, abs(P))
        assert abs(P - power_from_density_rate(self.mixed, self.H, damping)) <= 1e-8 * max(1.0, abs(P))

    def test_no_power_from_eigenstate(self):
        assert abs(radiation_power(self.basis.state(1), self.H, DampingConfig(beta=0.05))) < 1e-8

    def test_no_power_without_damping(self):
        assert radiation_power(self.mixed, self.H, DampingConfig()) == 0.0

    def test_kerr_power_is_a_total_derivative(self):
        damping = DampingConfig(beta=0.05, kind="kerr")
        P = radiation_power(self.mixed, self.H, damping)
        rate = drho_dt(self.mixed, self.H).values
        rho = np.abs(self.mixed.values) ** 2
        assert abs(P - 0.05 * self.grid.dx * np.sum(rho * rate)) <= 1e-8 * max(1.0, abs(P))


class TestForces:
    def setup_method(self):
        self.grid = build_grid(-10.0, 10.0, 511)
        self.fields = FieldConfig(static_kind="harmonic")
        self.H = assemble_hamiltonian(self.grid, potential_at(self.fields, self.grid, 0.0))

    def test_lorentz_force_away_from_walls(self):
        psi = _packet(self.grid, center=0.7)
        lorentz, recoil = forces(psi, self.H, DampingConfig())
        assert recoil == 0.0
        assert gradient_force(psi, self.fields, 0.0) == pytest.approx(-0.7, rel=1e-6)
        assert lorentz == pytest.approx(-0.7, rel=1e-2)

    def test_walls_push_in_a_square_well(self):
        grid = build_grid(0.0, 1.0, 63)
        fields = FieldConfig()
        H = assemble_hamiltonian(grid, potential_at(fields, grid, 0.0))
        basis = solve_eigenbasis(H, k_max=2)
        psi = ComplexField(values=np.sqrt(0.5) * (basis.states[0] + basis.states[1]), grid=grid)
        lorentz, _ = forces(psi, H, DampingConfig())
        assert gradient_force(psi, fields, 0.0) == 0.0
        assert abs(lorentz) > 1.0

    def test_recoil_forms_agree(self):
        basis = solve_eigenbasis(self.H, k_max=2)
        values = np.sqrt(0.5) * basis.states[0] + np.sqrt(0.5) * np.exp(0.8j) * basis.states[1]
        psi = ComplexField(values=values, grid=self.grid)
        damping = DampingConfig(beta=0.01)
        _, recoil = forces(psi, self.H, damping)
        reduced = recoil_force_reduced(psi, self.H, damping)
        assert abs(reduced) > 1e-4
        assert recoil == pytest.approx(reduced, abs=1e-4)

    def test_kerr_recoil_vanishes(self):
        psi = _packet(self.grid, center=0.7, momentum=0.4)
        damping = DampingConfig(beta=0.01, kind="kerr")
        _, recoil = forces(psi, self.H, damping)
        assert abs(recoil_force_reduced(psi, self.H, damping)) < 1e-12
        assert abs(recoil) < 1e-4


class TestObserve:
    def test_record_fields(self):
        grid = build_grid(0.0, 1.0, 63)
        fields = FieldConfig()
        H = assemble_hamiltonian(grid, potential_at(fields, grid, 0.0))
        basis = solve_eigenbasis(H, k_max=4)
        record = observe(basis.state(1), 0.5, fields, DampingConfig(beta=0.01), basis, radiated=0.25, work=0.0)
        assert record.t == 0.5
        assert record.norm == pytest.approx(1.0, abs=1e-12)
        assert record.energy == pytest.approx(basis.energies[1], rel=1e-10)
        assert record.dominant == 1
        assert len(record.populations) == 4
        assert record.radiated == 0.25
        assert math.isnan(record.res_continuity)
        assert record.to_json()["res_continuity"] is None


class TestIdentityResiduals:
    def setup_method(self):
        self.grid = build_grid(0.0, 10.0, 127)
        self.fields = FieldConfig()
        H = assemble_hamiltonian(self.grid, potential_at(self.fields, self.grid, 0.0))
        self.basis = solve_eigenbasis(H, k_max=4)

    def _run(self, psi, damping, t_final=0.5, stride=10):
        return evolve(WaveState(psi=psi, t=0.0), 0.0, t_final, self.fields, damping,
                      StepperConfig(dt=1e-3), stride, self.basis, keep_states=True)

    def test_stationary_state(self):
        result = self._run(self.basis.state(1), DampingConfig())
        residuals = identity_residuals(result.records, result.states)
        for value in residuals.to_json().values():
            assert value is not None and value < 1e-8

    def test_damped_superposition(self):
        values = np.sqrt(0.5) * (self.basis.states[0] + self.basis.states[1])
        result = self._run(ComplexField(values=values, grid=self.grid), DampingConfig(beta=0.01))
        residuals = identity_residuals(result.records, result.states)
        assert residuals.continuity < 1e-4
        assert residuals.ehrenfest < 1e-4
        assert residuals.energy_ledger < 1e-4
        assert residuals.condition24 < 1e-4
        assert residuals.power_formula_gap < 1e-8
        for value in result.residual_max.to_json().values():
            assert value < 1e-7

    def test_needs_three_samples(self):
        result = self._run(self.basis.state(0), DampingConfig(), t_final=0.01)
        assert len(result.records) == 2
        with pytest.raises(InsufficientSamplesError):
            identity_residuals(result.records, result.states)

    def test_maximum_skips_nan(self):
        a = IdentityResiduals(1.0, float("nan"), 3.0, 0.0, 0.0)
        b = IdentityResiduals.empty()
        merged = a.maximum(b)
        assert merged.continuity == 1.0
        assert math.isnan(merged.ehrenfest)
        assert merged.to_json()["ehrenfest"] is None


class TestStepResiduals:
    def setup_method(self):
        self.grid = build_grid(0.0, 1.0, 127)
        self.fields = FieldConfig()
        H = assemble_hamiltonian(self.grid, potential_at(self.fields, self.grid, 0.0))
        self.basis = solve_eigenbasis(H, k_max=4)
        values = np.sqrt(0.5) * self.basis.states[0] + np.sqrt(0.5) * np.exp(0.4j) * self.basis.states[1]
        self.psi = ComplexField(values=values, grid=self.grid)

    def _residuals(self, fields, damping, psi, t=0.0, dt=1e-3):
        state, _ = step(WaveState(psi=psi, t=t), fields, damping, StepperConfig(dt=dt, fixed_point_tol=1e-12))
        return step_residuals(psi, state.psi, t, dt, fields, damping)

    def test_linear_step_closes_to_roundoff(self):
        residuals = self._residuals(self.fields, DampingConfig(), self.psi)
        for value in residuals.to_json().values():
            assert value < 1e-8

    def test_damped_step_closes(self):
        for kind in ("radiation", "kerr"):
            residuals = self._residuals(self.fields, DampingConfig(beta=0.05, kind=kind), self.psi)
            for value in residuals.to_json().values():
                assert value < 1e-6

    def test_driven_step(self):
        grid = build_grid(-8.0, 8.0, 127)
        fields = FieldConfig(static_kind="harmonic", perturbation="dipole_pulse", epsilon=0.2, t_center=0.5, tau=0.3)
        basis = solve_eigenbasis(assemble_hamiltonian(grid, potential_at(fields.static_only(), grid, 0.0)), k_max=4)
        residuals = self._residuals(fields, DampingConfig(beta=0.05), basis.state(1), t=0.4)
        assert residuals.continuity < 1e-8
        assert residuals.ehrenfest < 1e-6
        assert residuals.energy_ledger < 1e-5
        assert residuals.condition24 < 1e-6

    def test_far_below_sampled_residuals(self):
        result = evolve(WaveState(psi=self.psi, t=0.0), 0.0, 0.2, self.fields, DampingConfig(beta=0.05),
                        StepperConfig(dt=1e-3), 10, self.basis, keep_states=True)
        sampled = identity_residuals(result.records, result.states)
        assert sampled.continuity > 1e-4
        assert result.residual_max.continuity < 1e-8
        assert result.residual_max.ehrenfest < 1e-6
        assert not math.isnan(result.records[1].res_ehrenfest)
