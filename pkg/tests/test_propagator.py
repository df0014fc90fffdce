from dataclasses import replace

import numpy as np
from numpy.testing import assert_allclose
import pytest

from app.wave_core import propagator
from app.wave_core.fields import NATURAL_UNITS, FieldConfig, potential_at
from app.wave_core.grid import ComplexField, build_grid
from app.wave_core.observables import average_energy
from app.wave_core.operator import DampingConfig, assemble_hamiltonian, project_coefficients, solve_eigenbasis
from app.wave_core.propagator import StepperConfig, WaveState, evolve, step


def _box(n):
    grid = build_grid(0.0, 1.0, n)
    H = assemble_hamiltonian(grid, potential_at(FieldConfig(), grid, 0.0))
    return grid, H, solve_eigenbasis(H, k_max=4)


def _mixed(basis):
    values = np.sqrt(0.5) * basis.states[0] + np.sqrt(0.5) * np.exp(0.3j) * basis.states[1]
    return ComplexField(values=values, grid=basis.grid)


class TestStepperConfig:
    @pytest.mark.parametrize("kwargs", [
        {"dt": 0.0},
        {"dt": float("nan")},
        {"fixed_point_tol": -1.0},
        {"max_fixed_point_iters": 0},
        {"max_fixed_point_iters": 1},
        {"max_halvings": -1},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            StepperConfig(**kwargs)


class TestLinearStep:
    def setup_method(self):
        self.grid, self.H, self.basis = _box(63)
        self.fields = FieldConfig()
        self.stepper = StepperConfig(dt=1e-3)

    def test_eigenstate_only_rotates_phase(self):
        state = WaveState(psi=self.basis.state(0), t=0.0)
        for _ in range(100):
            state, report = step(state, self.fields, DampingConfig(), self.stepper)
            assert report.converged and report.iterations_used == 1
        E = self.basis.energies[0]
        factor = (1.0 - 0.5j * 1e-3 * E) / (1.0 + 0.5j * 1e-3 * E)
        assert_allclose(state.psi.values, factor ** 100 * self.basis.states[0], atol=1e-10)
        assert state.t == pytest.approx(0.1)

    def test_damping_is_inert_on_an_eigenstate(self):
        linear = WaveState(psi=self.basis.state(1), t=0.0)
        damped = WaveState(psi=self.basis.state(1), t=0.0)
        for _ in range(50):
            linear, _ = step(linear, self.fields, DampingConfig(), self.stepper)
            damped, report = step(damped, self.fields, DampingConfig(beta=0.05), self.stepper)
            assert report.converged
        assert_allclose(damped.psi.values, linear.psi.values, atol=1e-12)

    def test_norm_drift_without_renormalization(self):
        grid, _, basis = _box(127)
        state = WaveState(psi=_mixed(basis), t=0.0)
        drift = 0.0
        for _ in range(200):
            state, report = step(state, self.fields, DampingConfig(), self.stepper)
            drift = max(drift, report.norm_drift)
        assert drift < 1e-13
        assert state.norm == pytest.approx(1.0, abs=1e-12)

    def test_populations_and_energy_are_constant(self):
        state = WaveState(psi=_mixed(self.basis), t=0.0)
        E0 = average_energy(state.psi, self.H)
        for _ in range(200):
            state, _ = step(state, self.fields, DampingConfig(), self.stepper)
        assert average_energy(state.psi, self.H) == pytest.approx(E0, abs=1e-10)
        populations = project_coefficients(state.psi, self.basis).populations
        assert_allclose(populations[:2], [0.5, 0.5], atol=1e-10)

    def test_explicit_dt_overrides_stepper(self):
        state = WaveState(psi=self.basis.state(0), t=1.0)
        new, report = step(state, self.fields, DampingConfig(), self.stepper, dt=2.5e-4)
        assert new.t == pytest.approx(1.00025)
        assert report.dt == 2.5e-4


class TestDampedStep:
    def setup_method(self):
        self.grid, self.H, self.basis = _box(63)
        self.fields = FieldConfig()
        self.damping = DampingConfig(beta=0.01)
        self.stepper = StepperConfig(dt=1e-3)

    def test_energy_never_increases(self):
        state = WaveState(psi=_mixed(self.basis), t=0.0)
        energies = [average_energy(state.psi, self.H)]
        radiated = 0.0
        for _ in range(300):
            state, report = step(state, self.fields, self.damping, self.stepper)
            assert report.converged
            assert report.radiated >= 0.0
            radiated += report.radiated
            energies.append(average_energy(state.psi, self.H))
        assert np.all(np.diff(energies) <= 1e-10)
        assert energies[0] - energies[-1] > 0.0
        assert energies[-1] - energies[0] + radiated == pytest.approx(0.0, abs=1e-8)

    def test_norm_is_conserved(self):
        state = WaveState(psi=_mixed(self.basis), t=0.0)
        for _ in range(100):
            state, report = step(state, self.fields, self.damping, self.stepper)
            assert report.norm_drift < 1e-12
        assert state.norm == pytest.approx(1.0, abs=1e-11)


class TestEvolve:
    def setup_method(self):
        self.grid, self.H, self.basis = _box(63)
        self.fields = FieldConfig()

    def test_sampling_schedule(self):
        initial = WaveState(psi=_mixed(self.basis), t=0.0)
        result = evolve(initial, 0.0, 0.1, self.fields, DampingConfig(beta=0.01), StepperConfig(dt=1e-3),
                        10, self.basis, keep_states=True)
        assert result.total_steps == 100
        assert result.steps_taken == 100
        assert not result.aborted
        assert len(result.records) == 11
        assert len(result.states) == 11
        assert_allclose([r.t for r in result.records], np.linspace(0.0, 0.1, 11), atol=1e-12)
        assert result.final_state.t == pytest.approx(0.1)
        assert result.records[-1].radiated == pytest.approx(result.radiated)
        assert np.isnan(result.records[0].res_ledger)
        assert not np.isnan(result.records[-1].res_ledger)
        assert not np.isnan(result.records[5].res_ledger)
        for value in result.residual_max.to_json().values():
            assert value < 1e-7

    def test_uneven_stride_keeps_full_accounting(self):
        initial = WaveState(psi=_mixed(self.basis), t=0.0)
        result = evolve(initial, 0.0, 0.025, self.fields, DampingConfig(beta=0.01), StepperConfig(dt=1e-3),
                        10, self.basis)
        assert result.total_steps == 25
        assert len(result.records) == 3
        assert result.radiated > result.records[-1].radiated

    def test_rejects_empty_span(self):
        initial = WaveState(psi=self.basis.state(0), t=0.0)
        with pytest.raises(ValueError):
            evolve(initial, 1.0, 1.0, self.fields, DampingConfig(), StepperConfig(), 10, self.basis)

    def test_failed_fixed_point_aborts_after_halvings(self):
        initial = WaveState(psi=_mixed(self.basis), t=0.0)
        stepper = StepperConfig(dt=1e-3, fixed_point_tol=1e-300, max_fixed_point_iters=2, max_halvings=2)
        result = evolve(initial, 0.0, 0.01, self.fields, DampingConfig(beta=0.01), stepper, 1, self.basis)
        assert result.aborted
        assert result.steps_taken == 0
        assert len(result.records) == 1
        assert "did not converge" in result.failure
        assert result.halvings == 2

    def test_failed_step_is_retried_as_half_steps(self, monkeypatch):
        real_step = propagator.step

        def coarse_steps_fail(state, fields, damping, stepper, units=NATURAL_UNITS, dt=None):
            new_state, report = real_step(state, fields, damping, stepper, units, dt=dt)
            if report.dt > 6e-4:
                report = replace(report, converged=False)
            return new_state, report

        initial = WaveState(psi=_mixed(self.basis), t=0.0)
        damping = DampingConfig(beta=0.01)
        monkeypatch.setattr(propagator, "step", coarse_steps_fail)
        halved = evolve(initial, 0.0, 0.02, self.fields, damping, StepperConfig(dt=1e-3), 10, self.basis)
        monkeypatch.undo()
        direct = evolve(initial, 0.0, 0.02, self.fields, damping, StepperConfig(dt=5e-4), 20, self.basis)

        assert not halved.aborted
        assert halved.steps_taken == 20
        assert halved.halvings == 20
        assert direct.halvings == 0
        assert_allclose(halved.final_state.psi.values, direct.final_state.psi.values, atol=1e-12)
        assert halved.radiated == pytest.approx(direct.radiated, rel=1e-10)
        assert halved.residual_max.continuity < 1e-8

    def test_driven_ledger_closes(self):
        grid = build_grid(-8.0, 8.0, 127)
        fields = FieldConfig(static_kind="harmonic", perturbation="dipole_pulse", epsilon=0.2, t_center=0.5, tau=0.3)
        H0 = assemble_hamiltonian(grid, potential_at(fields.static_only(), grid, 0.0))
        basis = solve_eigenbasis(H0, k_max=4)
        result = evolve(WaveState(psi=basis.state(0), t=0.0), 0.0, 1.0, fields, DampingConfig(),
                        StepperConfig(dt=1e-3), 10, basis)
        first, last = result.records[0], result.records[-1]
        assert abs(result.work) > 1e-4
        assert last.energy - first.energy - last.external_work == pytest.approx(0.0, abs=1e-10)


class TestConvergenceOrder:
    def setup_method(self):
        self.grid, _, self.basis = _box(63)
        self.fields = FieldConfig()

    def _final(self, damping, dt):
        initial = WaveState(psi=_mixed(self.basis), t=0.0)
        result = evolve(initial, 0.0, 0.4, self.fields, damping, StepperConfig(dt=dt), 10 ** 6, self.basis)
        assert not result.aborted
        return result.final_state.psi.values

    @pytest.mark.parametrize("beta", [0.0, 0.05])
    def test_halving_dt_quarters_the_error(self, beta):
        damping = DampingConfig(beta=beta)
        reference = self._final(damping, 0.00125)
        errors = [
            np.sqrt(self.grid.dx * np.sum(np.abs(self._final(damping, dt) - reference) ** 2))
            for dt in (0.02, 0.01)
        ]
        assert errors[1] > 1e-6
        assert 3.5 < errors[0] / errors[1] < 4.5
