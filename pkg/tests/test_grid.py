"""Lattice quantum system: unitaries, exchange relation, expectations."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from levylab.grid import (
    BandLimitWarning,
    BoundarySupportWarning,
    GridSpec,
    IncommensurateShiftWarning,
    PTable,
    QTable,
    UnnormalizedStateWarning,
    WaveFunction,
    WeylLabel,
    apply_free_evolution,
    apply_position_phase,
    apply_shift,
    apply_weyl,
    ccr_defect,
    default_grid,
    expectation,
    gaussian_state,
    is_commensurate,
    kinetic_energy,
    momentum_expectation,
    position_expectation,
    wavefunction_from_csv,
    wavefunction_to_csv,
)

shifts = st.floats(-3.0, 3.0, allow_nan=False)


class TestGridSpec:
    def test_power_of_two_required(self):
        with pytest.raises(ValueError, match="power of two"):
            GridSpec(n_points=100, x_min=-1.0, dx=0.01)

    def test_positive_spacing_required(self):
        with pytest.raises(ValueError, match="dx must be positive"):
            GridSpec(n_points=8, x_min=-1.0, dx=0.0)

    def test_momentum_spacing(self, grid):
        assert grid.dp == pytest.approx(2 * np.pi / (1024 * grid.dx), rel=1e-15)


class TestUnitaries:
    def test_position_phase_zero_is_identity(self, psi):
        out = apply_position_phase(psi, 0.0)
        assert np.array_equal(out.amplitudes, psi.amplitudes)

    def test_position_phase_group_inverse(self, moving_psi):
        out = apply_position_phase(apply_position_phase(moving_psi, 1.7), -1.7)
        assert np.abs(out.amplitudes - moving_psi.amplitudes).max() < 1e-14

    @given(shifts, shifts)
    def test_position_phases_compose_additively(self, y1, y2):
        grid = default_grid(256)
        psi = gaussian_state(grid, 0.0, 1.0)
        a = apply_position_phase(apply_position_phase(psi, y1), y2)
        b = apply_position_phase(psi, y1 + y2)
        assert np.abs(a.amplitudes - b.amplitudes).max() < 1e-12

    @given(shifts, shifts)
    def test_shifts_compose_additively(self, x1, x2):
        grid = default_grid(256)
        psi = gaussian_state(grid, 0.0, 1.0)
        a = apply_shift(apply_shift(psi, x1, check_support=False), x2, check_support=False)
        b = apply_shift(psi, x1 + x2, check_support=False)
        assert np.abs(a.amplitudes - b.amplitudes).max() < 1e-12

    def test_position_phase_boosts_momentum(self, psi):
        out = apply_position_phase(psi, 1.3)
        assert momentum_expectation(out) == pytest.approx(momentum_expectation(psi) + 1.3, abs=1e-10)
        assert position_expectation(out) == pytest.approx(position_expectation(psi), abs=1e-10)

    def test_commensurate_shift_is_circular(self, grid):
        profile = np.zeros(grid.n_points, dtype=complex)
        profile[500:530] = 1.0
        psi = WaveFunction(grid, profile).normalized()
        out = apply_shift(psi, 3 * grid.dx, check_support=False)
        assert np.abs(out.amplitudes - np.roll(psi.amplitudes, 3)).max() < 1e-12

    def test_incommensurate_shift_moves_mean(self, psi):
        out = apply_shift(psi, 1.7)
        assert position_expectation(out) == pytest.approx(position_expectation(psi) + 1.7, abs=1e-8)

    def test_shift_warns_on_boundary_mass(self, grid):
        edge = gaussian_state(grid, grid.x_min + 1.0, 1.0)
        with pytest.warns(BoundarySupportWarning):
            apply_shift(edge, 0.5)

    def test_norm_preserved_by_all_unitaries(self, moving_psi):
        for out in (
            apply_position_phase(moving_psi, 2.1),
            apply_shift(moving_psi, -1.3),
            apply_weyl(moving_psi, WeylLabel(0.7, -0.9)),
            apply_free_evolution(moving_psi, 0.8),
        ):
            assert abs(out.norm() - 1.0) < 1e-12


class TestWeyl:
    def test_identity_label(self, psi):
        out = apply_weyl(psi, WeylLabel(0.0, 0.0))
        assert np.abs(out.amplitudes - psi.amplitudes).max() < 1e-14

    def test_inverse_up_to_phase(self, psi):
        fwd = apply_weyl(psi, WeylLabel(1.0, 2.0))
        back = apply_weyl(fwd, WeylLabel(-1.0, -2.0))
        assert abs(abs(back.inner(psi)) - 1.0) < 1e-10

    def test_displacement_property(self, psi):
        out = apply_weyl(psi, WeylLabel(1.0, 2.0))
        assert position_expectation(out) == pytest.approx(position_expectation(psi) + 1.0, abs=1e-8)
        assert momentum_expectation(out) == pytest.approx(momentum_expectation(psi) + 2.0, abs=1e-8)

    def test_gaussian_overlap_matches_quadrature_oracle(self, psi):
        x0, v0 = 0.8, -1.1
        val = expectation(psi, WeylLabel(x0, v0))
        dens = lambda q: np.pi**-0.5 * np.exp(-0.5 * q**2 - 0.5 * (q - x0) ** 2)
        phase = np.exp(-0.5j * v0 * x0)
        re = quad(lambda q: np.real(phase * np.exp(1j * v0 * q)) * dens(q), -15, 15)[0]
        im = quad(lambda q: np.imag(phase * np.exp(1j * v0 * q)) * dens(q), -15, 15)[0]
        assert val == pytest.approx(re + 1j * im, abs=1e-10)


class TestCCR:
    @pytest.mark.parametrize("n", [256, 1024, 4096])
    def test_commensurate_defect_tiny(self, n):
        g = GridSpec(n_points=n, x_min=-40.0, dx=80.0 / n)
        assert ccr_defect(g, 4 * g.dx, 2 * g.dp) < 1e-10

    def test_zero_arguments_zero_defect(self, grid):
        assert ccr_defect(grid, 0.0, 0.0) == 0.0

    def test_incommensurate_flagged(self, grid):
        with pytest.warns(IncommensurateShiftWarning):
            value = ccr_defect(grid, grid.dx / 2, grid.dp)
        assert np.isfinite(value)

    def test_commensurate_detector(self, grid):
        assert is_commensurate(grid, 5 * grid.dx, -3 * grid.dp)
        assert not is_commensurate(grid, 0.5 * grid.dx, grid.dp)


class TestFreeEvolution:
    def test_time_zero_identity(self, psi):
        out = apply_free_evolution(psi, 0.0)
        assert np.array_equal(out.amplitudes, psi.amplitudes)

    def test_ehrenfest_transport(self, grid):
        psi = gaussian_state(grid, 0.0, 1.0, 1.3)
        out = apply_free_evolution(psi, 2.0)
        assert position_expectation(out) == pytest.approx(2.0 * 1.3, abs=1e-8)
        assert momentum_expectation(out) == pytest.approx(1.3, abs=1e-10)
        assert kinetic_energy(out) == pytest.approx(kinetic_energy(psi), abs=1e-12)

    def test_reversibility(self, moving_psi):
        out = apply_free_evolution(apply_free_evolution(moving_psi, 1.1), -1.1)
        assert abs(abs(out.inner(moving_psi)) - 1.0) < 1e-10

    def test_band_limit_warning(self, grid):
        ripple = gaussian_state(grid, 0.0, 1.0, 0.9 * np.abs(grid.p).max())
        with pytest.warns(BandLimitWarning):
            apply_free_evolution(ripple, 0.1)


class TestExpectation:
    def test_identity_table(self, psi):
        one = QTable.from_function(psi.grid, lambda x: np.ones_like(x))
        assert expectation(psi, one) == pytest.approx(1.0, abs=1e-14)

    def test_zero_weyl_label(self, psi):
        assert expectation(psi, WeylLabel(0.0, 0.0)) == pytest.approx(1.0, abs=1e-12)

    def test_momentum_table(self, grid):
        psi = gaussian_state(grid, 0.0, 1.0, 0.5)
        g = PTable.from_function(grid, lambda p: p**2)
        # exp(-x^2/(2 sigma^2)) packet: <P^2> = 1/(2 sigma^2) + p0^2
        assert expectation(psi, g).real == pytest.approx(0.5 + 0.25, abs=1e-8)

    def test_unnormalized_state_rescaled_with_warning(self, grid):
        psi = gaussian_state(grid, 0.0, 1.0)
        doubled = WaveFunction(grid, 2.0 * psi.amplitudes)
        one = QTable.from_function(grid, lambda x: np.ones_like(x))
        with pytest.warns(UnnormalizedStateWarning):
            val = expectation(doubled, one)
        assert val == pytest.approx(1.0, abs=1e-12)


class TestCSVRoundTrip:
    def test_round_trip(self, tmp_path, moving_psi):
        path = tmp_path / "psi.csv"
        wavefunction_to_csv(moving_psi, path)
        back = wavefunction_from_csv(path)
        assert back.grid == moving_psi.grid
        assert np.abs(back.amplitudes - moving_psi.amplitudes).max() < 1e-15
