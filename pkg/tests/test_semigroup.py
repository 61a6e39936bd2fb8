"""Noise-averaged semigroup: unitality, classical reduction, covariance."""

import numpy as np
import pytest

from levylab.errors import SupportOverflowError
from levylab.grid import PTable, QTable, WeylLabel, expectation, gaussian_state
from levylab.levy import JumpMeasure, LevyTriplet1D, char_exponent_1d
from levylab.montecarlo import MCConfig
from levylab.semigroup import (
    NoiseSemigroupSpec,
    classical_fixed_point_oracle,
    classical_generator_apply,
    coarse_purity,
    generator_consistency_check,
    mc_evolve_state_ensemble,
    mc_heisenberg_batch,
    mc_heisenberg_expectation,
    momentum_covariance_check,
    semigroup_two_stage,
)

GAUSS = LevyTriplet1D(alpha=1.0)
MIXED = LevyTriplet1D(beta=0.3, alpha=0.5, jumps=JumpMeasure(atoms=[(2.0, 0.4)]))


@pytest.fixture(scope="module")
def spec(grid):
    return NoiseSemigroupSpec(MIXED, grid)


@pytest.fixture(scope="module")
def gauss_spec(grid):
    return NoiseSemigroupSpec(GAUSS, grid)


def bump(x):
    return np.exp(-0.5 * x**2)


class TestHeisenbergExpectation:
    def test_identity_exact_with_zero_variance(self, spec, psi):
        one = QTable.from_function(spec.grid, lambda x: np.ones_like(x), "one")
        res = mc_heisenberg_expectation(spec, psi, one, 1.0, MCConfig(4000, 1))
        assert res.estimate == pytest.approx(1.0, abs=1e-12)
        assert res.stderr < 1e-12

    def test_momentum_observable_exact(self, spec, psi):
        g = PTable.from_function(spec.grid, np.tanh, "tanh(P)")
        res = mc_heisenberg_expectation(spec, psi, g, 1.0, MCConfig(100, 2))
        assert res.exact and res.stderr == 0.0
        assert res.estimate == pytest.approx(expectation(psi, g), abs=1e-14)

    def test_position_observable_matches_classical_oracle(self, spec, psi):
        fq = QTable.from_function(spec.grid, bump, "bump")
        quantum = mc_heisenberg_expectation(spec, psi, fq, 1.0, MCConfig(40000, 3))
        classical = classical_fixed_point_oracle(bump, spec.triplet, 1.0, psi, MCConfig(40000, 999))
        joint = np.hypot(quantum.stderr, classical.stderr)
        assert abs(quantum.estimate - classical.estimate) <= 4.0 * joint

    def test_weyl_observable_closed_form(self, gauss_spec, psi):
        # conjugating a displacement by a shift multiplies it by a phase, so
        # the average is exp(t * exponent(v)) times the static expectation
        label = WeylLabel(0.5, 1.2)
        res = mc_heisenberg_expectation(gauss_spec, psi, label, 1.0, MCConfig(20000, 4))
        closed = np.exp(char_exponent_1d(GAUSS, label.v)) * expectation(psi, label)
        assert abs(res.estimate - closed) <= 4.0 * res.stderr + 1e-12

    def test_antithetic_used_for_symmetric_law(self, gauss_spec, psi):
        fq = QTable.from_function(gauss_spec.grid, bump, "bump")
        res = mc_heisenberg_expectation(gauss_spec, psi, fq, 1.0, MCConfig(2000, 5))
        assert res.antithetic

    def test_antithetic_refused_for_asymmetric_law(self, spec, psi):
        fq = QTable.from_function(spec.grid, bump, "bump")
        with pytest.raises(ValueError, match="asymmetric"):
            mc_heisenberg_expectation(spec, psi, fq, 1.0, MCConfig(2000, 5, antithetic=True))

    def test_support_overflow_aborts(self, grid):
        psi = gaussian_state(grid, 30.0, 1.0)
        fast = NoiseSemigroupSpec(LevyTriplet1D(beta=15.0), grid)
        fq = QTable.from_function(grid, bump, "bump")
        with pytest.raises(SupportOverflowError):
            mc_heisenberg_expectation(fast, psi, fq, 1.0, MCConfig(200, 6))

    def test_batch_shares_paths(self, spec, psi):
        fq = QTable.from_function(spec.grid, bump, "bump")
        single = mc_heisenberg_expectation(spec, psi, fq, 1.0, MCConfig(2000, 7))
        batch = mc_heisenberg_batch(spec, psi, [fq, WeylLabel(0.3, 0.4)], 1.0, MCConfig(2000, 7))
        assert batch[0].estimate == single.estimate


class TestStateEnsemble:
    def test_time_zero_paths_equal_initial(self, spec, psi):
        ens = mc_evolve_state_ensemble(spec, psi, 0.0, MCConfig(64, 8), keep_states=True)
        assert np.abs(ens.states - psi.amplitudes[None, :]).max() < 1e-12

    def test_paths_stay_normalized(self, spec, psi):
        ens = mc_evolve_state_ensemble(spec, psi, 1.0, MCConfig(512, 9))
        assert np.abs(ens.values - 1.0).max() < 1e-12
        ens.validate()

    def test_purity_strictly_decreases_under_diffusion(self, gauss_spec, psi):
        before = mc_evolve_state_ensemble(gauss_spec, psi, 0.0, MCConfig(1024, 10))
        after = mc_evolve_state_ensemble(gauss_spec, psi, 1.0, MCConfig(1024, 10))
        assert coarse_purity(after.coarse_rho) < coarse_purity(before.coarse_rho) - 0.05

    def test_ensemble_reproduces_expectation_numerically(self, spec, psi):
        # same seed, same streams: averaging the observable over kept states
        # must equal the direct estimator bit for bit (asymmetric law, so the
        # estimator uses plain sampling on both sides)
        fq = QTable.from_function(spec.grid, bump, "bump")
        ens = mc_evolve_state_ensemble(spec, psi, 1.0, MCConfig(512, 15), keep_states=True)
        dens = np.abs(ens.states) ** 2
        by_states = np.mean(spec.grid.dx * dens @ fq.array)
        direct = mc_heisenberg_expectation(spec, psi, fq, 1.0, MCConfig(512, 15))
        assert by_states == direct.estimate.real


class TestClassicalGenerator:
    def test_constant_function_annihilated(self):
        assert classical_generator_apply(MIXED, lambda x: np.ones_like(np.asarray(x)), 0.4) == pytest.approx(0.0, abs=1e-9)

    def test_quadratic_under_diffusion(self):
        # (alpha/2) f'' with f = x^2 gives exactly alpha
        assert classical_generator_apply(GAUSS, lambda x: np.asarray(x) ** 2, 0.3) == pytest.approx(1.0, abs=1e-6)

    def test_linear_function_with_big_atoms(self):
        triplet = LevyTriplet1D(beta=0.7, jumps=JumpMeasure(atoms=[(2.0, 0.5)]), h=1.0)
        # beta f' + rate * (f(x+y) - f(x)) for f(x) = x
        expected = 0.7 + 0.5 * 2.0
        assert classical_generator_apply(triplet, lambda x: np.asarray(x) * 1.0, -0.2) == pytest.approx(expected, abs=1e-8)

    def test_compensated_small_atom(self):
        triplet = LevyTriplet1D(jumps=JumpMeasure(atoms=[(0.5, 2.0)]), h=1.0)
        # compensation kills the f' term: rate * (f(x+y) - f(x) - y f'(x))
        f = lambda x: np.asarray(x) ** 2
        expected = 2.0 * ((0.3 + 0.5) ** 2 - 0.3**2 - 0.5 * 2 * 0.3)
        assert classical_generator_apply(triplet, f, 0.3) == pytest.approx(expected, abs=1e-6)


class TestGeneratorConsistency:
    @pytest.mark.parametrize(
        "triplet,n_paths",
        [
            (LevyTriplet1D(beta=1.0), 1000),
            (LevyTriplet1D(alpha=1.0), 100000),
            (LevyTriplet1D(jumps=JumpMeasure(atoms=[(2.0, 1.5)])), 100000),
        ],
        ids=["drift", "diffusion", "jump"],
    )
    def test_three_noise_types(self, triplet, n_paths):
        report = generator_consistency_check(triplet, bump, 0.01, MCConfig(n_paths, 77))
        assert report.passed and not report.inconclusive

    def test_noise_dominated_run_is_inconclusive(self):
        report = generator_consistency_check(GAUSS, bump, 0.01, MCConfig(50, 78))
        assert report.inconclusive and not report.passed


class TestCovarianceAndSemigroup:
    def test_momentum_covariance_weyl(self, spec):
        defect = momentum_covariance_check(spec, WeylLabel(0.5, 1.0), y=0.8, t=1.0, mc=MCConfig(1000, 11))
        assert defect < 1e-10

    def test_momentum_covariance_position_table(self, spec):
        fq = QTable.from_function(spec.grid, bump, "bump")
        defect = momentum_covariance_check(spec, fq, y=1.3, t=1.0, mc=MCConfig(1000, 12))
        assert defect < 1e-10

    def test_zero_boost_no_defect(self, spec):
        defect = momentum_covariance_check(spec, WeylLabel(0.2, 0.1), y=0.0, t=1.0, mc=MCConfig(500, 13))
        assert defect < 1e-14

    def test_two_stage_composition(self, spec, psi):
        fq = QTable.from_function(spec.grid, bump, "bump")
        one, two = semigroup_two_stage(spec, psi, fq, 0.5, 0.7, MCConfig(40000, 14))
        assert abs(one.estimate - two.estimate) <= 4.0 * np.hypot(one.stderr, two.stderr)
