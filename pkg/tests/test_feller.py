"""Boundary classification and killed-diffusion Monte Carlo."""

import numpy as np
import pytest
from scipy.special import erf

from levylab.feller import (
    BoundaryReport,
    DriftSpec,
    bessel3_drift_spec,
    feller_function,
    feller_test,
    ou_drift_spec,
    simulate_killed_diffusion,
    simulate_reflecting_diffusion,
    trace_decay_link,
    zero_drift_spec,
)
from levylab.montecarlo import MCConfig


class TestFellerFunction:
    def test_zero_drift_is_linear(self):
        spec = zero_drift_spec()
        for x in (0.2, 0.7, 1.5, 3.0):
            assert feller_function(spec, x) == pytest.approx(x - 1.0, abs=1e-10)

    def test_reference_point_gives_zero(self):
        assert feller_function(zero_drift_spec(), 1.0) == pytest.approx(0.0, abs=1e-12)

    def test_constant_drift_closed_form(self):
        # b(x) = 2c: F(x) = (1 - exp(-4c (x - x0))) / (4c)
        c = 0.35
        spec = DriftSpec(l=0.0, drift=lambda x: 2 * c * np.ones_like(np.asarray(x, dtype=float)), x0=1.0)
        for x in (0.3, 1.4, 2.5):
            closed = (1.0 - np.exp(-4 * c * (x - 1.0))) / (4 * c)
            assert feller_function(spec, x) == pytest.approx(closed, abs=1e-8)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="outside covered range"):
            feller_function(zero_drift_spec(), -0.5)


class TestClassification:
    def test_zero_drift(self):
        report = feller_test(zero_drift_spec())
        assert report.left == "absorbing"
        assert report.right == "non-absorbing"

    def test_bessel3_left_non_absorbing(self):
        report = feller_test(bessel3_drift_spec())
        assert report.left == "non-absorbing"
        assert report.right == "non-absorbing"

    def test_ou_right_non_absorbing(self):
        report = feller_test(ou_drift_spec())
        assert report.right == "non-absorbing"
        assert report.left == "absorbing"

    def test_diagnostics_present_for_verdicts(self):
        report = feller_test(zero_drift_spec())
        for side in ("left", "right"):
            diag = report.diagnostics[side]
            assert len(diag["log_integral"]) >= 6 and np.isfinite(diag["slope"])

    def test_report_requires_diagnostics(self):
        with pytest.raises(ValueError, match="lacks diagnostics"):
            BoundaryReport(left="absorbing", right="inconclusive", diagnostics={})


class TestKilledDiffusion:
    def test_time_zero_survival(self):
        curve = simulate_killed_diffusion(zero_drift_spec(), 1.0, 0.5, 0.01, MCConfig(500, 1))
        assert curve.survival[0] == 1.0

    def test_absorption_matches_reflection_principle(self):
        curve = simulate_killed_diffusion(zero_drift_spec(), 1.0, 1.0, 1e-3, MCConfig(100000, 17))
        assert abs(curve.final - erf(1.0 / np.sqrt(2.0))) < 0.01

    def test_survival_monotone_in_time(self):
        curve = simulate_killed_diffusion(zero_drift_spec(), 1.0, 1.0, 1e-3, MCConfig(20000, 18))
        assert np.all(np.diff(curve.survival) <= 1e-12)

    def test_bessel3_rarely_absorbs(self):
        curve = simulate_killed_diffusion(bessel3_drift_spec(), 1.0, 1.0, 2.5e-4, MCConfig(20000, 19))
        assert curve.final > 0.99

    def test_bridge_correction_shrinks_step_bias(self):
        spec = zero_drift_spec()
        def final(dt, bridge):
            return simulate_killed_diffusion(spec, 1.0, 1.0, dt, MCConfig(50000, 5), bridge=bridge).final
        corrected = abs(final(4e-3, True) - final(1e-3, True))
        uncorrected = abs(final(4e-3, False) - final(1e-3, False))
        assert corrected < uncorrected

    def test_determinism(self):
        a = simulate_killed_diffusion(zero_drift_spec(), 1.0, 0.5, 1e-2, MCConfig(4000, 6))
        b = simulate_killed_diffusion(zero_drift_spec(), 1.0, 0.5, 1e-2, MCConfig(4000, 6, threads=4))
        assert np.array_equal(a.survival, b.survival)

    def test_start_left_of_boundary_rejected(self):
        with pytest.raises(ValueError, match="right of the boundary"):
            simulate_killed_diffusion(zero_drift_spec(), -1.0, 1.0, 0.01, MCConfig(10, 1))

    def test_coarse_step_warns(self):
        spec = DriftSpec(l=0.0, drift=lambda x: 50.0 * np.ones_like(np.asarray(x, dtype=float)), x0=1.0)
        with pytest.warns(UserWarning, match="coarse"):
            simulate_killed_diffusion(spec, 1.0, 0.1, 0.01, MCConfig(100, 2))

    def test_reflecting_never_absorbs(self):
        curve = simulate_reflecting_diffusion(zero_drift_spec(), 1.0, 1.0, 1e-2, MCConfig(2000, 7))
        assert np.all(curve.survival == 1.0)


class TestVerdictAgreement:
    """Feller verdicts against killed-diffusion behaviour on the canonical drifts."""

    def test_left_verdicts_match_simulation(self):
        for mk, dt, absorbs in (
            (zero_drift_spec, 1e-3, True),
            (ou_drift_spec, 1e-3, True),
            (bessel3_drift_spec, 2.5e-4, False),
        ):
            verdict = feller_test(mk()).left
            final = simulate_killed_diffusion(mk(), 1.0, 1.0, dt, MCConfig(20000, 55)).final
            if absorbs:
                assert verdict == "absorbing" and final < 0.9
            else:
                assert verdict == "non-absorbing" and final > 0.99


class TestTraceDecayLink:
    T_GRID = np.array([0.25, 0.5, 0.75, 1.0])

    def test_absorbing_boundary_witnesses_non_uniqueness(self):
        report = trace_decay_link(zero_drift_spec(), 1.0, self.T_GRID, MCConfig(20000, 31), dt=1e-3)
        assert report.witness
        assert report.max_separation_sigmas > 5.0
        assert np.all(np.diff(report.minimal) <= 1e-12)

    def test_non_absorbing_boundary_no_witness(self):
        report = trace_decay_link(bessel3_drift_spec(), 1.0, self.T_GRID, MCConfig(20000, 32), dt=2.5e-4)
        assert not report.witness

    def test_time_zero_curves_agree(self):
        report = trace_decay_link(zero_drift_spec(), 1.0, np.array([0.0, 0.5]), MCConfig(2000, 33), dt=1e-2)
        assert report.minimal[0] == 1.0 and report.reflecting[0] == 1.0
