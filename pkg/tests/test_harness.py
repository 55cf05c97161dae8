import math

import numpy as np
import pytest

from boltzfact.basis import CoefficientField, SpectralConfig, moments, q_index
from boltzfact.harness import (
    FMU_REFERENCE,
    bkw_coefficients,
    chapman_enskog_fmu,
    galilean_report,
    rk4_integrate,
    run_bkw_benchmark,
    stress_relaxation_report,
    suggest_dt,
    wcu_spectrum_report,
)
from oracles import maxwell_eigenvalue_ref


class TestRk4:
    def test_equilibrium_is_fixed_point(self, op_maxwell):
        eq = CoefficientField.equilibrium(op_maxwell.cfg)
        trace = rk4_integrate(op_maxwell, eq, dt=0.2, n_steps=10)
        assert np.array_equal(trace.coeffs[0], trace.coeffs[-1])
        assert trace.moment_drift() == 0.0

    def test_single_mode_linear_decay(self, op_maxwell):
        # a pure basis mode is an eigenmode of the Maxwell operator
        cfg = op_maxwell.cfg
        lam = maxwell_eigenvalue_ref(0, 2)
        c0 = CoefficientField.equilibrium(cfg)
        c0.values[0, q_index(2, 0) - 1] = 1e-8
        dt = 0.02
        trace = rk4_integrate(op_maxwell, c0, dt, 200)
        series = trace.mode(0, 2, 0)
        slope = np.polyfit(trace.times, np.log(np.abs(series)), 1)[0]
        assert abs(slope - lam) / abs(lam) < 1e-6

    def test_observed_order_is_four(self, op_maxwell):
        cfg = op_maxwell.cfg
        c0 = bkw_coefficients(0.0, 1.0, cfg)
        t_end = 1.6
        sols = {}
        for div in (1, 2, 8):
            n = 8 * div
            sols[div] = rk4_integrate(op_maxwell, c0, t_end / n, n).coeffs[-1]
        e1 = np.abs(sols[1] - sols[8]).max()
        e2 = np.abs(sols[2] - sols[8]).max()
        order = math.log2(e1 / e2)
        assert 3.8 <= order <= 4.2

    def test_divergence_detected(self, op_hard_sphere):
        c0 = CoefficientField.equilibrium(op_hard_sphere.cfg)
        c0.values += 5.0
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(RuntimeError, match="diverged"):
                rk4_integrate(op_hard_sphere, c0, dt=50.0, n_steps=60)

    def test_suggest_dt_positive(self, op_maxwell):
        dt = suggest_dt(op_maxwell)
        assert 0 < dt < 10


class TestBkwState:
    def test_late_time_is_equilibrium(self):
        cfg = SpectralConfig(4, 4, gamma=0.0)
        c = bkw_coefficients(200.0, 0.2, cfg)
        assert c.values[0, 0] == pytest.approx(1.0, abs=1e-12)
        rest = c.values.copy()
        rest[0, 0] = 0.0
        assert np.abs(rest).max() < 1e-12

    def test_anisotropic_modes_exactly_zero(self):
        cfg = SpectralConfig(4, 4, gamma=0.0)
        c = bkw_coefficients(0.0, 1.0, cfg)
        assert np.abs(c.values[:, 1:]).max() == 0.0

    def test_mass_energy_invariant_along_curve(self):
        cfg = SpectralConfig(6, 2, gamma=0.0)
        for t in (0.0, 0.4, 2.0, 9.0):
            m, mom, en = moments(bkw_coefficients(t, 0.5, cfg))
            assert m == pytest.approx(1.0, abs=1e-12)
            assert en == pytest.approx(1.5, abs=1e-12)

    def test_positivity_domain_guard(self):
        cfg = SpectralConfig(2, 0, gamma=0.0)
        with pytest.raises(ValueError, match="negative"):
            bkw_coefficients(0.0, 1.0, cfg, amplitude=0.45)
        with pytest.raises(ValueError):
            bkw_coefficients(-1.0, 1.0, cfg)
        with pytest.raises(ValueError):
            bkw_coefficients(1.0, -2.0, cfg)

    def test_mode_amplitudes_follow_depression_powers(self):
        # the exact similarity solution carries mode k proportional to
        # (k - 1) xi^k, xi the instantaneous depression
        cfg = SpectralConfig(4, 0, gamma=0.0)
        rate = 0.3
        t1, t2 = 1.0, 3.0
        c1 = bkw_coefficients(t1, rate, cfg)
        c2 = bkw_coefficients(t2, rate, cfg)
        assert abs(c1.values[1, 0]) < 1e-13
        for k in (2, 3, 4):
            ratio = c2.values[k, 0] / c1.values[k, 0]
            assert ratio == pytest.approx(math.exp(-k * rate * (t2 - t1)), rel=1e-10)


@pytest.fixture(scope="module")
def bkw_rep(op_maxwell):
    return run_bkw_benchmark(op_maxwell)


@pytest.fixture(scope="module")
def stress_rep(op_hard_sphere):
    return stress_relaxation_report(op_hard_sphere)


class TestBkwBenchmark:
    def test_rate_matches_spectrum(self, bkw_rep):
        rel = abs(bkw_rep.rate_fit - bkw_rep.rate_from_spectrum) / bkw_rep.rate_from_spectrum
        assert rel < 1e-4

    def test_low_modes_decay_at_eigenvalues(self, bkw_rep):
        for k in (2, 3):
            lam = abs(bkw_rep.eigenvalues_isotropic[k])
            assert abs(bkw_rep.mode_rates[k] - lam) / lam < 1e-4

    def test_all_modes_follow_similarity_scaling(self, bkw_rep):
        for k, rate in bkw_rep.mode_rates.items():
            expect = bkw_rep.mode_rate_expected[k]
            assert abs(rate - expect) / expect < 1e-4

    def test_slaved_mode_outruns_its_eigenvalue(self, bkw_rep):
        # mode 4 is driven by the square of mode 2, so it decays faster
        # than its own eigenvalue predicts
        assert bkw_rep.mode_rates[4] > abs(bkw_rep.eigenvalues_isotropic[4]) * 1.05

    def test_trajectory_deviation(self, bkw_rep):
        assert bkw_rep.max_trajectory_deviation < 1e-6

    def test_exact_invariants(self, bkw_rep):
        assert bkw_rep.moment_drift == 0.0

    def test_requires_maxwell_kernel(self, op_hard_sphere):
        with pytest.raises(ValueError, match="gamma"):
            run_bkw_benchmark(op_hard_sphere)


class TestWcuReport:
    def test_reference_structure(self, op_maxwell):
        rep = wcu_spectrum_report(op_maxwell)
        assert rep.n_zero == 5
        assert rep.max_imag <= 1e-12 * rep.norm
        got = rep.groups[:4]
        for (ratio, mult), (want_ratio, want_mult) in zip(
            got, ((-1.0, 4), (-1.5, 9), (-1.75, 5), (-1.8, 4))
        ):
            assert mult == want_mult
            assert ratio == pytest.approx(want_ratio, abs=1e-8)


class TestGalilean:
    def test_stationary_state(self, op_maxwell):
        rep = galilean_report(op_maxwell, [0.0, 0.0, 0.0])
        assert rep.truncation_l2 < 1e-13
        assert rep.conservation_err == 0.0
        assert rep.projection_moments[0] == pytest.approx(1.0, abs=1e-12)

    def test_shift_grows_truncation_but_not_drift(self, op_maxwell):
        small = galilean_report(op_maxwell, [0.1, 0.0, 0.0])
        large = galilean_report(op_maxwell, [0.6, 0.0, 0.0])
        assert large.truncation_l2 > 100 * small.truncation_l2
        assert small.conservation_err == 0.0
        assert large.conservation_err == 0.0


class TestChapmanEnskog:
    def test_lowest_order_is_exactly_one(self, op_hard_sphere):
        assert chapman_enskog_fmu(op_hard_sphere, 0) == 1.0

    def test_second_order_fraction(self, op_hard_sphere):
        # the two-term value is the classical rational number 205/202
        assert chapman_enskog_fmu(op_hard_sphere, 1) == pytest.approx(
            205.0 / 202.0, abs=2e-7
        )

    def test_reference_sequence(self, op_hard_sphere):
        for kt, ref in FMU_REFERENCE.items():
            assert chapman_enskog_fmu(op_hard_sphere, kt) == pytest.approx(
                ref, abs=1e-5
            )

    def test_truncation_bounds(self, op_hard_sphere):
        with pytest.raises(ValueError):
            chapman_enskog_fmu(op_hard_sphere, 9)

    def test_needs_shear_block(self):
        from boltzfact.contraction import build_operator

        op = build_operator(SpectralConfig(1, 1, gamma=1.0), pad_rad=2, pad_ang=2)
        with pytest.raises(ValueError, match="l_max"):
            chapman_enskog_fmu(op, 0)


class TestStress:
    def test_slow_eigenmode_rate(self, stress_rep):
        rel = abs(stress_rep.slow_mode_rate - stress_rep.slowest_shear_eigenvalue) / abs(
            stress_rep.slowest_shear_eigenvalue
        )
        assert rel < 1e-3

    def test_raw_mode_bracketed_by_spectrum(self, stress_rep):
        assert abs(stress_rep.slowest_shear_eigenvalue) <= abs(stress_rep.primary_rate)
        assert abs(stress_rep.primary_rate) <= abs(stress_rep.bare_rate) * 1.001

    def test_effective_rate_consistent_with_fmu(self, stress_rep, op_hard_sphere):
        fmu = chapman_enskog_fmu(op_hard_sphere, op_hard_sphere.cfg.k_max)
        assert stress_rep.effective_rate == pytest.approx(stress_rep.bare_rate / fmu,
                                                      rel=1e-10)

    def test_cascade_signature(self, stress_rep):
        assert stress_rep.cascade_peak > 0.0
        assert stress_rep.secondary[0].max() == 0.0  # starts empty
        assert stress_rep.cascade_final < 0.1 * stress_rep.cascade_peak

    def test_exact_invariants(self, stress_rep):
        assert stress_rep.moment_drift == 0.0
