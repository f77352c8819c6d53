"""Estimators and sensitivity formulas against analytic and MC oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fidmag import dsp, estimation as est, fieldmodel as fm, physics, signalsim as ss
from fidmag.errors import ConditioningError, DomainError

TWO_PI = 2 * math.pi


def linear_phase(rb87, b0, fs, n, noise=None, weights=None):
    omega = physics.larmor_frequency(rb87, b0)
    phi = omega * np.arange(n) / fs
    if noise is not None:
        phi = phi + noise
    return ss.PhaseSeries(phi=phi, fs=fs, weights=weights)


class TestFitDcPhase:
    def test_noiseless_exact(self, rb87):
        b0 = 86.0121261e-6
        phase = linear_phase(rb87, b0, 5e5, 20_000)
        fit = est.fit_dc_phase(phase, species=rb87)
        assert fit.b_est == pytest.approx(b0, abs=1e-11)
        assert fit.sigma_omega < 1e-3
        assert abs(np.mean(fit.residuals)) < 1e-9

    def test_white_noise_sigma_formula(self, rb87, rng):
        # sigma_omega = (2 dphi / tau^1.5) sqrt(3/fs) for white phase noise;
        # brute-force MC as the oracle for both the error bar and the spread
        fs, n, dphi = 1e5, 5000, 0.3
        tau = n / fs
        predicted = 2 * dphi / tau**1.5 * math.sqrt(3 / fs)
        omegas, sigmas = [], []
        for _ in range(200):
            phase = linear_phase(rb87, 86e-6, fs, n, noise=rng.normal(0, dphi, n))
            fit = est.fit_dc_phase(phase, species=rb87)
            omegas.append(fit.omega_est)
            sigmas.append(fit.sigma_omega)
        assert np.mean(sigmas) == pytest.approx(predicted, rel=0.10)
        assert np.std(omegas, ddof=1) == pytest.approx(predicted, rel=0.10)

    def test_uniform_weights_equal_ols(self, rb87, rng):
        phase = linear_phase(rb87, 50e-6, 1e5, 4000, noise=rng.normal(0, 0.1, 4000))
        fit_none = est.fit_dc_phase(phase, species=rb87)
        fit_ones = est.fit_dc_phase(phase, weights=np.ones(4000), species=rb87)
        assert fit_none.omega_est == fit_ones.omega_est
        assert fit_none.phi_est == fit_ones.phi_est

    def test_sensitivity_is_sigma_over_gamma(self, rb87, rng):
        phase = linear_phase(rb87, 86e-6, 1e5, 4000, noise=rng.normal(0, 0.1, 4000))
        fit = est.fit_dc_phase(phase, species=rb87)
        assert fit.delta_b_dc == pytest.approx(fit.sigma_omega / fit.gamma_used, rel=1e-12)

    def test_residual_mean_small(self, rb87, rng):
        n = 8000
        phase = linear_phase(rb87, 86e-6, 1e5, n, noise=rng.normal(0, 0.2, n))
        fit = est.fit_dc_phase(phase, species=rb87)
        rms = np.sqrt(np.mean(fit.residuals**2))
        assert abs(np.mean(fit.residuals)) < 3 * rms / math.sqrt(n)

    def test_preconditions(self, rb87):
        with pytest.raises(DomainError):
            est.fit_dc_phase(ss.PhaseSeries(phi=np.zeros(50), fs=1e3), species=rb87)

    def test_budget_quadrature_sum(self, rb87, rng):
        n = 8000
        phase = linear_phase(rb87, 86e-6, 1e5, n, noise=rng.normal(0, 0.2, n))
        fit = est.fit_dc_phase(phase, species=rb87)
        budget = fit.budget()
        assert budget.total_sq == pytest.approx(budget.delta_phi_shot_sq + budget.delta_phi_field_sq, rel=1e-12)
        assert budget.total_sq == pytest.approx(fit.delta_phi**2, rel=1e-9)


class TestFitHarmonics:
    def test_zero_injection_consistent_with_zero(self, rb87, rng):
        fs, n = 1e5, 32_000
        phase = linear_phase(rb87, 86e-6, fs, n, noise=rng.normal(0, 0.05, n))
        fit = est.fit_harmonics(phase, 50.0, 3, rb87, b_hint=86e-6)
        for c in fit.components:
            assert c.rms_amplitude < 2 * c.amplitude_sigma + 1e-15

    def test_single_harmonic_recovery_full_scale(self, rb87, rng):
        # 10 nT at 50 Hz, 320 ms, initial SNR -11 dB: recovered to +-1%
        fs, dur = 5e6, 0.32
        model = fm.FieldModel(b0=86.0121261e-6, harmonics=(fm.Harmonic(50.0, 10e-9, 1.0),), rng_seed=3)
        trace = fm.sample_field_trace(model, fs, dur)
        phase = ss.integrate_larmor_phase(trace, rb87)
        sigma = 1.0 / math.sqrt(2 * 10 ** (-1.1))
        rec = ss.synthesize_polarimeter_record(phase, ss.DecayModel(), sigma, rng=rng)
        spec = dsp.FilterSpec(low_edge=604.12e3 - 2500, high_edge=604.12e3 + 2500)
        phase_rec, _ = dsp.reconstruct_phase(rec, spec)
        fit = est.fit_harmonics(phase_rec, 50.0, 1, rb87, b_hint=model.b0)
        c = fit.components[0]
        assert c.rms_amplitude == pytest.approx(10e-9, rel=0.01)
        assert abs(c.rms_amplitude - 10e-9) < 3 * c.amplitude_sigma

    def test_phase_convention_round_trip(self, rb87):
        # noiseless injection: fitted phase must reproduce the generator's
        fs, dur = 1e6, 0.4
        h = fm.Harmonic(50.0, 20e-9, 2.345)
        model = fm.FieldModel(b0=8.5425188e-6, harmonics=(h,))
        trace = fm.sample_field_trace(model, fs, dur)
        phase = ss.integrate_larmor_phase(trace, rb87)
        fit = est.fit_harmonics(phase, 50.0, 1, rb87, b_hint=model.b0)
        c = fit.components[0]
        assert c.rms_amplitude == pytest.approx(h.rms_amplitude, rel=1e-4)
        assert math.remainder(c.phase - h.phase, TWO_PI) == pytest.approx(0.0, abs=1e-3)

    def test_conditioning_guard(self, rb87):
        phase = linear_phase(rb87, 86e-6, 1e5, 2000)  # 0.02 s < 2 line cycles
        with pytest.raises(ConditioningError):
            est.fit_harmonics(phase, 50.0, 1, rb87)


class TestCriticalTime:
    def test_exact_arithmetic(self, rb87):
        s_bb = (100e-12) ** 2
        oracle = math.pi**2 / (2 * 4 * rb87.gamma_0**2 * s_bb)
        assert est.critical_time(2, s_bb, rb87) == pytest.approx(oracle, rel=1e-12)

    def test_250pt_value(self, rb87):
        # 10.2 ms quoted; exact arithmetic gives 10.14 ms
        assert est.critical_time(2, (250e-12) ** 2, rb87) == pytest.approx(10.2e-3, rel=0.01)

    def test_n_scaling(self, rb87):
        s_bb = (100e-12) ** 2
        assert est.critical_time(4, s_bb, rb87) == pytest.approx(est.critical_time(2, s_bb, rb87) / 4, rel=1e-12)


class TestRamseyProject:
    def test_identity_inside_fringe(self):
        val, hop = est.ramsey_project(0.3)
        assert val == pytest.approx(0.3, abs=1e-15) and not hop

    def test_reflection_ambiguity(self):
        val, hop = est.ramsey_project(math.pi - 0.3)
        assert val == pytest.approx(0.3, rel=1e-12) and hop

    def test_gaussian_tail_fraction(self, rng):
        phi = rng.normal(0, math.pi / 4, 100_000)
        _, hop = est.ramsey_project(phi)
        assert np.mean(hop) == pytest.approx(0.0455, abs=0.005)

    @settings(max_examples=50, deadline=None)
    @given(phi=st.floats(min_value=-math.pi / 2 + 1e-6, max_value=math.pi / 2 - 1e-6))
    def test_identity_property(self, phi):
        # arcsin(sin(.)) is exact on the principal fringe; stay a whisker off
        # the branch point where the float inverse loses digits
        val, hop = est.ramsey_project(phi)
        assert not hop
        assert val == pytest.approx(phi, abs=1e-9)


class TestPassbandBudget:
    def test_fixed_point(self):
        b = est.passband_budget(10**0.6, 5e6)
        assert b.max_enbw == pytest.approx(2.5e6, rel=1e-12)
        assert b.threshold_snr_db == pytest.approx(6.0, abs=1e-9)

    def test_maximum_passband_at_initial_snr(self):
        b = est.passband_budget(10 ** (-1.11), 5e6)
        assert b.max_enbw == pytest.approx(48.8e3, rel=0.01)

    def test_5khz_threshold(self):
        b = est.passband_budget(1.0, 5e6, enbw=5e3)
        assert b.threshold_snr_db == pytest.approx(-21.0, abs=0.05)


class TestPhaseNoiseModel:
    def test_corner_near_800(self, rb87):
        s_shot = 2.0 / (5e6 * 10 ** (-1.11))
        f_c = est.corner_frequency((250e-12) ** 2, s_shot, rb87.gamma_0)
        assert 700 < f_c < 900
        lo = est.phase_noise_psd_model(f_c * 0.99, (250e-12) ** 2, 10 ** (-1.11), 5e6, rb87)
        assert lo == pytest.approx(2 * s_shot, rel=0.05)

    def test_asymptote(self, rb87):
        s_shot = 2.0 / (5e6 * 0.5)
        val = est.phase_noise_psd_model(1e6, (250e-12) ** 2, 0.5, 5e6, rb87)
        assert val == pytest.approx(s_shot, rel=1e-3)

    def test_flat_without_field_noise(self, rb87):
        f = np.array([1.0, 10.0, 1e3])
        vals = est.phase_noise_psd_model(f, 0.0, 0.5, 5e6, rb87)
        assert np.ptp(vals) == 0.0


class TestRmsNoiseAmplitude:
    def test_flat_floor(self):
        f = np.linspace(0, 400, 4001)
        spec = dsp.SpectrumEstimate(frequencies=f, psd=np.full_like(f, (250e-12) ** 2), resolution=0.1, unit="T")
        assert est.rms_noise_amplitude(spec, 300.0) == pytest.approx(250e-12 * math.sqrt(300), rel=1e-3)
        assert est.rms_noise_amplitude(spec, 300.0) == pytest.approx(4.33e-9, rel=0.01)

    def test_zero_spectrum(self):
        f = np.linspace(0, 400, 401)
        spec = dsp.SpectrumEstimate(frequencies=f, psd=np.zeros_like(f), resolution=1.0, unit="T")
        assert est.rms_noise_amplitude(spec, 300.0) == 0.0

    def test_coverage_guard(self):
        f = np.linspace(0, 100, 101)
        spec = dsp.SpectrumEstimate(frequencies=f, psd=np.zeros_like(f), resolution=1.0, unit="T")
        with pytest.raises(DomainError):
            est.rms_noise_amplitude(spec, 300.0)


class TestSensitivities:
    def test_dc_sensitivity_reference_anchor(self, rb87):
        val = est.dc_sensitivity_from_snr(10 ** (-2.02), 1.0, 5e6, rb87)
        assert val == pytest.approx(359e-15, rel=0.01)

    def test_residual_form_equivalence(self, rb87):
        snr = 10 ** (-2.02)
        a = est.dc_sensitivity_from_residuals(math.sqrt(1 / snr), 1.0, 5e6, rb87)
        b = est.dc_sensitivity_from_snr(snr, 1.0, 5e6, rb87)
        assert a == pytest.approx(b, rel=1e-12)

    def test_tau_scaling(self, rb87):
        a = est.dc_sensitivity_from_residuals(1.0, 1.0, 5e6, rb87)
        b = est.dc_sensitivity_from_residuals(1.0, 4.0, 5e6, rb87)
        assert a / b == pytest.approx(8.0, rel=1e-12)

    def test_ac_coefficient_anchor(self, rb87):
        coef = est.ac_sensitivity(1.0, 10 ** (-1.11), 5e6, 1.0, rb87)
        assert coef == pytest.approx(230e-15, rel=0.01)
        at50 = est.ac_sensitivity(50.0, 10 ** (-1.11), 5e6, 1.0, rb87)
        assert at50 == pytest.approx(50 * coef, rel=1e-12)
        assert at50 == pytest.approx(11.5e-12, rel=0.01)

    def test_ac_limit(self, rb87):
        assert est.ac_sensitivity(1e-12, 0.5, 5e6, 1.0, rb87) < 1e-24


class TestCrlb:
    def test_exact_vs_large_n(self):
        exact = est.crlb_frequency_variance(0.5, 100_000, 5e6, exact=True)
        approx = est.crlb_frequency_variance(0.5, 100_000, 5e6, exact=False)
        assert exact == pytest.approx(approx, rel=1e-4)

    def test_bound_equals_snr_sensitivity_in_field_units(self, rb87):
        snr, fs, tau = 0.25, 5e6, 1.0
        n = int(fs * tau)
        sigma_b = math.sqrt(est.crlb_frequency_variance(snr, n, fs, exact=False)) / rb87.gamma_0
        assert sigma_b == pytest.approx(est.dc_sensitivity_from_snr(snr, tau, fs, rb87), rel=1e-9)

    def test_mc_attains_bound_at_0db(self, rb87, rng):
        # 0 dB full-band SNR with a 3 kHz analysis band keeps the in-band
        # SNR far above the click threshold; bound evaluated at the fitted
        # sample count
        fs, n, fc = 1e5, 10_000, 25e3
        t = np.arange(n) / fs
        spec = dsp.FilterSpec(low_edge=fc - 1500, high_edge=fc + 1500)
        guard = 400
        omegas = []
        for _ in range(300):
            v = np.sin(2 * np.pi * fc * t + rng.uniform(0, TWO_PI)) + rng.normal(0, 1 / math.sqrt(2), n)
            filtered = dsp.bandpass_zero_phase(v, fs, spec)
            phase = dsp.unwrap_phase(dsp.analytic_signal(filtered), fs)
            phi = phase.phi[guard:-guard]
            tt = t[guard : n - guard]
            u = tt - tt.mean()
            omegas.append(float(u @ phi / (u @ u)))
        var = np.var(omegas, ddof=1)
        crlb = est.crlb_frequency_variance(1.0, n - 2 * guard, fs, exact=False)
        assert var / crlb == pytest.approx(1.0, abs=0.10)
