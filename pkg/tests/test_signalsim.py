"""Record synthesis: phase integration, SNR conventions, quantisation."""

import math

import numpy as np
import pytest

from fidmag import fieldmodel as fm
from fidmag import physics, signalsim as ss
from fidmag.errors import CalibrationError, DomainError

B0 = 86.0121261e-6


def make_phase(rb87, fs=5e6, dur=0.02, b0=B0, harmonics=()):
    model = fm.FieldModel(b0=b0, harmonics=harmonics, rng_seed=1)
    trace = fm.sample_field_trace(model, fs, dur)
    return ss.integrate_larmor_phase(trace, rb87)


class TestIntegrateLarmorPhase:
    def test_constant_field_exact(self, rb87):
        phase = make_phase(rb87, fs=1e5, dur=0.01)
        omega = physics.larmor_frequency(rb87, B0)
        n = phase.phi.size
        expected = omega * (n - 1) / 1e5
        # exact up to the sequential-summation rounding of the running sum
        assert phase.phi[-1] == pytest.approx(expected, rel=1e-12)
        assert phase.phi[0] == 0.0

    def test_sinusoidal_field_closed_form(self, rb87):
        # oracle: first-order expansion about B0 with the local slope, exact
        # antiderivative of the sine modulation
        fs, dur, f_l, a = 5e6, 0.1, 50.0, 10e-9
        harm = (fm.Harmonic(f_l, a / math.sqrt(2), -math.pi / 2),)  # = a*... sin->cos phasing
        phase = make_phase(rb87, fs=fs, dur=dur, harmonics=harm)
        t = phase.t
        omega0 = physics.larmor_frequency(rb87, B0)
        eps = 1e-9
        slope = (physics.larmor_frequency(rb87, B0 + eps) - physics.larmor_frequency(rb87, B0 - eps)) / (2 * eps)
        # field = B0 + a cos(2 pi f t + phi0') with the chosen phase
        phi0p = -math.pi / 2 + math.pi / 2  # sin(x - pi/2) = -cos(x); amplitude sign below
        mod = -(slope * a / (2 * math.pi * f_l)) * (np.sin(2 * np.pi * f_l * t + phi0p) - np.sin(phi0p))
        oracle = omega0 * t + mod
        err = np.abs(phase.phi - oracle)
        scale = max(slope * a / (2 * math.pi * f_l), 1.0)
        assert np.max(err) / (omega0 * dur) < 1e-9
        assert np.max(err) / scale < 1e-3

    def test_one_second_phase_magnitude(self, rb87):
        phase = make_phase(rb87, fs=1e5, dur=1.0)
        assert phase.phi[-1] == pytest.approx(2 * np.pi * 604.1e3, rel=1e-3)


class TestSynthesize:
    def test_noiseless_float_mode_exact(self, rb87):
        phase = make_phase(rb87, fs=1e5, dur=0.02)
        decay = ss.DecayModel(a0=0.8, lifetime=0.1)
        rec = ss.synthesize_polarimeter_record(phase, decay, sigma=0.0, phi_0=0.4, bit_depth=None)
        t = np.arange(phase.phi.size) / 1e5
        expected = 0.8 * np.exp(-t / 0.1) * np.sin(phase.phi + 0.4)
        np.testing.assert_allclose(rec.fid, expected, atol=1e-15)

    def test_full_bandwidth_snr_convention(self, rb87, rng):
        # A = 1, sigma = 1 -> SNR = 0.5
        phase = make_phase(rb87, fs=5e6, dur=0.05)
        decay = ss.DecayModel(a0=1.0, lifetime=1e6)
        rec = ss.synthesize_polarimeter_record(phase, decay, sigma=1.0, rng=rng)
        t, snr = ss.full_bandwidth_snr(rec, window=0.001)
        assert np.mean(snr) == pytest.approx(0.5, rel=0.05)

    def test_snr_decay_slope(self, rb87, rng):
        phase = make_phase(rb87, fs=1e6, dur=0.35)
        decay = ss.DecayModel(a0=1.0, lifetime=0.530)
        rec = ss.synthesize_polarimeter_record(phase, decay, sigma=0.05, rng=rng)
        t, snr = ss.full_bandwidth_snr(rec, window=0.002)
        early = np.mean(snr[:5])
        late = np.mean(snr[np.abs(t - 0.32) < 0.005])
        expected_db = -20 / math.log(10) * (0.32 - 0.005) / 0.530
        assert 10 * math.log10(late / early) == pytest.approx(expected_db, abs=0.5)

    def test_initial_snr_parameterisation(self):
        from fidmag.scenario import RecordSpec

        spec = RecordSpec(initial_snr_db=-11.1)
        sigma = spec.sigma_for(1.0)
        assert 1.0 / sigma == pytest.approx(0.394, abs=0.001)

    def test_quantisation_noise_power(self, rb87, rng):
        phase = make_phase(rb87, fs=5e6, dur=0.01)
        decay = ss.DecayModel(a0=1.0, lifetime=1e6)
        full_scale = 4.0
        recq = ss.synthesize_polarimeter_record(phase, decay, 0.0, phi_0=0.3, bit_depth=16,
                                                full_scale=full_scale, rng=rng)
        recf = ss.synthesize_polarimeter_record(phase, decay, 0.0, phi_0=0.3, bit_depth=None, rng=rng)
        delta = full_scale / 2**15
        qnoise = np.var(recq.fid - recf.fid)
        assert qnoise == pytest.approx(delta**2 / 12, rel=0.15)

    def test_parseval_with_quantisation(self, rb87, rng):
        phase = make_phase(rb87, fs=5e6, dur=0.05)
        decay = ss.DecayModel(a0=1.0, lifetime=0.2)
        full_scale = 4.0
        rec = ss.synthesize_polarimeter_record(phase, decay, 0.0, phi_0=1.1, bit_depth=16,
                                               full_scale=full_scale, rng=rng)
        t = np.arange(phase.phi.size) / 5e6
        a_rms_sq = np.mean((decay.amplitude(t) * np.sin(phase.phi + 1.1)) ** 2)
        delta = full_scale / 2**15
        assert np.mean(rec.fid**2) == pytest.approx(a_rms_sq + delta**2 / 12, rel=0.01)

    def test_clipping_flagged(self, rb87, rng):
        phase = make_phase(rb87, fs=1e5, dur=0.02)
        decay = ss.DecayModel(a0=1.0, lifetime=1e6)
        with pytest.warns(UserWarning, match="clipped"):
            rec = ss.synthesize_polarimeter_record(phase, decay, sigma=1.0, full_scale=1.5, rng=rng)
        assert rec.metadata["clip_fraction"] > 1e-6

    def test_segments_uncorrelated_with_carrier(self, rb87, rng):
        phase = make_phase(rb87, fs=5e6, dur=0.02)
        decay = ss.DecayModel(a0=1.0, lifetime=1e6)
        rec = ss.synthesize_polarimeter_record(phase, decay, sigma=0.5, rng=rng)
        seg = rec.probe_segment
        n = seg.size
        carrier = np.sin(2 * np.pi * 604.12e3 * np.arange(n) / 5e6)
        r = np.corrcoef(seg, carrier)[0, 1]
        assert abs(r) < 3 / math.sqrt(n)

    def test_missing_noise_segment_raises(self, rb87):
        phase = make_phase(rb87, fs=1e5, dur=0.02)
        rec = ss.synthesize_polarimeter_record(
            phase, ss.DecayModel(), 0.1, segments=ss.SegmentSpec(0.0, 0.0),
            rng=np.random.default_rng(0),
        )
        with pytest.raises(CalibrationError):
            rec.noise_sigma()


class TestEnvelopeModel:
    def test_decay_fit_recovers_lifetime(self, rng):
        fs, tau = 1e5, 0.53
        t = np.arange(int(fs * 1.0)) / fs
        env = 1.0 * np.exp(-t / tau) * (1 + 0.01 * rng.normal(size=t.size))
        a0, tau_hat = ss.fit_envelope_decay(env, fs)
        assert a0 == pytest.approx(1.0, rel=0.01)
        assert tau_hat == pytest.approx(tau, rel=0.02)

    def test_constant_envelope_gives_inf_tau(self, rng):
        env = np.ones(10000) + 1e-6 * rng.normal(size=10000)
        a0, tau_hat = ss.fit_envelope_decay(env, 1e5)
        assert tau_hat > 1.0 or math.isinf(tau_hat)

    def test_snr_profile_scale(self, rb87, rng):
        phase = make_phase(rb87, fs=5e6, dur=0.05)
        decay = ss.DecayModel(a0=1.0, lifetime=0.53)
        sigma = 0.2
        rec = ss.synthesize_polarimeter_record(phase, decay, sigma, rng=rng)
        from fidmag.dsp import analytic_signal, bandpass_zero_phase, FilterSpec

        spec = FilterSpec(low_edge=604.12e3 - 5e3, high_edge=604.12e3 + 5e3)
        env = np.abs(analytic_signal(bandpass_zero_phase(rec.fid, 5e6, spec)))
        snr = ss.snr_profile(rec, env)
        assert snr[0] == pytest.approx(1.0 / (2 * sigma**2), rel=0.1)


class TestValidation:
    def test_phase_series_checks(self):
        with pytest.raises(DomainError):
            ss.PhaseSeries(phi=np.array([1.0]), fs=1e3)
        with pytest.raises(DomainError):
            ss.PhaseSeries(phi=np.array([1.0, np.nan]), fs=1e3)
        with pytest.raises(DomainError):
            ss.PhaseSeries(phi=np.zeros(5), fs=1e3, weights=np.array([1.0, -1, 1, 1, 1]))

    def test_decay_model_checks(self):
        with pytest.raises(DomainError):
            ss.DecayModel(a0=-1.0)
        with pytest.raises(DomainError):
            ss.DecayModel(lifetime=0.0)
