"""Field synthesis statistics and the compensation/actuator model."""

import math

import numpy as np
import pytest
from scipy import stats

from fidmag import fieldmodel as fm
from fidmag.errors import AliasingError, DomainError

LAB = (
    fm.Harmonic(50.0, 41.92e-9, 0.6),
    fm.Harmonic(150.0, 10.88e-9, 2.1),
    fm.Harmonic(250.0, 2.0e-9, 4.4),
)


class TestSampleFieldTrace:
    def test_constant_trace(self):
        model = fm.FieldModel(b0=5e-6)
        trace = fm.sample_field_trace(model, 10e3, 0.1)
        assert np.all(trace.samples == 5e-6)

    def test_white_noise_variance(self):
        s_b = 100e-12
        model = fm.FieldModel(b0=0.0, white_noise_asd=s_b, rng_seed=5)
        fs, dur = 1e6, 1.0
        trace = fm.sample_field_trace(model, fs, dur)
        target = s_b**2 * fs / 2
        n = trace.samples.size
        # chi-square spread of the sample variance: 3 sigma band
        assert abs(np.var(trace.samples) / target - 1) < 3 * math.sqrt(2 / n)

    def test_lab_preset_quadrature_sum(self):
        model = fm.FieldModel(b0=0.0, harmonics=LAB, rng_seed=0)
        trace = fm.sample_field_trace(model, 10e3, 1.0)  # integer cycles of all three
        rms = np.sqrt(np.mean(trace.samples**2))
        oracle = math.sqrt(sum(h.rms_amplitude**2 for h in LAB))
        assert rms == pytest.approx(oracle, rel=1e-3)
        assert oracle == pytest.approx(43.4e-9, rel=2e-3)

    def test_noise_is_gaussian_ks(self):
        model = fm.FieldModel(white_noise_asd=100e-12, rng_seed=21)
        trace = fm.sample_field_trace(model, 1e5, 1.0)
        sigma = 100e-12 * math.sqrt(1e5 / 2)
        _, p = stats.kstest(trace.samples, "norm", args=(0.0, sigma))
        assert p > 0.01

    def test_periodogram_flat(self):
        from fidmag.dsp import power_spectrum

        s_b = 100e-12
        model = fm.FieldModel(white_noise_asd=s_b, rng_seed=3)
        fs = 10e3
        trace = fm.sample_field_trace(model, fs, 10.0)
        spec = power_spectrum(trace.samples, fs, 10.0, unit="T")
        sel = (spec.frequencies >= 10) & (spec.frequencies <= fs / 4)
        assert np.mean(spec.psd[sel]) == pytest.approx(s_b**2, rel=0.10)

    def test_seed_determinism(self):
        model = fm.FieldModel(white_noise_asd=1e-10, harmonics=LAB, rng_seed=9)
        a = fm.sample_field_trace(model, 20e3, 0.5)
        b = fm.sample_field_trace(model, 20e3, 0.5)
        assert np.array_equal(a.samples, b.samples)

    def test_superposition(self):
        fs, dur = 20e3, 0.5
        with_h = fm.FieldModel(b0=1e-6, white_noise_asd=1e-10, harmonics=LAB, rng_seed=4)
        without = fm.FieldModel(b0=1e-6, white_noise_asd=1e-10, rng_seed=4)
        t = np.arange(round(fs * dur)) / fs
        diff = fm.sample_field_trace(with_h, fs, dur).samples - fm.sample_field_trace(without, fs, dur).samples
        np.testing.assert_allclose(diff, fm.harmonic_sum(with_h, t), atol=1e-18)

    def test_aliasing_guard(self):
        model = fm.FieldModel(harmonics=(fm.Harmonic(250.0, 1e-9),))
        with pytest.raises(AliasingError):
            fm.sample_field_trace(model, 400.0, 1.0)

    def test_drift_scales_with_order(self):
        model = fm.FieldModel(harmonics=LAB, line_drift=0.1)
        assert model.effective_frequency(model.harmonics[0]) == pytest.approx(50.1)
        assert model.effective_frequency(model.harmonics[1]) == pytest.approx(150.3)
        assert model.effective_frequency(model.harmonics[2]) == pytest.approx(250.5)

    def test_invalid_model(self):
        with pytest.raises(DomainError):
            fm.FieldModel(white_noise_asd=-1.0)
        with pytest.raises(DomainError):
            fm.Harmonic(0.0, 1e-9)
        with pytest.raises(DomainError):
            fm.Harmonic(50.0, -1e-9)


class TestActuator:
    def test_dc_unity_gain(self):
        comp = fm.CompensationField()
        trace = fm.FieldTrace(samples=np.full(10000, 3e-9), fs=1e5, duration=0.1)
        out = fm.apply_actuator(trace, comp)
        assert out.samples[-1] == pytest.approx(3e-9, rel=1e-6)
        assert not out.clipped

    def test_10khz_gain_and_lag(self):
        comp = fm.CompensationField(actuator_time_constant=40e-6)
        fs, f = 5e6, 10e3
        t = np.arange(round(fs * 0.01)) / fs
        trace = fm.FieldTrace(samples=1e-9 * np.sin(2 * np.pi * f * t), fs=fs, duration=0.01)
        out = fm.apply_actuator(trace, comp)
        # steady state after a few time constants
        y = out.samples[2000:]
        x = trace.samples[2000:]
        gain = np.sqrt(np.mean(y**2) / np.mean(x**2))
        assert gain == pytest.approx(1 / math.sqrt(1 + (2 * np.pi * f * 40e-6) ** 2), rel=0.01)
        # lag from the cross-correlation phase
        tt = t[2000:]
        ref_i = np.sin(2 * np.pi * f * tt)
        ref_q = np.cos(2 * np.pi * f * tt)
        lag = -math.atan2(2 * np.mean(y * ref_q), 2 * np.mean(y * ref_i))
        assert lag == pytest.approx(math.atan(2 * np.pi * f * 40e-6), rel=0.02)

    def test_clipping_flag(self):
        comp = fm.CompensationField(max_amplitude=6.61e-6)
        trace = fm.FieldTrace(samples=np.full(1000, 8e-6), fs=1e5, duration=0.01)
        out = fm.apply_actuator(trace, comp)
        assert out.clipped
        assert np.max(np.abs(out.samples)) <= 6.61e-6


class TestCompensationWaveform:
    def _fit_like(self, comps, line_f=50.0):
        class F:
            components = comps
            line_frequency = line_f

        return F()

    def test_zero_fit_gives_zero(self):
        fit = self._fit_like([])
        out = fm.compensation_waveform(fit, fm.CompensationField(), 1e5, 0.1)
        assert np.all(out.samples == 0)

    def test_ideal_antiphase_cancels(self):
        fit = self._fit_like([(50.0, 41.92e-9, 0.6)])
        comp = fm.CompensationField(actuator_time_constant=1e-9)
        fs, dur = 1e5, 0.2
        out = fm.compensation_waveform(fit, comp, fs, dur)
        model = fm.FieldModel(harmonics=(fm.Harmonic(50.0, 41.92e-9, 0.6),))
        src = fm.sample_field_trace(model, fs, dur)
        resid = src.samples + out.samples
        assert np.max(np.abs(resid)) < 1e-15

    def test_40us_lag_residual(self):
        a = 41.92e-9
        fit = self._fit_like([(50.0, a, 0.6)])
        comp = fm.CompensationField(actuator_time_constant=40e-6)
        fs, dur = 1e6, 0.2  # fs >> 10/tau so the discrete pole tracks the analog lag
        out = fm.compensation_waveform(fit, comp, fs, dur)
        model = fm.FieldModel(harmonics=(fm.Harmonic(50.0, a, 0.6),))
        src = fm.sample_field_trace(model, fs, dur)
        resid_rms = np.sqrt(np.mean((src.samples + out.samples)[2000:] ** 2))
        delta = 2 * np.pi * 50 * 40e-6
        assert resid_rms == pytest.approx(a * delta, rel=0.05)
        assert resid_rms == pytest.approx(0.53e-9, rel=0.05)

    def test_trigger_phase_error_scales_with_order(self):
        err = 0.01
        fit = self._fit_like([(50.0, 1e-9, 0.0), (150.0, 1e-9, 0.0)])
        comp = fm.CompensationField(actuator_time_constant=1e-9, trigger_phase_error=err)
        out = fm.compensation_waveform(fit, comp, 1e5, 0.2)
        prog = out.provenance["programmed"]
        assert prog[0][2] == pytest.approx(math.pi + err)
        assert prog[1][2] == pytest.approx(math.pi + 3 * err)
