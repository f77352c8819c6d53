"""Reconstruction pipeline: zero-phase bandpass, analytic signal, unwrapped
phase, and spectral estimators.

The bandpass is a Butterworth prototype applied forward-backward
(``sosfiltfilt``), so the net response is the squared magnitude of the
prototype and exactly zero phase; the prototype order refers to the
lowpass-equivalent order (order 6 gives 12 dB/octave x 6 per pass).  The
analytic signal is built in the frequency domain by one-siding the spectrum,
appropriate for post-experiment (non-causal) processing.  Phase unwrapping
is the plain cumulative 2 pi correction; unwrap failures are *detected*
(never silently repaired) by ``find_phase_discontinuities``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import DomainError, EdgeError, FilterDesignError
from .signalsim import PhaseSeries, PolarimeterRecord


@dataclass(frozen=True)
class FilterSpec:
    """Zero-phase Butterworth bandpass specification."""

    low_edge: float  # Hz
    high_edge: float  # Hz
    prototype_order: int = 6
    zero_phase: bool = True

    def __post_init__(self):
        if not (0 < self.low_edge < self.high_edge):
            raise DomainError("need 0 < low_edge < high_edge")
        if self.prototype_order < 1:
            raise DomainError("prototype order must be >= 1")

    @property
    def bandwidth(self) -> float:
        return self.high_edge - self.low_edge

    @property
    def centre(self) -> float:
        return 0.5 * (self.low_edge + self.high_edge)

    def design(self, fs: float) -> np.ndarray:
        if self.high_edge >= fs / 2:
            raise DomainError(f"high edge {self.high_edge} Hz at or beyond Nyquist ({fs / 2} Hz)")
        sos = sps.butter(self.prototype_order, [self.low_edge, self.high_edge], btype="bandpass", fs=fs, output="sos")
        # bilinear mapping of a stable prototype stays stable; trust but verify
        poles_ok = np.all(np.abs(_sos_poles(sos)) < 1.0)
        if not poles_ok or not np.all(np.isfinite(sos)):
            raise FilterDesignError("discretised bandpass is unstable at this sample rate")
        return sos

    def enbw(self, fs: float, n_grid: int = 4096) -> float:
        """Equivalent noise bandwidth (Hz) of the net applied response.

        For the forward-backward filter the applied gain is |H|^2; ENBW is
        integral(|H_net|^2) / peak(|H_net|^2).  Out-of-band contributions
        are tens of dB down and ignored; integration is confined to a few
        bandwidths around the passband.
        """
        sos = self.design(fs)
        span = 4 * self.bandwidth
        f = np.linspace(max(self.low_edge - span, 0.0), min(self.high_edge + span, fs / 2), n_grid)
        _, h = sps.sosfreqz(sos, worN=f, fs=fs)
        g = np.abs(h) ** 2 if self.zero_phase else np.abs(h)
        g2 = g**2
        return float(np.trapezoid(g2, f) / g2.max())

    def edge_guard(self, fs: float, minimum: int = 1000) -> int:
        """Samples to exclude from each record end in downstream fits.

        The ringing length of a narrow bandpass is a few reciprocal
        bandwidths, which can exceed the flat 1000-sample default at
        acquisition-scale rates; take whichever is larger.
        """
        return max(minimum, int(round(2.0 * fs / self.bandwidth)))


def _sos_poles(sos: np.ndarray) -> np.ndarray:
    poles = []
    for section in sos:
        poles.extend(np.roots(np.concatenate([[1.0], section[4:6]])))
    return np.asarray(poles)


@dataclass
class AnalyticRecord:
    """Complex analytic samples of a filtered polarimeter record."""

    values: np.ndarray
    fs: float

    @property
    def envelope(self) -> np.ndarray:
        return np.abs(self.values)

    @property
    def wrapped_phase(self) -> np.ndarray:
        return np.angle(self.values)


@dataclass
class SpectrumEstimate:
    """One-sided segment-averaged periodogram."""

    frequencies: np.ndarray  # Hz
    psd: np.ndarray  # unit^2/Hz
    resolution: float  # Hz, Fourier bin spacing
    window: str = "hann"
    unit: str = "V"

    def band_power(self, f_lo: float, f_hi: float) -> float:
        sel = (self.frequencies >= f_lo) & (self.frequencies <= f_hi)
        return float(np.trapezoid(self.psd[sel], self.frequencies[sel]))


def _carrier_continuation(x, fs, f0, n_pad, left):
    """Tone extension fitted to one record edge, for transient-free padding.

    A generic odd extension kinks the carrier at the boundary and rings the
    narrowband filter for several reciprocal bandwidths; continuing the
    fitted edge tone keeps the extension smooth to the fit error instead.
    """
    n_fit = int(min(max(64, round(8 * fs / f0)), x.size))
    if left:
        seg = x[:n_fit]
        t_seg = np.arange(n_fit)
        t_pad = np.arange(-n_pad, 0)
    else:
        seg = x[-n_fit:]
        t_seg = np.arange(x.size - n_fit, x.size)
        t_pad = np.arange(x.size, x.size + n_pad)
    arg = 2 * np.pi * f0 / fs
    basis = np.column_stack([np.sin(arg * t_seg), np.cos(arg * t_seg)])
    coef, *_ = np.linalg.lstsq(basis, seg, rcond=None)
    return coef[0] * np.sin(arg * t_pad) + coef[1] * np.cos(arg * t_pad)


def bandpass_zero_phase(x, fs: float, spec: FilterSpec) -> np.ndarray:
    """Forward-backward Butterworth bandpass of a real series.

    Edges are padded with a carrier-continuation extension fitted at the
    band centre before filtering, so the slow poles of a narrow band are
    not rung by an extension kink.
    """
    x = np.asarray(x, dtype=float)
    sos = spec.design(fs)
    ring = int(round(6.0 * fs / spec.bandwidth))
    if x.size < 10 * ring / 6:
        raise EdgeError("record shorter than ~10 filter ring lengths")
    if not spec.zero_phase:
        return sps.sosfilt(sos, x)
    n_pad = min(x.size - 1, ring)
    left = _carrier_continuation(x, fs, spec.centre, n_pad, left=True)
    right = _carrier_continuation(x, fs, spec.centre, n_pad, left=False)
    ext = np.concatenate([left, x, right])
    y = sps.sosfiltfilt(sos, ext, padlen=min(ext.size - 1, n_pad))
    return y[n_pad : n_pad + x.size]


def analytic_signal(x) -> np.ndarray:
    """Analytic signal via frequency-domain one-siding (mean removed)."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise DomainError("need at least two samples")
    return sps.hilbert(x - x.mean())


def unwrap_phase(values, fs: float, t0: float = 0.0) -> PhaseSeries:
    """Cumulative 2 pi unwrap of wrapped angles (or a complex series)."""
    arr = np.asarray(values)
    wrapped = np.angle(arr) if np.iscomplexobj(arr) else arr.astype(float)
    return PhaseSeries(phi=np.unwrap(wrapped), fs=fs, t0=t0)


def find_phase_discontinuities(phase: PhaseSeries, band_hz: float | None = None, threshold: float = math.pi / 2):
    """Sample indices where the reconstruction jumped by more than threshold.

    Two detectors are combined: a per-sample test on increments relative to
    the median carrier advance (hard unwrap failures), and a test on the
    detrended phase decimated to ~4x the analysis bandwidth, which catches
    band-limited 2 pi excursions that unfold over many samples.
    """
    incr = np.diff(phase.phi)
    carrier = float(np.median(incr))
    bad = np.abs(incr - carrier) > threshold
    idx = set(np.nonzero(bad)[0].tolist())
    if band_hz is not None and band_hz > 0:
        # one reciprocal bandwidth per comparison: a 2 pi excursion unfolds
        # over ~1/B, so a finer lag would dilute it below threshold
        step = max(1, int(round(phase.fs / band_hz)))
        resid = phase.phi - carrier * np.arange(phase.phi.size)
        r = resid[::step]
        jumps = np.abs(np.diff(r))
        for k in np.nonzero(jumps > threshold)[0]:
            idx.add(int(k * step))
    return np.asarray(sorted(idx), dtype=int)


def power_spectrum(x, fs: float, resolution: float, window: str = "hann", unit: str = "V") -> SpectrumEstimate:
    """Welch periodogram at the requested Fourier-limited resolution."""
    x = np.asarray(x, dtype=float)
    duration = x.size / fs
    if resolution < 1.0 / duration:
        raise DomainError(f"resolution {resolution} Hz finer than the Fourier limit {1 / duration:.3g} Hz")
    nperseg = min(x.size, int(round(fs / resolution)))
    f, p = sps.welch(x, fs=fs, window=window, nperseg=nperseg, noverlap=nperseg // 2, detrend="constant")
    return SpectrumEstimate(frequencies=f, psd=p, resolution=fs / nperseg, window=window, unit=unit)


def spectrogram(x, fs: float, window_len: float, hop: float, window: str = "hann"):
    """Sequence of windowed periodograms; returns (t, f, power map)."""
    if hop > window_len:
        raise DomainError("hop must not exceed the window length")
    nperseg = int(round(window_len * fs))
    if nperseg < 64:
        raise DomainError("window must cover at least 64 samples")
    noverlap = nperseg - int(round(hop * fs))
    f, t, sxx = sps.spectrogram(np.asarray(x, dtype=float), fs=fs, window=window, nperseg=nperseg, noverlap=noverlap)
    return t, f, sxx


def spectrogram_ridge(t, f, sxx) -> np.ndarray:
    """Frequency of the per-column power maximum (carrier trajectory)."""
    return f[np.argmax(sxx, axis=0)]


def carson_bandwidth(harmonics, gamma: float, f_max: float | None = None) -> float:
    """Spectral support of the frequency-modulated precession signal.

    2 x (sum of peak frequency deviations + highest modulation frequency),
    with deviation_k = gamma * a_peak,k / 2 pi.  With an empty harmonic list
    the estimate degenerates to 2 f_max (tone plus guard); ``f_max`` must
    then be supplied.
    """
    freqs, devs = [], []
    for h in harmonics:
        f_hz, a_rms = (h.frequency, h.rms_amplitude) if hasattr(h, "frequency") else (h[0], h[1])
        freqs.append(f_hz)
        devs.append(gamma * a_rms * math.sqrt(2.0) / (2 * math.pi))
    if freqs:
        top = max(freqs)
    elif f_max is not None:
        top = f_max
    else:
        raise DomainError("no harmonics given and no f_max to fall back on")
    return 2.0 * (sum(devs) + top)


def centre_passband(record: PolarimeterRecord, resolution: float = 100.0) -> float:
    """Carrier frequency estimate: peak of the FID spectrum minus the
    pre-tip noise spectrum.

    Heuristic standing in for manual passband placement; the subtraction
    keeps broadband noise peaks from capturing the maximum at low SNR.
    """
    fid = record.fid
    noise = record.probe_segment
    n_cmp = min(fid.size, noise.size)
    if n_cmp < 256:
        # no usable noise segment: fall back to the raw FID peak
        spec = power_spectrum(fid, record.fs, resolution)
        return float(spec.frequencies[np.argmax(spec.psd)])
    res = max(resolution, record.fs / n_cmp + 1e-9)
    s_fid = power_spectrum(fid, record.fs, res)
    s_noise = power_spectrum(noise, record.fs, res)
    diff = s_fid.psd - np.interp(s_fid.frequencies, s_noise.frequencies, s_noise.psd)
    return float(s_fid.frequencies[np.argmax(diff)])


def phase_response_gain(spec: FilterSpec, fs: float, carrier: float, offsets) -> np.ndarray:
    """Amplitude gain of the zero-phase bandpass on phase modulation.

    A modulation tone at offset f from the carrier maps to sidebands at
    carrier +- f; the recovered phase amplitude scales with the mean of the
    two net sideband gains (|H|^2 each for forward-backward filtering).
    """
    offsets = np.asarray(offsets, dtype=float)
    sos = spec.design(fs)
    f_hi = np.clip(carrier + offsets, 0.0, fs / 2 * 0.999999)
    f_lo = np.clip(carrier - offsets, 0.0, fs / 2 * 0.999999)
    _, h_hi = sps.sosfreqz(sos, worN=f_hi, fs=fs)
    _, h_lo = sps.sosfreqz(sos, worN=f_lo, fs=fs)
    gain = np.abs(h_hi) ** 2 if spec.zero_phase else np.abs(h_hi)
    gain_lo = np.abs(h_lo) ** 2 if spec.zero_phase else np.abs(h_lo)
    return 0.5 * (gain + gain_lo)


def field_psd_from_phase(
    phase: PhaseSeries,
    gamma: float,
    resolution: float,
    shot_phase_psd: float | None = None,
    subtract_shot: bool = False,
    response: tuple[FilterSpec, float] | None = None,
    min_gain: float = 0.05,
    clip_negative: bool = True,
) -> SpectrumEstimate:
    """Field PSD estimated by periodogram of the phase derivative, T^2/Hz.

    ``response`` is the (filter spec, carrier frequency) pair the phase was
    reconstructed through; when given, the known bandpass response on phase
    modulation is equalised out (bins with amplitude gain below ``min_gain``
    are left untouched).  ``shot_phase_psd`` is the flat one-sided phase
    floor imputed by detector noise; with ``subtract_shot`` its equivalent
    field PSD (2 pi f)^2 S_shot / gamma^2 is removed bin by bin after
    equalisation, estimating the actual field spectrum rather than the
    measurement of it.  Clipping the subtraction at zero keeps the spectrum
    physical but biases band integrals upward; pass ``clip_negative=False``
    when the spectrum is to be integrated.
    """
    b_inst = np.gradient(phase.phi) * phase.fs / gamma
    est = power_spectrum(b_inst, phase.fs, resolution, unit="T")
    if response is not None:
        spec, carrier = response
        gain = phase_response_gain(spec, phase.fs, carrier, est.frequencies)
        g2 = np.where(gain >= min_gain, gain**2, 1.0)
        est.psd = est.psd / g2
    if subtract_shot and shot_phase_psd:
        imputed = (2 * np.pi * est.frequencies) ** 2 * shot_phase_psd / gamma**2
        est.psd = est.psd - imputed
        if clip_negative:
            est.psd = np.maximum(est.psd, 0.0)
    return est


def reconstruct_phase(
    record: PolarimeterRecord,
    spec: FilterSpec,
    guard: int | None = None,
    weights: bool = True,
):
    """Record -> trimmed, weighted phase series (the full demodulation chain).

    Bandpass, analytic signal, unwrap, discontinuity detection, edge-guard
    trim, and per-sample SNR weights from the fitted envelope decay.
    Returns (PhaseSeries, diagnostics dict); flagged discontinuities are
    reported in the diagnostics, not raised.
    """
    from .signalsim import snr_profile

    fid = record.fid
    filtered = bandpass_zero_phase(fid, record.fs, spec)
    analytic = AnalyticRecord(values=analytic_signal(filtered), fs=record.fs)
    phase = unwrap_phase(analytic.values, record.fs)
    g = spec.edge_guard(record.fs) if guard is None else guard
    if 2 * g >= phase.phi.size - 16:
        raise EdgeError("edge guard leaves too few samples to fit")
    snr = snr_profile(record, analytic.envelope) if weights else None
    trimmed = PhaseSeries(
        phi=phase.phi[g : phase.phi.size - g],
        fs=record.fs,
        t0=g / record.fs,
        weights=None if snr is None else snr[g : phase.phi.size - g],
    )
    # detect on the guarded region only: edge transients are excluded from
    # fits for the same reason they would false-trigger the detector
    bad = find_phase_discontinuities(trimmed, band_hz=spec.bandwidth)
    diagnostics = {
        "discontinuities": bad,
        "first_bad_time": float(trimmed.t0 + bad[0] / record.fs) if bad.size else None,
        "guard": g,
        "enbw": spec.enbw(record.fs),
        "envelope": analytic.envelope,
    }
    return trimmed, diagnostics
