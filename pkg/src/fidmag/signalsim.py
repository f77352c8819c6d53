"""Polarimeter record synthesis: phase integration, decay, noise, quantisation.

The record layout mirrors the acquisition sequence: a detector-only segment
(electronic noise), a probe-on segment (full broadband noise, no signal,
used to calibrate sigma), then the free-induction decay after the tipping
pulse, which is treated as instantaneous.  Signal-to-noise ratio follows the
full-bandwidth convention SNR = A_rms^2 / sigma^2 = A^2 / (2 sigma^2).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import CalibrationError, DomainError, EstimationError
from .fieldmodel import FieldTrace
from .physics import AtomicSpecies, MicrowaveDressing, UNDRESSED, guard_dressing_window, kernel_params

CLIP_WARN_FRACTION = 1e-6


@dataclass
class PhaseSeries:
    """Unwrapped precession phase samples with optional per-sample weights."""

    phi: np.ndarray  # rad
    fs: float  # Hz
    t0: float = 0.0  # s, offset of phi[0]
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        if self.phi.size < 2:
            raise DomainError("phase series needs at least two samples")
        if not np.all(np.isfinite(self.phi)):
            raise DomainError("phase series contains non-finite values")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != self.phi.shape:
                raise DomainError("weights must match the phase samples")
            if np.any(self.weights < 0):
                raise DomainError("weights must be non-negative")

    @property
    def t(self) -> np.ndarray:
        return self.t0 + np.arange(self.phi.size) / self.fs

    @property
    def duration(self) -> float:
        return (self.phi.size - 1) / self.fs


@dataclass(frozen=True)
class DecayModel:
    """Exponential envelope of the polarimeter signal."""

    a0: float = 1.0  # V
    lifetime: float = 0.530  # s

    def __post_init__(self):
        if self.a0 <= 0 or self.lifetime <= 0:
            raise DomainError("amplitude and lifetime must be positive")

    def amplitude(self, t):
        return self.a0 * np.exp(-np.asarray(t) / self.lifetime)


@dataclass(frozen=True)
class SegmentSpec:
    """Durations of the pre-tip noise-characterisation segments."""

    detector_only: float = 0.050  # s
    probe_on: float = 0.050  # s

    def __post_init__(self):
        if self.detector_only < 0 or self.probe_on < 0:
            raise DomainError("segment durations must be non-negative")


@dataclass
class PolarimeterRecord:
    """Digitised polarimeter voltage record.

    ``codes`` holds integer digitiser codes when quantised (scale in V/code)
    or float volts when ``bit_depth`` is None ("float mode").  Segment
    boundaries are sample offsets of the probe-on and FID starts.
    """

    codes: np.ndarray
    scale: float | None
    fs: float
    bit_depth: int | None
    probe_start: int
    fid_start: int
    phi_0: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0 <= self.probe_start <= self.fid_start <= len(self.codes)):
            raise DomainError("segment markers must be ordered and inside the record")
        if self.bit_depth is not None:
            top = 2 ** (self.bit_depth - 1)
            if np.any(self.codes > top - 1) or np.any(self.codes < -top):
                raise DomainError("codes exceed the stated bit depth")

    @property
    def volts(self) -> np.ndarray:
        if self.bit_depth is None:
            return self.codes
        return self.codes * self.scale

    @property
    def detector_segment(self) -> np.ndarray:
        return self.volts[: self.probe_start]

    @property
    def probe_segment(self) -> np.ndarray:
        return self.volts[self.probe_start : self.fid_start]

    @property
    def fid(self) -> np.ndarray:
        return self.volts[self.fid_start :]

    @property
    def fid_duration(self) -> float:
        return (len(self.codes) - self.fid_start) / self.fs

    def noise_sigma(self) -> float:
        """Broadband noise level from the probe-on calibration segment."""
        seg = self.probe_segment
        if seg.size < 100:
            raise CalibrationError("record has no usable probe-on noise segment")
        return float(np.std(seg))


def integrate_larmor_phase(
    trace: FieldTrace, species: AtomicSpecies, dressing: MicrowaveDressing = UNDRESSED
) -> PhaseSeries:
    """Cumulative trapezoidal integral of the precession rate along a trace.

    phi(0) = 0; exact for constant fields.  Raises ``ResonanceError`` when
    the trace range touches a dressing resonance.
    """
    b = np.ascontiguousarray(trace.samples, dtype=np.float64)
    guard_dressing_window(species, dressing, float(b.min()), float(b.max()))
    phi = _kernels.impl.integrate_phase(b, 1.0 / trace.fs, kernel_params(species, dressing))
    return PhaseSeries(phi=phi, fs=trace.fs)


def synthesize_polarimeter_record(
    phase: PhaseSeries,
    decay: DecayModel,
    sigma: float,
    phi_0: float = 0.0,
    bit_depth: int | None = 16,
    full_scale: float | None = None,
    segments: SegmentSpec = SegmentSpec(),
    detector_sigma_fraction: float = 0.1,
    rng=None,
) -> PolarimeterRecord:
    """Digitise A(t) sin(phi + phi_0) + noise with pre-tip noise segments.

    ``full_scale`` is the peak input range (codes span +-full_scale); the
    default keeps 16-bit quantisation noise negligible while clearing the
    signal-plus-noise excursion (max(4 A0, A0 + 6 sigma)).  A clipped-sample
    fraction above 1e-6 is flagged in metadata and warned about, not raised.
    The detector-only segment carries ``detector_sigma_fraction * sigma`` of
    electronics-only noise (the split is not otherwise used).
    """
    if sigma < 0:
        raise DomainError("noise level must be non-negative")
    fs = phase.fs
    n_dark = round(segments.detector_only * fs)
    n_probe = round(segments.probe_on * fs)
    n_fid = phase.phi.size
    rng = np.random.default_rng() if rng is None else rng
    dark = rng.normal(0.0, detector_sigma_fraction * sigma, n_dark) if sigma > 0 else np.zeros(n_dark)
    probe = rng.normal(0.0, sigma, n_probe) if sigma > 0 else np.zeros(n_probe)
    fid_noise = rng.normal(0.0, sigma, n_fid) if sigma > 0 else np.zeros(0)

    if full_scale is None:
        full_scale = max(4.0 * decay.a0, decay.a0 + 6.0 * sigma)

    meta = {
        "a0": decay.a0,
        "lifetime": decay.lifetime,
        "sigma": sigma,
        "full_scale": full_scale,
        "snr0_db": 10 * math.log10(decay.a0**2 / (2 * sigma**2)) if sigma > 0 else math.inf,
    }

    if bit_depth is None:
        t = np.arange(n_fid) / fs
        fid = decay.amplitude(t) * np.sin(phase.phi + phi_0)
        if n_fid and fid_noise.size:
            fid = fid + fid_noise
        samples = np.concatenate([dark, probe, fid])
        return PolarimeterRecord(
            codes=samples, scale=None, fs=fs, bit_depth=None,
            probe_start=n_dark, fid_start=n_dark + n_probe, phi_0=phi_0, metadata=meta,
        )

    if bit_depth < 2 or bit_depth > 24:
        raise DomainError("bit depth must be in [2, 24]")
    scale = full_scale / 2 ** (bit_depth - 1)
    code_min = float(-(2 ** (bit_depth - 1)))
    code_max = float(2 ** (bit_depth - 1) - 1)
    fid_codes, n_clip = _kernels.impl.synth_codes(
        np.ascontiguousarray(phase.phi),
        phi_0,
        decay.a0,
        1.0 / decay.lifetime,
        1.0 / fs,
        np.ascontiguousarray(fid_noise),
        1.0 / scale,
        code_min,
        code_max,
    )
    pre = np.clip(np.rint(np.concatenate([dark, probe]) / scale), code_min, code_max).astype(np.int32)
    codes = np.concatenate([pre, fid_codes])
    clip_fraction = n_clip / max(n_fid, 1)
    meta["clip_fraction"] = clip_fraction
    if clip_fraction > CLIP_WARN_FRACTION:
        meta["clipped"] = True
        warnings.warn(f"record clipped: fraction {clip_fraction:.2e}", stacklevel=2)
    return PolarimeterRecord(
        codes=codes, scale=scale, fs=fs, bit_depth=bit_depth,
        probe_start=n_dark, fid_start=n_dark + n_probe, phi_0=phi_0, metadata=meta,
    )


def full_bandwidth_snr(
    record: PolarimeterRecord,
    window: float,
    envelope: np.ndarray | None = None,
    envelope_noise_power: float | None = None,
):
    """Windowed full-bandwidth SNR estimate over the FID, A^2 / (2 sigma^2).

    Envelope power is estimated from the analytic-signal magnitude (computed
    here if not supplied) with its noise power bias removed; sigma comes
    from the probe-on segment.  A band-filtered envelope may be passed
    together with its (smaller) ``envelope_noise_power``, e.g.
    2 sigma^2 (2 ENBW / fs); the signal amplitude is in-band either way.
    Returns (window centre times, snr).  ``window`` should cover at least
    ~100 carrier cycles for a stable estimate; that precondition is the
    caller's to meet since the carrier is not known here.
    """
    sigma = record.noise_sigma()
    if sigma == 0:
        raise CalibrationError("probe-on segment has zero variance; SNR undefined")
    fid = record.fid
    if envelope is None:
        from .dsp import analytic_signal

        envelope = np.abs(analytic_signal(fid))
    if envelope_noise_power is None:
        envelope_noise_power = 2 * sigma**2
    n_win = max(1, round(window * record.fs))
    n = (envelope.size // n_win) * n_win
    if n == 0:
        raise DomainError("window longer than the FID segment")
    p = (envelope[:n] ** 2).reshape(-1, n_win).mean(axis=1)
    snr = np.maximum(p - envelope_noise_power, 0.0) / (2 * sigma**2)
    t_centres = (np.arange(p.size) + 0.5) * n_win / record.fs
    return t_centres, snr


def fit_envelope_decay(envelope: np.ndarray, fs: float, floor_fraction: float = 0.05,
                       max_points: int = 50_000):
    """Fit A0 exp(-t/tau) to an in-band envelope by log-linear regression.

    Samples below ``floor_fraction`` of the initial envelope are excluded so
    the fit is not dragged by the noise floor; long envelopes are decimated
    to ``max_points`` (the fit is photon-noise limited long before that).
    Returns (a0, tau).
    """
    env = np.asarray(envelope, dtype=float)
    if env.size < 16:
        raise EstimationError("envelope too short to fit a decay model")
    step = max(1, env.size // max_points)
    env = env[::step]
    ref = np.median(env[: max(16, env.size // 100)])
    keep = env > floor_fraction * ref
    if keep.sum() < 16:
        raise EstimationError("envelope has no usable dynamic range for a decay fit")
    t = np.arange(env.size)[keep] * (step / fs)
    y = np.log(env[keep])
    slope, intercept = np.polyfit(t, y, 1)
    if slope >= 0:
        # non-decaying envelope: treat as constant amplitude
        return float(np.exp(intercept)), math.inf
    return float(np.exp(intercept)), float(-1.0 / slope)


def snr_profile(record: PolarimeterRecord, envelope: np.ndarray) -> np.ndarray:
    """Per-sample model SNR_i from a fitted envelope decay and measured sigma.

    This is the smooth heteroskedastic weight profile used by the weighted
    phase regression: SNR_i = A0^2 exp(-2 t_i / tau) / (2 sigma^2).
    """
    sigma = record.noise_sigma()
    if sigma == 0:
        raise CalibrationError("zero probe-on noise; SNR weights undefined (disable weighting)")
    a0, tau = fit_envelope_decay(envelope, record.fs)
    t = np.arange(envelope.size) / record.fs
    if math.isinf(tau):
        amp2 = np.full_like(t, a0**2)
    else:
        amp2 = a0**2 * np.exp(-2.0 * t / tau)
    return amp2 / (2.0 * sigma**2)
