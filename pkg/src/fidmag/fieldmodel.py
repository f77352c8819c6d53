"""Magnetic field synthesis: static value, white noise, line harmonics,
and the feed-forward compensation waveform with actuator dynamics.

Field traces are scalar |B| samples.  Harmonic amplitudes are stored as rms
values and converted to peak (sqrt(2)) at synthesis time; white noise of
amplitude spectral density s_B is realised as i.i.d. Gaussian samples of
variance s_B^2 fs / 2, i.e. flat to Nyquist.  Grid drift is modelled as a
constant per-realisation frequency offset applied to each harmonic in
proportion to its order.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from .errors import AliasingError, DomainError, RangeError

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class Harmonic:
    frequency: float  # Hz
    rms_amplitude: float  # T
    phase: float = 0.0  # rad

    def __post_init__(self):
        if self.frequency <= 0:
            raise DomainError("harmonic frequency must be positive")
        if self.rms_amplitude < 0:
            raise DomainError("harmonic amplitude must be non-negative")


def _as_harmonics(items) -> tuple[Harmonic, ...]:
    out = []
    for h in items:
        out.append(h if isinstance(h, Harmonic) else Harmonic(*h))
    return tuple(out)


@dataclass(frozen=True)
class FieldModel:
    """Stochastic + harmonic description of the scalar field."""

    b0: float = 0.0  # T
    white_noise_asd: float = 0.0  # s_B, T/sqrt(Hz); S_BB = s_B^2
    harmonics: tuple[Harmonic, ...] = ()
    line_frequency: float = 50.0  # Hz
    line_drift: float = 0.0  # Hz, offset of the fundamental, scaled by order
    rng_seed: int | None = None

    def __post_init__(self):
        if self.white_noise_asd < 0:
            raise DomainError("white noise ASD must be non-negative")
        if self.line_frequency <= 0:
            raise DomainError("line frequency must be positive")
        object.__setattr__(self, "harmonics", _as_harmonics(self.harmonics))

    @property
    def s_bb(self) -> float:
        """One-sided white power spectral density, T^2/Hz."""
        return self.white_noise_asd**2

    def harmonic_order(self, h: Harmonic) -> int:
        return max(1, round(h.frequency / self.line_frequency))

    def effective_frequency(self, h: Harmonic) -> float:
        return h.frequency + self.harmonic_order(h) * self.line_drift

    def content_hash(self) -> str:
        payload = repr(
            (
                self.b0,
                self.white_noise_asd,
                tuple((h.frequency, h.rms_amplitude, h.phase) for h in self.harmonics),
                self.line_frequency,
                self.line_drift,
            )
        )
        return hashlib.sha1(payload.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class CompensationField:
    """Programmable anti-phase field source and its hardware limits."""

    harmonics: tuple[Harmonic, ...] = ()
    actuator_time_constant: float = 40e-6  # s
    max_amplitude: float = 6.61e-6  # T
    bandwidth_limit: float = 10e3  # Hz, validation limit for programmed tones
    trigger_phase_error: float = 0.0  # rad at the fundamental, scaled by order

    def __post_init__(self):
        if self.actuator_time_constant <= 0:
            raise DomainError("actuator time constant must be positive")
        if self.max_amplitude <= 0:
            raise DomainError("actuator amplitude limit must be positive")
        object.__setattr__(self, "harmonics", _as_harmonics(self.harmonics))

    @property
    def peak_sum(self) -> float:
        return SQRT2 * sum(h.rms_amplitude for h in self.harmonics)


@dataclass
class FieldTrace:
    """Sampled field realisation with provenance for replay."""

    samples: np.ndarray  # T
    fs: float  # Hz
    duration: float  # s
    provenance: dict = field(default_factory=dict)
    clipped: bool = False

    def __post_init__(self):
        if len(self.samples) != round(self.fs * self.duration):
            raise DomainError("trace length inconsistent with fs * duration")
        if not np.all(np.isfinite(self.samples)):
            raise DomainError("trace contains non-finite samples")

    @property
    def t(self) -> np.ndarray:
        return np.arange(len(self.samples)) / self.fs


def harmonic_sum(model: FieldModel, t: np.ndarray) -> np.ndarray:
    """Deterministic harmonic content of the model at times t."""
    out = np.zeros_like(t)
    for h in model.harmonics:
        f_eff = model.effective_frequency(h)
        out += SQRT2 * h.rms_amplitude * np.sin(2 * np.pi * f_eff * t + h.phase)
    return out


def sample_field_trace(
    model: FieldModel, fs: float, duration: float, seed=None
) -> FieldTrace:
    """Realise the field model at rate fs over the given duration.

    The noise stream depends only on (seed, n); the deterministic harmonic
    sum is added on top, so traces sharing a seed are identical up to that
    sum regardless of the harmonic table.
    """
    if duration <= 0 or fs <= 0:
        raise DomainError("fs and duration must be positive")
    f_max = max((model.effective_frequency(h) for h in model.harmonics), default=0.0)
    if model.harmonics and fs <= 2 * f_max:
        raise AliasingError(f"fs={fs} Hz cannot represent harmonics up to {f_max} Hz")
    n = round(fs * duration)
    t = np.arange(n) / fs
    b = model.b0 + harmonic_sum(model, t)
    if model.white_noise_asd > 0:
        rng = np.random.default_rng(model.rng_seed if seed is None else seed)
        sigma = model.white_noise_asd * math.sqrt(fs / 2.0)
        b = b + rng.normal(0.0, sigma, n)
    else:
        b = b + np.zeros(n)
    return FieldTrace(
        samples=b,
        fs=fs,
        duration=duration,
        provenance={
            "model_hash": model.content_hash(),
            "seed": model.rng_seed if seed is None else seed,
        },
    )


def apply_actuator(ideal: FieldTrace, comp: CompensationField) -> FieldTrace:
    """Single-pole low-pass response of the coil driver, then amplitude clip.

    Discrete one-pole with pole exp(-dt/tau): unity dc gain, analog-matched
    gain/lag for f well below fs (recommend fs > 10/tau).  Clipping at
    +-max_amplitude sets the ``clipped`` flag rather than raising.
    """
    dt = 1.0 / ideal.fs
    a = math.exp(-dt / comp.actuator_time_constant)
    y = lfilter([1.0 - a], [1.0, -a], ideal.samples)
    limit = comp.max_amplitude
    clipped = bool(np.any(np.abs(y) > limit))
    if clipped:
        y = np.clip(y, -limit, limit)
    return FieldTrace(
        samples=y,
        fs=ideal.fs,
        duration=ideal.duration,
        provenance={**ideal.provenance, "actuator_tau": comp.actuator_time_constant},
        clipped=clipped or ideal.clipped,
    )


def compensation_waveform(fit, comp: CompensationField, fs: float, duration: float) -> FieldTrace:
    """Anti-phase replica of the fitted interference, through the actuator.

    ``fit`` is an ``estimation.HarmonicFit`` (or any object with a
    ``components`` sequence of (frequency_hz, rms_amplitude_t, phase_rad)
    triples).  Each component is negated and synthesised at its *fitted*
    frequency, offset by the trigger phase error scaled by harmonic order;
    the result passes through ``apply_actuator``.
    """
    comps = getattr(fit, "components", fit)
    line_f = getattr(fit, "line_frequency", None)
    programmed = []
    for c in comps:
        f_hz, a_rms, phase = c[:3] if isinstance(c, tuple) else (c.frequency, c.rms_amplitude, c.phase)
        if a_rms < 0:
            raise DomainError("fitted amplitude must be non-negative")
        if f_hz > comp.bandwidth_limit:
            raise RangeError(f"component at {f_hz} Hz exceeds the actuator bandwidth limit")
        order = max(1, round(f_hz / line_f)) if line_f else 1
        programmed.append(Harmonic(f_hz, a_rms, phase + math.pi + order * comp.trigger_phase_error))
    programmed_comp = replace(comp, harmonics=tuple(programmed))
    n = round(fs * duration)
    t = np.arange(n) / fs
    ideal = np.zeros(n)
    for h in programmed:
        ideal += SQRT2 * h.rms_amplitude * np.sin(2 * np.pi * h.frequency * t + h.phase)
    trace = FieldTrace(
        samples=ideal,
        fs=fs,
        duration=duration,
        provenance={"programmed": [(h.frequency, h.rms_amplitude, h.phase) for h in programmed]},
    )
    return apply_actuator(trace, programmed_comp)
