"""Canned scenarios.

Two scales are used throughout: the full acquisition scale (5 MSa/s, 604 kHz
carrier at 86.0121261 uT) and a desk scale with the carrier rescaled to
60 kHz at 500 kSa/s, preserving the carrier/Nyquist and band/carrier ratios
so the Monte Carlo suites run in minutes.  Laboratory harmonic amplitudes
are the measured odd line harmonics; their phases are arbitrary but fixed.
"""

from __future__ import annotations

import math

from .fieldmodel import CompensationField, FieldModel, Harmonic
from .physics import MicrowaveDressing, load_species, null_quadratic
from .scenario import BandSpec, FfcProtocol, RecordSpec, Scenario
from .signalsim import DecayModel

BIAS_FIELD_T = 86.0121261e-6
LAB_HARMONICS = (
    Harmonic(50.0, 41.92e-9, 0.6),
    Harmonic(150.0, 10.88e-9, 2.1),
    Harmonic(250.0, 2.0e-9, 4.4),
)
LAB_FLOOR_ASD = 250e-12  # T/sqrt(Hz), compensated-environment white floor
QUIET_FLOOR_ASD = 100e-12  # T/sqrt(Hz), typical laboratory figure


def desk_field_for_carrier(carrier_hz: float = 60e3) -> float:
    """Static field whose precession rate sits at the desk-scale carrier."""
    sp = load_species()
    return 2 * math.pi * carrier_hz / sp.gamma_0


def nulled_dressing(b0: float = BIAS_FIELD_T) -> MicrowaveDressing:
    """Operating-point dressing: quadratic shift nulled at the bias field."""
    sp = load_species()
    template = MicrowaveDressing(rabi_frequency=2 * math.pi * 6e3, detuning=2 * math.pi * 150e3, enabled=True)
    return null_quadratic(sp, b0, template, "rabi")


def full_scale_single_shot(noise_floor: bool = False, base_seed: int = 20260801, trials: int = 100) -> Scenario:
    """Compensated single-shot preset at acquisition scale.

    ``noise_floor`` switches on the residual white field noise of the
    compensated environment (250 pT/rtHz); leave it off when the accuracy
    of the dc estimate against the injected static field is the question,
    since real field noise is then signal, not estimator error.
    """
    return Scenario(
        name="full_scale_single_shot" + ("_floor" if noise_floor else ""),
        field_model=FieldModel(b0=BIAS_FIELD_T, white_noise_asd=LAB_FLOOR_ASD if noise_floor else 0.0),
        dressing=nulled_dressing(BIAS_FIELD_T),
        decay=DecayModel(a0=1.0, lifetime=0.530),
        record=RecordSpec(sample_rate=5e6, duration=1.0, bit_depth=16, initial_snr_db=-11.1),
        band=BandSpec(bandwidth=500.0),
        trials=trials,
        base_seed=base_seed,
    )


def desk_single_shot(duration: float = 0.32, base_seed: int = 20260802, trials: int = 50) -> Scenario:
    return Scenario(
        name="desk_single_shot",
        field_model=FieldModel(b0=desk_field_for_carrier()),
        decay=DecayModel(a0=1.0, lifetime=0.530),
        record=RecordSpec(sample_rate=500e3, duration=duration, bit_depth=16, initial_snr_db=-11.0),
        band=BandSpec(bandwidth=500.0),
        trials=trials,
        base_seed=base_seed,
    )


def harmonic_recovery(base_seed: int = 20260803, trials: int = 50) -> Scenario:
    """320 ms calibration-style record with the laboratory harmonics.

    Runs at acquisition scale: a 10x sample-rate reduction would raise the
    5 kHz-band reconstruction threshold by 10 dB and put the late record
    below it (phase slips), which is a physical statement about the
    protocol, not a simulation artefact.  A 50-trial ensemble still takes
    well under a minute.
    """
    return Scenario(
        name="harmonic_recovery",
        field_model=FieldModel(b0=BIAS_FIELD_T, harmonics=LAB_HARMONICS),
        decay=DecayModel(a0=1.0, lifetime=0.530),
        record=RecordSpec(sample_rate=5e6, duration=0.32, bit_depth=16, initial_snr_db=-11.0),
        band=BandSpec(bandwidth=5e3),
        trials=trials,
        base_seed=base_seed,
    )


def crlb_sweep(base_seed: int = 20260804, trials: int = 300) -> Scenario:
    """Attainment sweep: static field, constant SNR, 5 kHz analysis band."""
    return Scenario(
        name="crlb_sweep",
        field_model=FieldModel(b0=desk_field_for_carrier()),
        decay=DecayModel(a0=1.0, lifetime=1e6),  # constant SNR across the record
        record=RecordSpec(sample_rate=500e3, duration=0.1, bit_depth=16),
        band=BandSpec(bandwidth=5e3),
        trials=trials,
        base_seed=base_seed,
    )


def fringe_hop(base_seed: int = 20260805, trials: int = 100_000) -> Scenario:
    """White-noise Ramsey ensemble at the quiet-laboratory noise level."""
    return Scenario(
        name="fringe_hop",
        field_model=FieldModel(b0=BIAS_FIELD_T, white_noise_asd=QUIET_FLOOR_ASD),
        trials=trials,
        base_seed=base_seed,
    )


def ffc_cycle(ideal: bool = False, base_seed: int = 20260806, trials: int = 5) -> Scenario:
    """Two-shot feed-forward cancellation cycle at acquisition scale.

    The realistic variant carries the actuator time constant and a +100 mHz
    grid drift (compensation programmed at nominal line frequency); the
    ideal variant removes both.  The white field floor is off in both so the
    suppression figure isolates the cancellation physics; with the floor on,
    the before/after ratio saturates near the floor-to-harmonics ratio
    (~20 dB) regardless of actuator quality.
    """
    comp = CompensationField() if not ideal else CompensationField(actuator_time_constant=1e-9)
    return Scenario(
        name="ffc_" + ("ideal" if ideal else "realistic"),
        field_model=FieldModel(
            b0=BIAS_FIELD_T,
            harmonics=LAB_HARMONICS,
            line_drift=0.0 if ideal else 0.1,
        ),
        decay=DecayModel(a0=1.0, lifetime=0.530),
        record=RecordSpec(sample_rate=5e6, duration=0.40, bit_depth=16, initial_snr_db=-11.0),
        band=BandSpec(bandwidth=500.0),
        compensation=comp,
        ffc=FfcProtocol(),
        trials=trials,
        base_seed=base_seed,
    )


NAMED_PRESETS = {
    "full_scale_single_shot": full_scale_single_shot,
    "full_scale_single_shot_floor": lambda: full_scale_single_shot(noise_floor=True),
    "desk_single_shot": desk_single_shot,
    "harmonic_recovery": harmonic_recovery,
    "crlb_sweep": crlb_sweep,
    "fringe_hop": fringe_hop,
    "ffc_ideal": lambda: ffc_cycle(ideal=True),
    "ffc_realistic": ffc_cycle,
}
