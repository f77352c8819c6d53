"""Scenario description: everything needed to replay a simulated measurement.

A scenario bundles the field model, species and dressing, decay and record
parameters, filter and estimator options, and the Monte Carlo bookkeeping
(trial count, base seed).  Scenarios serialise to plain dicts with
unit-suffixed keys and load from TOML files of the same shape; round-trips
are exact so that emitted sidecars are themselves valid configs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from . import _toml
from .errors import ValidationError
from .fieldmodel import CompensationField, FieldModel, Harmonic
from .physics import MicrowaveDressing
from .signalsim import DecayModel, SegmentSpec


@dataclass(frozen=True)
class RecordSpec:
    """Digitiser and acquisition parameters."""

    sample_rate: float = 5e6  # Hz
    duration: float = 1.0  # s, FID portion
    bit_depth: int | None = 16
    full_scale: float | None = None  # V, None -> auto
    initial_snr_db: float | None = -11.1  # sets sigma from a0; None -> sigma
    noise_sigma: float | None = None  # V, direct override
    phi_0: float | str = "random"
    segments: SegmentSpec = field(default_factory=SegmentSpec)

    def sigma_for(self, a0: float) -> float:
        if self.noise_sigma is not None:
            return self.noise_sigma
        if self.initial_snr_db is None:
            return 0.0
        return a0 / math.sqrt(2.0 * 10 ** (self.initial_snr_db / 10.0))


@dataclass(frozen=True)
class BandSpec:
    """Analysis bandpass: centre may be fixed or located automatically."""

    bandwidth: float = 500.0  # Hz
    centre: float | None = None  # Hz, None -> spectral peak heuristic
    prototype_order: int = 6


@dataclass(frozen=True)
class EstimatorOptions:
    use_weights: bool = True
    sbb_band: tuple[float, float] = (10.0, 300.0)
    psd_resolution: float | None = None
    psd_window: float | None = None
    edge_guard: int | None = None  # None -> auto from the filter


@dataclass(frozen=True)
class FfcProtocol:
    """Two-shot feed-forward cancellation cycle parameters."""

    cal_duration: float = 0.32  # s
    meas_duration: float = 0.40  # s
    cal_bandwidth: float = 5e3  # Hz
    meas_bandwidth: float = 500.0  # Hz
    n_harmonics: int = 3
    # 10 Hz keeps enough segment averages that clipping the shot-subtracted
    # spectrum at zero adds little bias to the integrated delta-B
    psd_resolution: float = 10.0  # Hz, for the before/after field spectra
    band_max: float = 300.0  # Hz, delta-B integration limit


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    species_name: str = "rb87"
    field_model: FieldModel = field(default_factory=FieldModel)
    dressing: MicrowaveDressing = field(default_factory=MicrowaveDressing)
    decay: DecayModel = field(default_factory=DecayModel)
    record: RecordSpec = field(default_factory=RecordSpec)
    band: BandSpec = field(default_factory=BandSpec)
    estimator: EstimatorOptions = field(default_factory=EstimatorOptions)
    compensation: CompensationField = field(default_factory=CompensationField)
    ffc: FfcProtocol = field(default_factory=FfcProtocol)
    trials: int = 1
    base_seed: int | None = None

    def with_(self, **kwargs) -> "Scenario":
        return replace(self, **kwargs)

    # --- serialisation ---------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "scenario": {"name": self.name, "species": self.species_name,
                         "trials": self.trials, "base_seed": self.base_seed},
            "field": {
                "b0_t": self.field_model.b0,
                "white_noise_asd_t_rthz": self.field_model.white_noise_asd,
                "line_frequency_hz": self.field_model.line_frequency,
                "line_drift_hz": self.field_model.line_drift,
                "harmonics": [[h.frequency, h.rms_amplitude, h.phase] for h in self.field_model.harmonics],
            },
            "dressing": {
                "enabled": self.dressing.enabled,
                "rabi_frequency_hz": self.dressing.rabi_frequency / (2 * math.pi),
                "detuning_hz": self.dressing.detuning / (2 * math.pi),
            },
            "decay": {"initial_amplitude_v": self.decay.a0, "lifetime_s": self.decay.lifetime},
            "record": {
                "sample_rate_hz": self.record.sample_rate,
                "duration_s": self.record.duration,
                "bit_depth": 0 if self.record.bit_depth is None else self.record.bit_depth,
                "full_scale_v": self.record.full_scale,
                "initial_snr_db": self.record.initial_snr_db,
                "noise_sigma_v": self.record.noise_sigma,
                "phi_0_rad": self.record.phi_0,
                "detector_only_s": self.record.segments.detector_only,
                "probe_on_s": self.record.segments.probe_on,
            },
            "band": {
                "bandwidth_hz": self.band.bandwidth,
                "centre_hz": self.band.centre,
                "prototype_order": self.band.prototype_order,
            },
            "estimator": {
                "use_weights": self.estimator.use_weights,
                "sbb_band_hz": list(self.estimator.sbb_band),
                "psd_resolution_hz": self.estimator.psd_resolution,
                "psd_window_s": self.estimator.psd_window,
                "edge_guard_samples": self.estimator.edge_guard,
            },
            "compensation": {
                "actuator_time_constant_s": self.compensation.actuator_time_constant,
                "max_amplitude_t": self.compensation.max_amplitude,
                "bandwidth_limit_hz": self.compensation.bandwidth_limit,
                "trigger_phase_error_rad": self.compensation.trigger_phase_error,
            },
            "ffc": {
                "cal_duration_s": self.ffc.cal_duration,
                "meas_duration_s": self.ffc.meas_duration,
                "cal_bandwidth_hz": self.ffc.cal_bandwidth,
                "meas_bandwidth_hz": self.ffc.meas_bandwidth,
                "n_harmonics": self.ffc.n_harmonics,
                "psd_resolution_hz": self.ffc.psd_resolution,
                "band_max_hz": self.ffc.band_max,
            },
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            sc = d.get("scenario", {})
            f = d.get("field", {})
            dr = d.get("dressing", {})
            dec = d.get("decay", {})
            rec = d.get("record", {})
            band = d.get("band", {})
            estd = d.get("estimator", {})
            comp = d.get("compensation", {})
            ffc = d.get("ffc", {})
            bit_depth = rec.get("bit_depth", 16)
            phi0 = rec.get("phi_0_rad", "random")
            return cls(
                name=sc.get("name", "scenario"),
                species_name=sc.get("species", "rb87"),
                trials=sc.get("trials", 1),
                base_seed=sc.get("base_seed"),
                field_model=FieldModel(
                    b0=f.get("b0_t", 0.0),
                    white_noise_asd=f.get("white_noise_asd_t_rthz", 0.0),
                    harmonics=tuple(Harmonic(*h) for h in f.get("harmonics", [])),
                    line_frequency=f.get("line_frequency_hz", 50.0),
                    line_drift=f.get("line_drift_hz", 0.0),
                ),
                dressing=MicrowaveDressing(
                    rabi_frequency=2 * math.pi * dr.get("rabi_frequency_hz", 0.0),
                    detuning=2 * math.pi * dr.get("detuning_hz", 150e3),
                    enabled=dr.get("enabled", False),
                ),
                decay=DecayModel(a0=dec.get("initial_amplitude_v", 1.0), lifetime=dec.get("lifetime_s", 0.530)),
                record=RecordSpec(
                    sample_rate=rec.get("sample_rate_hz", 5e6),
                    duration=rec.get("duration_s", 1.0),
                    bit_depth=None if bit_depth in (0, None) else int(bit_depth),
                    full_scale=rec.get("full_scale_v"),
                    initial_snr_db=rec.get("initial_snr_db", -11.1),
                    noise_sigma=rec.get("noise_sigma_v"),
                    phi_0=phi0,
                    segments=SegmentSpec(
                        detector_only=rec.get("detector_only_s", 0.050),
                        probe_on=rec.get("probe_on_s", 0.050),
                    ),
                ),
                band=BandSpec(
                    bandwidth=band.get("bandwidth_hz", 500.0),
                    centre=band.get("centre_hz"),
                    prototype_order=band.get("prototype_order", 6),
                ),
                estimator=EstimatorOptions(
                    use_weights=estd.get("use_weights", True),
                    sbb_band=tuple(estd.get("sbb_band_hz", (10.0, 300.0))),
                    psd_resolution=estd.get("psd_resolution_hz"),
                    psd_window=estd.get("psd_window_s"),
                    edge_guard=estd.get("edge_guard_samples"),
                ),
                compensation=CompensationField(
                    actuator_time_constant=comp.get("actuator_time_constant_s", 40e-6),
                    max_amplitude=comp.get("max_amplitude_t", 6.61e-6),
                    bandwidth_limit=comp.get("bandwidth_limit_hz", 10e3),
                    trigger_phase_error=comp.get("trigger_phase_error_rad", 0.0),
                ),
                ffc=FfcProtocol(
                    cal_duration=ffc.get("cal_duration_s", 0.32),
                    meas_duration=ffc.get("meas_duration_s", 0.40),
                    cal_bandwidth=ffc.get("cal_bandwidth_hz", 5e3),
                    meas_bandwidth=ffc.get("meas_bandwidth_hz", 500.0),
                    n_harmonics=ffc.get("n_harmonics", 3),
                    psd_resolution=ffc.get("psd_resolution_hz", 4.0),
                    band_max=ffc.get("band_max_hz", 300.0),
                ),
            )
        except (TypeError, KeyError) as exc:
            raise ValidationError(f"bad scenario config: {exc}") from exc

    @classmethod
    def from_toml(cls, path) -> "Scenario":
        with open(path, "rb") as fh:
            try:
                data = _toml.load(fh)
            except Exception as exc:
                raise ValidationError(f"{path}: {exc}") from exc
        return cls.from_dict(data)
