"""Field estimators, sensitivity formulas, and the frequency-estimation
Cramer-Rao calculus.

The dc estimator is a weighted linear regression of the unwrapped phase,
phi = omega t + phi0, with per-sample weights equal to the envelope-derived
SNR profile (the best linear unbiased weighting for heteroskedastic phase
noise).  The reported standard error is model based: residual phase power is
decomposed into a white detector term 1/SNR_w (full-bandwidth equivalent)
and a red field term gamma^2 S_BB tau / 4 pi^2 estimated from the residual
spectrum, and both are propagated through the continuum regression formula
sigma_omega = (2 delta_phi / tau^{3/2}) sqrt(3 / fs).  A naive
independent-sample regression error would understate the uncertainty by
orders of magnitude after narrowband filtering, because the residuals are
strongly correlated; the spectral budget reproduces the true estimator
variance (and hence the Cramer-Rao bound) in the detector-limited regime.

All sensitivity formulas use the running gamma(B_est) rather than gamma_0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dsp import SpectrumEstimate, power_spectrum
from .errors import ConditioningError, DomainError
from .physics import AtomicSpecies, MicrowaveDressing, UNDRESSED, invert_field, running_gamma
from .signalsim import PhaseSeries


@dataclass
class DcEstimate:
    """Result of the dc phase regression."""

    b_est: float  # T
    phi_est: float  # rad, reference phase at t = 0
    omega_est: float  # rad/s
    sigma_omega: float  # rad/s
    delta_b_dc: float  # T
    delta_phi: float  # rad, full-bandwidth-equivalent rms residual
    weighted_mean_snr: float
    residuals: np.ndarray
    gamma_used: float
    s_shot_hat: float  # rad^2/Hz
    s_bb_hat: float  # T^2/Hz
    n_samples: int

    _tau: float = 0.0

    def budget(self) -> "SensitivityBudget":
        shot = 1.0 / self.weighted_mean_snr
        fld = self.gamma_used**2 * self.s_bb_hat * self._tau / (4 * math.pi**2)
        corner = corner_frequency(self.s_bb_hat, self.s_shot_hat, self.gamma_used) if self.s_bb_hat > 0 else 0.0
        return SensitivityBudget(
            delta_phi_shot_sq=shot, delta_phi_field_sq=fld, corner_frequency=corner, s_shot=self.s_shot_hat
        )

    def to_dict(self, include_residuals: bool = False) -> dict:
        out = {
            "b_est_t": self.b_est,
            "phi_est_rad": self.phi_est,
            "omega_est_rad_per_s": self.omega_est,
            "sigma_omega_rad_per_s": self.sigma_omega,
            "delta_b_dc_t": self.delta_b_dc,
            "delta_phi_rad": self.delta_phi,
            "weighted_mean_snr": self.weighted_mean_snr,
            "weighted_mean_snr_db": 10 * math.log10(self.weighted_mean_snr) if self.weighted_mean_snr > 0 else None,
            "gamma_used_rad_per_s_t": self.gamma_used,
            "s_shot_rad2_per_hz": self.s_shot_hat,
            "s_bb_t2_per_hz": self.s_bb_hat,
            "n_samples": self.n_samples,
            "residual_rms_rad": float(np.sqrt(np.mean(self.residuals**2))),
        }
        if include_residuals:
            out["residuals_rad"] = self.residuals.tolist()
        return out


@dataclass(frozen=True)
class HarmonicComponent:
    frequency: float  # Hz
    rms_amplitude: float  # T
    phase: float  # rad, field convention sqrt(2) a sin(2 pi f t + phase)
    amplitude_sigma: float  # T


@dataclass
class HarmonicFit:
    components: list[HarmonicComponent]
    line_frequency: float
    omega_est: float = 0.0
    residual_rms: float = 0.0

    def amplitudes(self) -> np.ndarray:
        return np.array([c.rms_amplitude for c in self.components])


@dataclass(frozen=True)
class SensitivityBudget:
    """Decomposition of residual phase variance into shot and field terms."""

    delta_phi_shot_sq: float  # rad^2
    delta_phi_field_sq: float  # rad^2
    corner_frequency: float  # Hz
    s_shot: float  # rad^2/Hz

    @property
    def total_sq(self) -> float:
        return self.delta_phi_shot_sq + self.delta_phi_field_sq


@dataclass(frozen=True)
class PassbandBudget:
    max_enbw: float  # Hz
    threshold_snr_db: float  # dB, for the band supplied (or the max band)


def _weighted_slope(t, phi, w):
    s0 = w.sum()
    if s0 <= 0:
        raise ConditioningError("all weights are zero")
    t_bar = (w * t).sum() / s0
    u = t - t_bar
    s2 = (w * u * u).sum()
    if s2 <= 0 or not np.isfinite(s2):
        raise ConditioningError("time base is degenerate (constant t)")
    omega = (w * u * phi).sum() / s2
    phi_bar = (w * phi).sum() / s0
    phi0 = phi_bar - omega * t_bar
    return omega, phi0, u, s2


def fit_dc_phase(
    phase: PhaseSeries,
    weights: np.ndarray | None = None,
    species: AtomicSpecies | None = None,
    dressing: MicrowaveDressing = UNDRESSED,
    sbb_band: tuple[float, float] = (10.0, 300.0),
    psd_resolution: float | None = None,
    psd_window: float | None = None,
) -> DcEstimate:
    """Weighted linear fit of phi(t) = omega t + phi0, mapped to field units.

    ``weights`` is the per-sample SNR profile in absolute units (defaults to
    ``phase.weights``); with no weights an ordinary least-squares fit is
    performed and the shot level is read off the residual-spectrum plateau.
    ``psd_window`` limits the residual-PSD estimate to the early portion of
    the record (seconds) where the SNR is still high; by default the window
    holds the samples whose SNR is within a factor 4 of the initial value.
    """
    if phase.phi.size < 100:
        raise DomainError("need at least 100 phase samples")
    if species is None:
        raise DomainError("an atomic species is required to map frequency to field")
    t = phase.t
    snr_i = weights if weights is not None else phase.weights
    w = np.ones_like(phase.phi) if snr_i is None else np.asarray(snr_i, dtype=float)
    if w.shape != phase.phi.shape:
        raise DomainError("weights must match the phase samples")

    omega, phi0, u, s2 = _weighted_slope(t, phase.phi, w)
    residuals = phase.phi - (phi0 + omega * t)
    fs = phase.fs
    tau = phase.phi.size / fs

    # --- shot-noise term ------------------------------------------------
    if snr_i is not None:
        # BLUE with w = SNR_i: Var_shot(omega) = 1 / sum(SNR_i u_i^2)
        var_shot = 1.0 / s2
        snr_w = 12.0 * s2 / (fs * tau**3)
    else:
        var_shot = None  # from the spectral plateau below
        snr_w = None

    # --- residual spectrum ----------------------------------------------
    if psd_window is None and snr_i is not None and snr_i.size:
        ref = float(np.max(snr_i[: max(8, snr_i.size // 64)]))
        good = np.nonzero(snr_i >= ref / 4.0)[0]
        n_win = int(good[-1]) + 1 if good.size else phase.phi.size
    else:
        n_win = phase.phi.size if psd_window is None else min(phase.phi.size, round(psd_window * fs))
    n_win = max(n_win, min(phase.phi.size, 512))
    tau_win = n_win / fs
    res = psd_resolution if psd_resolution is not None else max(10.0, 4.0 / tau_win)
    spec = power_spectrum(residuals[:n_win], fs, res, unit="rad")

    if snr_i is not None:
        s_shot_psd = float(np.mean(2.0 / (fs * np.maximum(snr_i[:n_win], 1e-300))))
        s_shot_eq = 2.0 / (fs * snr_w)
    else:
        upper = spec.frequencies > 0.5 * spec.frequencies[-1]
        s_shot_psd = float(np.median(spec.psd[upper]))
        s_shot_eq = s_shot_psd
        snr_w = 2.0 / (fs * s_shot_eq)
        var_shot = 12.0 / (fs * snr_w * tau**3)

    gamma0 = species.gamma_0
    f_lo = max(sbb_band[0], 2.0 * spec.resolution)
    f_hi = min(sbb_band[1], spec.frequencies[-1])
    sel = (spec.frequencies >= f_lo) & (spec.frequencies <= f_hi)
    if np.any(sel):
        excess = np.maximum(spec.psd[sel] - s_shot_psd, 0.0)
        s_bb_hat = float(np.mean(excess * (2 * np.pi * spec.frequencies[sel]) ** 2) / gamma0**2)
    else:
        s_bb_hat = 0.0

    # --- budget and mapping to field ------------------------------------
    delta_phi_sq = 1.0 / snr_w + gamma0**2 * s_bb_hat * tau / (4 * math.pi**2)
    delta_phi = math.sqrt(delta_phi_sq)
    sigma_omega = 2.0 * delta_phi / tau**1.5 * math.sqrt(3.0 / fs)

    b_est = invert_field(species, abs(omega), dressing)
    gamma_b = running_gamma(species, b_est, dressing) if b_est > 0 else gamma0
    est = DcEstimate(
        b_est=b_est,
        phi_est=phi0,
        omega_est=omega,
        sigma_omega=sigma_omega,
        delta_b_dc=sigma_omega / gamma_b,
        delta_phi=delta_phi,
        weighted_mean_snr=snr_w,
        residuals=residuals,
        gamma_used=gamma_b,
        s_shot_hat=s_shot_eq,
        s_bb_hat=s_bb_hat,
        n_samples=phase.phi.size,
    )
    est._tau = tau
    return est


def fit_harmonics(
    phase: PhaseSeries,
    line_frequency: float,
    n_harmonics: int,
    species: AtomicSpecies,
    b_hint: float | None = None,
    weights: np.ndarray | None = None,
) -> HarmonicFit:
    """Least-squares harmonic interference fit on the phase function.

    Fits {1, t} plus sine/cosine pairs at the odd multiples of the line
    frequency (k = 1, 3, ..., 2 n_harmonics - 1) and converts phase-domain
    amplitudes to field rms through the integral relation: a phase component
    of peak amplitude P at frequency f corresponds to a field harmonic of
    rms P * 2 pi f / (gamma sqrt(2)).  Quadrature uncertainties come from
    the residual spectral density local to each harmonic, so they stay
    honest for strongly correlated (band-filtered) residuals.
    """
    if n_harmonics < 1:
        raise DomainError("need at least one harmonic")
    if line_frequency <= 0:
        raise DomainError("line frequency must be positive")
    tau = phase.phi.size / phase.fs
    if tau * line_frequency < 2.0:
        raise ConditioningError("record shorter than two line cycles")
    orders = [2 * i + 1 for i in range(n_harmonics)]
    t = phase.t
    snr_i = weights if weights is not None else phase.weights
    w = np.ones_like(phase.phi) if snr_i is None else np.asarray(snr_i, dtype=float)

    cols = [np.ones_like(t), t - t.mean()]
    for k in orders:
        arg = 2 * np.pi * k * line_frequency * t
        cols.append(np.sin(arg))
        cols.append(np.cos(arg))
    x = np.column_stack(cols)
    gram = x.T @ (x * w[:, None])
    if np.linalg.cond(gram) > 1e12:
        raise ConditioningError("harmonic design matrix is ill conditioned")
    beta = np.linalg.solve(gram, x.T @ (w * phase.phi))
    residuals = phase.phi - x @ beta
    omega = float(beta[1])

    # sum of squared pseudoinverse coefficients per column, for honest
    # variances: a = G^-1 X^T W  =>  a a^T = G^-1 X^T W^2 X G^-1
    gram_inv = np.linalg.inv(gram)
    m2 = x.T @ (x * (w * w)[:, None])
    coef_sq_sums = np.diag(gram_inv @ m2 @ gram_inv)

    res_spec = power_spectrum(residuals, phase.fs, max(4.0 / tau, 1.0 / tau + 1e-12), unit="rad")
    line_bins = [k * line_frequency for k in orders]

    b_ref = b_hint if b_hint is not None else invert_field(species, abs(omega))
    gamma_b = running_gamma(species, b_ref) if b_ref > 0 else species.gamma_0

    comps = []
    for j, k in enumerate(orders):
        f_k = k * line_frequency
        beta_s = beta[2 + 2 * j]
        beta_c = beta[3 + 2 * j]
        p_amp = math.hypot(beta_s, beta_c)
        theta = math.atan2(beta_s, -beta_c)
        a_rms = p_amp * 2 * np.pi * f_k / (gamma_b * math.sqrt(2.0))
        s_local = _local_psd(res_spec, f_k, exclude=line_bins)
        var_quad = s_local * (phase.fs / 2.0) * float(coef_sq_sums[2 + 2 * j])
        sigma_a = math.sqrt(max(var_quad, 0.0)) * 2 * np.pi * f_k / (gamma_b * math.sqrt(2.0))
        comps.append(HarmonicComponent(frequency=f_k, rms_amplitude=a_rms, phase=theta, amplitude_sigma=sigma_a))
    return HarmonicFit(
        components=comps,
        line_frequency=line_frequency,
        omega_est=omega,
        residual_rms=float(np.sqrt(np.mean(residuals**2))),
    )


def _local_psd(spec: SpectrumEstimate, f_k: float, exclude, half_width_bins: int = 12) -> float:
    df = spec.resolution
    sel = np.abs(spec.frequencies - f_k) <= half_width_bins * df
    for f_x in exclude:
        sel &= np.abs(spec.frequencies - f_x) > 2 * df
    if not np.any(sel):
        return float(np.median(spec.psd))
    return float(np.mean(spec.psd[sel]))


def critical_time(n_sigma: float, s_bb: float, species: AtomicSpecies) -> float:
    """Interrogation time at which |phase noise| = pi/2 with n-sigma margin:
    pi^2 / (2 n^2 gamma^2 S_BB)."""
    if s_bb <= 0:
        raise DomainError("S_BB must be positive")
    return math.pi**2 / (2.0 * n_sigma**2 * species.gamma_0**2 * s_bb)


def ramsey_project(phi):
    """Projective single-fringe phase readout: arcsin(sin(phi)) + hop flag.

    The flag marks phases whose principal-fringe inference is wrong, i.e.
    the centred wrap of phi exceeds pi/2 in magnitude.
    """
    phi = np.asarray(phi, dtype=float)
    inferred = np.arcsin(np.sin(phi))
    wrapped = np.mod(phi + np.pi, 2 * np.pi) - np.pi
    hop = np.abs(wrapped) > np.pi / 2
    if phi.ndim == 0:
        return float(inferred), bool(hop)
    return inferred, hop


def passband_budget(snr: float, fs: float, enbw: float | None = None) -> PassbandBudget:
    """Bandwidth side of the threshold condition for phase-slope estimation.

    max ENBW = (fs/2) SNR / 10^{3/5}; conversely the threshold SNR for a
    given equivalent noise bandwidth is 6 dB + 10 log10(2 ENBW / fs).
    """
    if snr <= 0:
        raise DomainError("SNR must be positive")
    max_enbw = 0.5 * fs * snr / 10 ** (3.0 / 5.0)
    band = enbw if enbw is not None else max_enbw
    threshold_db = 6.0 + 10.0 * math.log10(2.0 * band / fs)
    return PassbandBudget(max_enbw=max_enbw, threshold_snr_db=threshold_db)


def phase_noise_psd_model(f, s_bb: float, snr: float, fs: float, species: AtomicSpecies):
    """Two-term phase PSD: red field noise gamma^2 S_BB / (4 pi^2 f^2) plus
    the white detector floor 2 / (fs SNR)."""
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise DomainError("model is defined for f > 0")
    gamma = species.gamma_0
    out = gamma**2 * s_bb / (4 * np.pi**2 * f**2) + 2.0 / (fs * snr)
    return float(out) if out.ndim == 0 else out


def corner_frequency(s_bb: float, s_shot: float, gamma: float) -> float:
    """Frequency where the red field term equals the white detector floor."""
    if s_shot <= 0 or s_bb < 0:
        raise DomainError("need positive shot floor and non-negative S_BB")
    return gamma * math.sqrt(s_bb) / (2 * math.pi * math.sqrt(s_shot))


def rms_noise_amplitude(spectrum: SpectrumEstimate, f_max: float) -> float:
    """Equivalent rms field amplitude sqrt(integral_0^fmax S_BB df), T.

    The integral is floored at zero: a shot-subtracted spectrum may carry
    (unbiased) negative excursions.
    """
    if spectrum.frequencies[-1] < f_max:
        raise DomainError(f"spectrum covers only up to {spectrum.frequencies[-1]:.1f} Hz")
    sel = spectrum.frequencies <= f_max
    return float(math.sqrt(max(np.trapezoid(spectrum.psd[sel], spectrum.frequencies[sel]), 0.0)))


def _gamma_for(species: AtomicSpecies, b: float | None) -> float:
    return species.gamma_0 if b is None else running_gamma(species, b)


def dc_sensitivity_from_residuals(
    delta_phi: float, tau: float, fs: float, species: AtomicSpecies, b: float | None = None
) -> float:
    """dc sensitivity from the rms phase residual: (2 dphi / gamma tau^1.5) sqrt(3/fs)."""
    if tau <= 0 or fs <= 0:
        raise DomainError("tau and fs must be positive")
    return 2.0 * delta_phi / (_gamma_for(species, b) * tau**1.5) * math.sqrt(3.0 / fs)


def dc_sensitivity_from_snr(
    snr: float, tau: float, fs: float, species: AtomicSpecies, b: float | None = None
) -> float:
    """Detector-limited dc sensitivity (1 / gamma tau^1.5) sqrt(12 / fs SNR);
    identical to the Cramer-Rao form expressed in field units."""
    if snr <= 0:
        raise DomainError("SNR must be positive")
    return 1.0 / (_gamma_for(species, b) * tau**1.5) * math.sqrt(12.0 / (fs * snr))


def ac_sensitivity(f: float, snr: float, fs: float, tau: float, species: AtomicSpecies, b: float | None = None) -> float:
    """ac sensitivity 2 pi f / (gamma sqrt(fs tau SNR)); multiply by sqrt(tau)
    for the bandwidth-normalised figure."""
    if f >= fs / 2:
        raise DomainError("ac frequency beyond Nyquist")
    if snr <= 0:
        raise DomainError("SNR must be positive")
    return 2 * math.pi * f / (_gamma_for(species, b) * math.sqrt(fs * tau * snr))


def crlb_frequency_variance(snr: float, n_samples: int, fs: float, exact: bool = True) -> float:
    """Cramer-Rao bound on angular-frequency variance, (rad/s)^2.

    Exact form 12 fs^2 / (SNR N (N^2 - 1)); the large-N form replaces
    N(N^2-1) by N^3 and is indistinguishable beyond N ~ 1e4.
    """
    if n_samples < 3:
        raise DomainError("need at least three samples")
    if snr <= 0:
        raise DomainError("SNR must be positive")
    n = float(n_samples)
    denom = n * (n * n - 1.0) if exact else n**3
    return 12.0 * fs * fs / (snr * denom)
