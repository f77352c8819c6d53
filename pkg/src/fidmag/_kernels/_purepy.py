"""NumPy reference implementation of the hot kernels.

Kept semantically identical to the Cython versions in ``_fidcore.pyx``; any
formula change must land in both files (enforced by the agreement tests).
Parameter vector layout (see ``physics.kernel_params``):

    [0] e_hfs   [1] g_i*mu_B   [2] x coefficient   [3] hbar
    [4] dressed flag   [5] Omega^2/4   [6] detuning
"""

import numpy as np
from scipy.integrate import cumulative_trapezoid


def larmor_omega(b, params):
    """Precession rate (rad/s, positive) for each field sample."""
    e_hfs, gi_mub, x_coef, hbar, dressed, os4, delta = params
    x = x_coef * b
    half_e = 0.5 * e_hfs
    r_p = np.sqrt(1.0 + x + x * x)
    r_m = np.sqrt(1.0 - x + x * x)
    zee = gi_mub * b
    e1p = zee - half_e * r_p
    e1m = -zee - half_e * r_m
    if dressed != 0.0 and os4 != 0.0:
        # pi-transition detunings relative to the clock interval; the linear
        # Zeeman terms of the two manifolds cancel, leaving the radicals.
        r_0 = np.sqrt(1.0 + x * x)
        d_p = delta - e_hfs * (r_p - r_0) / hbar
        d_m = delta - e_hfs * (r_m - r_0) / hbar
        e1p = e1p + hbar * os4 / d_p
        e1m = e1m + hbar * os4 / d_m
    return (e1m - e1p) / (2.0 * hbar)


def integrate_phase(b, dt, params):
    """Cumulative trapezoidal integral of larmor_omega; phase[0] = 0."""
    omega = larmor_omega(b, params)
    return cumulative_trapezoid(omega, dx=dt, initial=0.0)


def synth_codes(phi, phi0, a0, inv_lifetime, dt, noise, inv_scale, code_min, code_max):
    """Quantised FID samples: round((A(t) sin(phi+phi0) + noise) / scale).

    ``noise`` is the pre-scaled additive noise in volts (may be length 0 for
    a noiseless record).  Returns (int32 codes, number of clipped samples).
    """
    n = phi.shape[0]
    t = dt * np.arange(n)
    v = a0 * np.exp(-inv_lifetime * t) * np.sin(phi + phi0)
    if noise.shape[0]:
        v = v + noise
    raw = np.rint(v * inv_scale)
    clipped = int(np.count_nonzero((raw < code_min) | (raw > code_max)))
    return np.clip(raw, code_min, code_max).astype(np.int32), clipped
