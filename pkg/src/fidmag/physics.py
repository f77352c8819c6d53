"""Zeeman level structure of the spin-1 ground manifold and its inversion.

Everything here is exact Breit-Rabi arithmetic for a J=1/2 alkali ground
state (F = I +- 1/2), plus the ac Zeeman shifts induced by an off-resonant
microwave coupling of the two hyperfine manifolds.  The precession
(``larmor_frequency``) and curvature (``quadratic_shift``) observables are
built from the three F=1 sublevels; a "running" gyromagnetic ratio
``running_gamma`` captures the weak field dependence, and ``invert_field``
maps a measured precession rate back to field magnitude by bisection on the
monotonic branch.

Sign conventions (documented, not propagated): the F=1 electronic
gyromagnetic ratio is negative; all frequencies returned here are positive
magnitudes, so the low-field series reads omega = gamma_0 B + c_0 B^3 with
c_0 < 0.  Microwave shift values follow the convention that the returned
``mw_ac_zeeman_shift`` is the shift of the upper (F=2) level of each coupled
pair; the F=1 partner level shifts by the negative of that value.  With a
positive detuning this raises the F=1 clock level and cancels the positive
bare quadratic shift, which is the entire point of the dressing.

All functions are pure and reentrant; array-valued field inputs are
supported where noted and dispatch to the compiled kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from . import _kernels, _toml
from .errors import DomainError, InfeasibleError, NumericError, RangeError, ResonanceError

# Fields above this are outside the weak-to-intermediate regime this model
# targets (dimensionless x stays below ~0.4).
B_GUARD_T = 0.1

# |effective detuning| below this counts as sitting on a dressing resonance.
RESONANCE_TOL_RAD_S = 2 * math.pi * 100.0

_CONSTANTS_FILE = "atomic_constants.toml"


@dataclass(frozen=True)
class AtomicSpecies:
    """Ground-state constants of one alkali species, SI units.

    ``gamma_0``, ``q_0`` and ``c_0`` are the stored low-field expansion
    coefficients of the F = I - 1/2 splitting; they must agree with the
    values derived from the g-factors (checked in the test suite, six
    significant figures).
    """

    name: str
    nuclear_spin: float
    g_j: float
    g_i: float
    e_hfs: float
    mu_b: float
    hbar: float
    gamma_0: float
    q_0: float
    c_0: float
    constants_version: int = 0

    def __post_init__(self):
        if self.e_hfs <= 0 or self.mu_b <= 0:
            raise DomainError("E_hfs and mu_B must be positive")

    @property
    def x_coefficient(self) -> float:
        """d(x)/dB for the dimensionless Breit-Rabi field variable."""
        return (self.g_j - self.g_i) * self.mu_b / self.e_hfs

    def derived_gamma_0(self) -> float:
        """gamma_0 recomputed from the g-factors (positive magnitude)."""
        return abs(5 * self.g_i - self.g_j) * self.mu_b / (4 * self.hbar)

    def derived_q_0(self) -> float:
        return (self.g_j - self.g_i) ** 2 * self.mu_b**2 / (16 * self.hbar * self.e_hfs)

    def derived_c_0(self) -> float:
        return -3 * (self.g_j - self.g_i) ** 3 * self.mu_b**3 / (32 * self.hbar * self.e_hfs**2)


@dataclass(frozen=True)
class MicrowaveDressing:
    """Off-resonant microwave coupling of the clock transition.

    ``detuning`` is the signed offset of the drive from the undressed
    |1,0> <-> |2,0> interval, in rad/s.  The laboratory operating point has
    rabi_frequency ~ 2pi x 6 kHz and detuning ~ 2pi x 150 kHz; both defaults
    are approximate calibrations, not precision values.
    """

    rabi_frequency: float = 0.0
    detuning: float = 2 * math.pi * 150e3
    enabled: bool = False

    def __post_init__(self):
        if self.rabi_frequency < 0:
            raise DomainError("Rabi frequency must be non-negative")
        if self.enabled and self.detuning == 0.0:
            raise DomainError("enabled dressing requires a nonzero detuning")

    @property
    def active(self) -> bool:
        return self.enabled and self.rabi_frequency > 0.0


UNDRESSED = MicrowaveDressing()


@dataclass(frozen=True)
class LevelEnergies:
    """The six ground-manifold energies at one field value, in joules."""

    f1: tuple[float, float, float]  # m = -1, 0, +1
    f2: tuple[float, float, float]
    dressed: bool

    def energy(self, f: int, m: int) -> float:
        levels = self.f1 if f == 1 else self.f2
        return levels[m + 1]


def load_species(name: str = "rb87", path=None) -> AtomicSpecies:
    """Load a species from the versioned constants file.

    ``path`` overrides the packaged table (same TOML layout) so calibration
    variants can be swapped in without touching the install.
    """
    if path is not None:
        with open(path, "rb") as fh:
            table = _toml.load(fh)
    else:
        src = resources.files("fidmag.data").joinpath(_CONSTANTS_FILE)
        table = _toml.loads(src.read_text())
    try:
        entry = table[name]
    except KeyError:
        raise DomainError(f"unknown species {name!r} in constants table") from None
    return AtomicSpecies(
        name=name,
        nuclear_spin=entry["nuclear_spin"],
        g_j=entry["g_j"],
        g_i=entry["g_i"],
        e_hfs=entry["hyperfine_splitting_j"],
        mu_b=entry["bohr_magneton_j_per_t"],
        hbar=entry["hbar_j_s"],
        gamma_0=entry["gamma_0_rad_per_s_t"],
        q_0=entry["q_0_rad_per_s_t2"],
        c_0=entry["c_0_rad_per_s_t3"],
        constants_version=table.get("meta", {}).get("version", 0),
    )


def _check_field(b):
    barr = np.asarray(b, dtype=float)
    if np.any(barr < 0) or np.any(~np.isfinite(barr)):
        raise RangeError("field must be finite and non-negative")
    if np.any(barr >= B_GUARD_T):
        raise RangeError(f"field beyond the {B_GUARD_T} T guard of the weak-field model")
    return barr


def breit_rabi_energy(species: AtomicSpecies, f: int, m: int, b):
    """Energy of |F=f, m> at field b (T), in joules.

    The minus branch of the square root is taken for F = I - 1/2 (our F=1
    manifold), the plus branch for F = I + 1/2.  Scalar or ndarray ``b``.
    """
    if f not in (1, 2) or m not in (-1, 0, 1):
        raise DomainError(f"(F={f}, m={m}) outside the supported sublevels")
    barr = _check_field(b)
    x = species.x_coefficient * barr
    sign = 1.0 if f == 2 else -1.0
    root = np.sqrt(1.0 + m * x + x * x)
    e = -species.e_hfs / 8.0 + species.g_i * species.mu_b * m * barr + sign * (species.e_hfs / 2.0) * root
    return float(e) if np.isscalar(b) else e


def mw_ac_zeeman_shift(species: AtomicSpecies, dressing: MicrowaveDressing, b, m: int):
    """ac Zeeman shift of the |2,m> level (rad/s); |1,m> shifts by its negative.

    m = 0 is the plain clock shift -Omega^2/(4 Delta).  For m = +-1 the
    effective detuning picks up the Zeeman offset of the pi transition,
    computed from exact level differences, so the two shifts differ in both
    magnitude and sign at fields where the Zeeman splitting is comparable to
    the detuning.
    """
    if m not in (-1, 0, 1):
        raise DomainError(f"m={m} outside the supported sublevels")
    if not dressing.enabled:
        raise DomainError("dressing must be enabled to evaluate its shift")
    if dressing.rabi_frequency == 0.0:
        return 0.0 if np.isscalar(b) else np.zeros_like(np.asarray(b, dtype=float))
    denom = _effective_detuning(species, dressing, b, m)
    if np.any(np.abs(denom) < RESONANCE_TOL_RAD_S):
        raise ResonanceError(
            f"microwave drive within {RESONANCE_TOL_RAD_S / (2 * math.pi):.0f} Hz of the m={m} resonance"
        )
    shift = -dressing.rabi_frequency**2 / (4.0 * denom)
    return float(shift) if np.isscalar(b) else shift


def _effective_detuning(species, dressing, b, m):
    if m == 0:
        scalar = np.isscalar(b)
        d = dressing.detuning
        return d if scalar else np.full(np.shape(b), d)
    de2 = breit_rabi_energy(species, 2, m, b) - breit_rabi_energy(species, 2, 0, b)
    de1 = breit_rabi_energy(species, 1, m, b) - breit_rabi_energy(species, 1, 0, b)
    return dressing.detuning - (de2 - de1) / species.hbar


def level_energies(species: AtomicSpecies, b: float, dressing: MicrowaveDressing = UNDRESSED) -> LevelEnergies:
    """All six sublevel energies, dressed when the coupling is active.

    With the coupling inactive the undressed energies are returned
    bit-for-bit (no zero-valued shift arithmetic is applied).
    """
    e1 = [breit_rabi_energy(species, 1, m, b) for m in (-1, 0, 1)]
    e2 = [breit_rabi_energy(species, 2, m, b) for m in (-1, 0, 1)]
    if not dressing.active:
        return LevelEnergies(f1=tuple(e1), f2=tuple(e2), dressed=False)
    for i, m in enumerate((-1, 0, 1)):
        q_mw = mw_ac_zeeman_shift(species, dressing, b, m)
        e1[i] = e1[i] - species.hbar * q_mw
        e2[i] = e2[i] + species.hbar * q_mw
    return LevelEnergies(f1=tuple(e1), f2=tuple(e2), dressed=True)


def larmor_frequency(species: AtomicSpecies, b, dressing: MicrowaveDressing = UNDRESSED):
    """Precession rate of the F=1 coherence, |E_{1,-1} - E_{1,+1}| / 2 hbar.

    Positive magnitude convention.  Accepts scalar or ndarray ``b``; array
    evaluation runs through the compiled kernel path.  Raises
    ``ResonanceError`` if the dressing is evaluated on a resonance.
    """
    if np.isscalar(b):
        lv = level_energies(species, b, dressing)
        return (lv.energy(1, -1) - lv.energy(1, +1)) / (2.0 * species.hbar)
    barr = _check_field(b)
    guard_dressing_window(species, dressing, float(barr.min()), float(barr.max()))
    return _kernels.impl.larmor_omega(np.ascontiguousarray(barr), kernel_params(species, dressing))


def quadratic_shift(species: AtomicSpecies, b, dressing: MicrowaveDressing = UNDRESSED):
    """Curvature observable (E_{1,+1} + E_{1,-1} - 2 E_{1,0}) / 2 hbar, rad/s.

    Undressed this is q_0 B^2 + O(B^4); the active dressing adds the
    combination of ac Zeeman shifts that the nulling procedure drives to
    zero.
    """
    lv = level_energies(species, b, dressing)
    return (lv.energy(1, +1) + lv.energy(1, -1) - 2.0 * lv.energy(1, 0)) / (2.0 * species.hbar)


# Below this field the splitting is evaluated by series to avoid forming a
# ~1e-30 J difference of ~1e-24 J energies.
_SERIES_FIELD_T = 1e-8


def running_gamma(species: AtomicSpecies, b: float, dressing: MicrowaveDressing = UNDRESSED) -> float:
    """Field-dependent gyromagnetic ratio omega(B)/B (rad s^-1 T^-1).

    Strictly positive B required; the B -> 0 limit is taken through the
    low-field series rather than a 0/0 division (undressed value gamma_0).
    """
    if b <= 0:
        raise DomainError("running gamma requires B > 0")
    if b < _SERIES_FIELD_T and not dressing.active:
        return species.gamma_0 + species.c_0 * b * b
    return larmor_frequency(species, b, dressing) / b


def invert_field(
    species: AtomicSpecies,
    omega: float,
    dressing: MicrowaveDressing = UNDRESSED,
    tol: float = 2 * math.pi * 1e-4,
    max_iter: int = 200,
) -> float:
    """Field magnitude whose precession rate equals ``omega`` (rad/s).

    Bisection on the monotonic branch of larmor_frequency containing the
    undressed first guess omega/gamma_0.  The dressed map has narrow
    non-monotonic windows around the m=+-1 resonances; requests falling
    inside such a window raise ``RangeError``.
    """
    if omega < 0:
        raise DomainError("precession rate must be non-negative")
    if omega == 0.0:
        return 0.0
    lo, hi = _monotonic_branch(species, dressing, omega / species.gamma_0)
    f_lo = larmor_frequency(species, lo, dressing) - omega if lo > 0 else -omega
    f_hi = larmor_frequency(species, hi, dressing) - omega
    if f_lo * f_hi > 0:
        raise RangeError("requested precession rate not bracketed on the monotonic branch")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = larmor_frequency(species, mid, dressing) - omega
        if abs(f_mid) < tol:
            return mid
        if f_lo * f_mid <= 0:
            hi = mid
        else:
            lo, f_lo = mid, f_mid
    raise NumericError(f"field inversion did not converge in {max_iter} iterations")


def dressing_resonance_fields(species: AtomicSpecies, dressing: MicrowaveDressing) -> list[float]:
    """Fields in (0, guard) where an m=+-1 effective detuning crosses zero."""
    if not dressing.active:
        return []
    out = []
    for m in (-1, 1):
        f = lambda b: _effective_detuning(species, dressing, b, m)  # noqa: E731
        lo, hi = 1e-12, B_GUARD_T * 0.999999
        if f(lo) * f(hi) > 0:
            continue
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if f(lo) * f(mid) <= 0:
                hi = mid
            else:
                lo = mid
        out.append(0.5 * (lo + hi))
    return sorted(out)


def guard_dressing_window(species, dressing, b_min: float, b_max: float, margin: float = 5e-8):
    """Raise if [b_min, b_max] touches a dressing resonance (with margin, T)."""
    if not dressing.active:
        return
    for b_res in dressing_resonance_fields(species, dressing):
        if b_min - margin <= b_res <= b_max + margin:
            raise ResonanceError(
                f"field range [{b_min:.3e}, {b_max:.3e}] T crosses the dressing resonance at {b_res:.3e} T"
            )


def _monotonic_branch(species, dressing, b_hint: float) -> tuple[float, float]:
    edges = [0.0, B_GUARD_T * 0.999]
    # Exclude a window around each resonance: the frequency map is singular
    # there and non-monotonic in a neighbourhood of order Omega.
    window = 5e-7
    for b_res in dressing_resonance_fields(species, dressing):
        edges.extend([b_res - window, b_res + window])
    edges = sorted(e for e in edges if 0.0 <= e <= B_GUARD_T)
    for lo, hi in zip(edges[:-1], edges[1:]):
        if lo <= b_hint <= hi:
            return lo, hi
    return edges[0], edges[-1]


def null_quadratic(
    species: AtomicSpecies,
    b: float,
    dressing_template: MicrowaveDressing,
    free_param: str = "rabi",
    target: float = 2 * math.pi * 0.1,
) -> MicrowaveDressing:
    """Dressing parameters that null the total quadratic shift at field b.

    One-dimensional bracketed root finding on |quadratic_shift| over the
    chosen free parameter ("rabi" or "detuning"), the other held at the
    template value.  Returns a dressing whose residual |q| is below
    ``target`` (default 2pi x 0.1 rad/s); raises ``InfeasibleError`` when no
    sign change exists in the search bracket.
    """
    if free_param not in ("rabi", "detuning"):
        raise DomainError(f"unknown free parameter {free_param!r}")
    template = replace(dressing_template, enabled=True)

    def q_total(value: float) -> float:
        d = _with_param(template, free_param, value)
        if not d.active:
            return quadratic_shift(species, b, UNDRESSED)
        return quadratic_shift(species, b, d)

    bare = quadratic_shift(species, b, UNDRESSED)
    if abs(bare) < target:
        return _with_param(template, free_param, 0.0 if free_param == "rabi" else template.detuning)

    if free_param == "rabi":
        omega_ref = template.rabi_frequency or 2 * math.pi * 6e3
        grid = np.linspace(0.0, 10.0 * omega_ref, 256)
    else:
        d0 = template.detuning
        grid = d0 * np.geomspace(1 / 50.0, 50.0, 256)
    values = []
    for g in grid:
        try:
            values.append(q_total(float(g)))
        except ResonanceError:
            values.append(math.nan)
    values = np.asarray(values)
    ok = np.isfinite(values)
    sign_change = None
    for i in range(len(grid) - 1):
        if ok[i] and ok[i + 1] and values[i] * values[i + 1] <= 0:
            sign_change = (float(grid[i]), float(grid[i + 1]))
            break
    if sign_change is None:
        raise InfeasibleError("total quadratic shift does not change sign in the search bracket")

    lo, hi = sign_change
    f_lo = q_total(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = q_total(mid)
        if abs(f_mid) < target and hi - lo < 1e-6 * max(abs(hi), 1.0):
            return _with_param(template, free_param, mid)
        if f_lo * f_mid <= 0:
            hi = mid
        else:
            lo, f_lo = mid, f_mid
    mid = 0.5 * (lo + hi)
    if abs(q_total(mid)) < target:
        return _with_param(template, free_param, mid)
    raise NumericError("quadratic-shift nulling did not converge")


def _with_param(template: MicrowaveDressing, free_param: str, value: float) -> MicrowaveDressing:
    if free_param == "rabi":
        return replace(template, rabi_frequency=value, enabled=True)
    return replace(template, detuning=value, enabled=True)


def kernel_params(species: AtomicSpecies, dressing: MicrowaveDressing = UNDRESSED) -> np.ndarray:
    """Pack species + dressing into the flat float vector the kernels take."""
    d_active = dressing.active
    return np.array(
        [
            species.e_hfs,
            species.g_i * species.mu_b,
            species.x_coefficient,
            species.hbar,
            1.0 if d_active else 0.0,
            dressing.rabi_frequency**2 / 4.0 if d_active else 0.0,
            dressing.detuning if d_active else 1.0,
        ],
        dtype=np.float64,
    )
